#pragma once

#include "openseg/backends/http.hpp"
#include "openseg/reasoner/protocol.hpp"

#include <functional>

namespace openseg::backends::conformance {

struct Target {
    std::optional<std::string> chat_url;
    std::optional<std::string> segment_url;
    std::optional<std::string> embed_url;
    /// Image sent to /chat and /segment; must be one the service can process.
    std::string image_bytes;
    std::string image_mime = "image/x-portable-pixmap";
    HttpOptions http;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace detail {

inline int raw_status(const std::string& url, std::string_view default_path, const std::string& body,
                      const HttpOptions& options) {
    const auto parsed = parse_url(url, default_path);
    httplib::Client client(parsed.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout).count();
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    auto res = client.Post(parsed.path, options.headers, body, "application/json");
    return res ? res->status : -1;
}

inline void run_check(std::vector<CheckResult>& out, std::string name, const std::function<std::string()>& check) {
    CheckResult r{std::move(name), false, {}};
    try {
        r.detail = check();
        r.passed = r.detail.empty();
    } catch (const std::exception& e) {
        r.detail = e.what();
    }
    out.push_back(std::move(r));
}

} // namespace detail

/// Runs every check applicable to the configured endpoints. Each check
/// returns an empty string on success or a diagnostic.
inline std::vector<CheckResult> run(const Target& target) {
    std::vector<CheckResult> results;
    HttpOptions once = target.http;
    once.retries = 1;

    if (target.chat_url) {
        HttpChat chat(*target.chat_url, once);
        detail::run_check(results, "chat: text-only request yields a reply", [&]() -> std::string {
            ChatRequest req;
            req.messages.push_back({"user", {TextPart{"Reply with the word ok."}}});
            const auto resp = chat.chat(req);
            return resp.finish_reason.empty() ? "finish_reason missing" : "";
        });
        detail::run_check(results, "chat: request with one image attachment is accepted", [&]() -> std::string {
            ChatRequest req;
            req.messages.push_back({"user",
                                    {TextPart{std::string(reasoner::protocol::kStep1Header) + "\n" +
                                              std::string(reasoner::protocol::kStep1Body)},
                                     ImagePart{target.image_mime, target.image_bytes}}});
            chat.chat(req);
            return "";
        });
        detail::run_check(results, "chat: malformed request is rejected with 4xx", [&]() -> std::string {
            const int status = detail::raw_status(*target.chat_url, "/chat", R"({"model":"m"})", once);
            return status >= 400 && status < 500 ? "" : "expected 4xx, got " + std::to_string(status);
        });
    }

    if (target.segment_url) {
        HttpSegment seg(*target.segment_url, once);
        for (std::size_t n : {1u, 2u, 3u}) {
            detail::run_check(results, "segment: " + std::to_string(n) + " prompt(s) yield as many maps with shared geometry",
                              [&]() -> std::string {
                                  SegmentRequest req;
                                  req.image_bytes = target.image_bytes;
                                  for (std::size_t i = 0; i < n; ++i) {
                                      req.prompts.push_back("a photo of object " + std::to_string(i));
                                  }
                                  const auto resp = seg.segment(req);
                                  for (const auto& m : resp.maps) {
                                      m.validate();
                                  }
                                  return "";
                              });
        }
        detail::run_check(results, "segment: empty prompt list is rejected with 4xx", [&]() -> std::string {
            json body{{"image", util::base64_encode(target.image_bytes)}, {"prompts", json::array()}};
            const int status = detail::raw_status(*target.segment_url, "/segment", body.dump(), once);
            return status >= 400 && status < 500 ? "" : "expected 4xx, got " + std::to_string(status);
        });
    }

    if (target.embed_url) {
        HttpEmbed embed(*target.embed_url, once);
        detail::run_check(results, "embed: one vector per text at the declared dimension", [&]() -> std::string {
            EmbedRequest req;
            req.texts = {"sofa", "couch", "a photo of a dog"};
            const auto resp = embed.embed(req);
            for (const auto& v : resp.vectors) {
                for (double x : v) {
                    if (!std::isfinite(x)) {
                        return "non-finite embedding component";
                    }
                }
            }
            return "";
        });
        detail::run_check(results, "embed: empty text list yields zero vectors", [&]() -> std::string {
            EmbedRequest req;
            const auto resp = embed.embed(req);
            return resp.vectors.empty() ? "" : "expected no vectors";
        });
        detail::run_check(results, "embed: malformed request is rejected with 4xx", [&]() -> std::string {
            const int status = detail::raw_status(*target.embed_url, "/embed", R"({"texts":"sofa"})", once);
            return status >= 400 && status < 500 ? "" : "expected 4xx, got " + std::to_string(status);
        });
    }
    return results;
}

} // namespace openseg::backends::conformance
