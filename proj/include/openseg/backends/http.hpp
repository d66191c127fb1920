#pragma once

#include "openseg/backends/backend.hpp"

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <chrono>
#include <semaphore>

namespace openseg::backends {

/// Optional request header carrying ChatRequest::attempt. Services may ignore
/// it; the mock server uses it to replay scripted retries.
inline constexpr const char* kAttemptHeader = "X-Openseg-Attempt";

struct HttpOptions {
    std::chrono::milliseconds timeout{120000};
    int retries = 3;
    /// Upper bound on concurrent requests to one endpoint.
    std::ptrdiff_t max_in_flight = 4;
    httplib::Headers headers;
};

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

inline ParsedUrl parse_url(const std::string& url, std::string_view default_path) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        fail(ErrorKind::UsageError, "endpoint URL '" + url + "' lacks a scheme");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, std::string(default_path)};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// POSTs JSON with retry on transport failures, 429 and 5xx.
class JsonPoster {
public:
    JsonPoster(Endpoint endpoint, const std::string& url, HttpOptions options)
        : endpoint_(endpoint),
          url_(parse_url(url, std::string("/") + std::string(to_string(endpoint)))),
          options_(std::move(options)),
          slots_(std::max<std::ptrdiff_t>(1, options_.max_in_flight)) {}

    json post(const json& body, const httplib::Headers& extra = {}) {
        const std::string payload = body.dump();
        httplib::Headers headers = options_.headers;
        headers.insert(extra.begin(), extra.end());
        std::string last_error;
        const int attempts = std::max(1, options_.retries);
        for (int attempt = 1; attempt <= attempts; ++attempt) {
            slots_.acquire();
            httplib::Result res = [&] {
                httplib::Client client(url_.origin);
                const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
                const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
                client.set_connection_timeout(secs.count(), usecs.count());
                client.set_read_timeout(secs.count(), usecs.count());
                client.set_write_timeout(secs.count(), usecs.count());
                return client.Post(url_.path, headers, payload, "application/json");
            }();
            slots_.release();
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                fail(ErrorKind::BackendError, std::string(to_string(endpoint_)) + " endpoint returned HTTP " +
                                                  std::to_string(res->status) + ": " + res->body);
            }
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                schema_violation(endpoint_, std::string("response is not JSON: ") + e.what());
            }
        }
        fail(ErrorKind::BackendError, std::string(to_string(endpoint_)) + " endpoint failed after " +
                                          std::to_string(attempts) + " attempts (" + last_error + ")");
    }

    [[nodiscard]] std::string url() const { return url_.origin + url_.path; }

private:
    Endpoint endpoint_;
    ParsedUrl url_;
    HttpOptions options_;
    std::counting_semaphore<1024> slots_;
};

class HttpChat final : public ChatBackend {
public:
    HttpChat(const std::string& url, HttpOptions options) : poster_(Endpoint::Chat, url, std::move(options)) {}

    ChatResponse chat(const ChatRequest& req) override {
        req.validate();
        return chat_response_from_json(poster_.post(to_json(req), {{kAttemptHeader, std::to_string(req.attempt)}}));
    }

    [[nodiscard]] std::string identity() const override { return "http:" + poster_.url(); }

private:
    JsonPoster poster_;
};

class HttpSegment final : public SegmentBackend {
public:
    HttpSegment(const std::string& url, HttpOptions options) : poster_(Endpoint::Segment, url, std::move(options)) {}

    SegmentResponse segment(const SegmentRequest& req) override {
        req.validate();
        auto resp = segment_response_from_json(poster_.post(to_json(req)));
        resp.validate(req);
        return resp;
    }

    [[nodiscard]] std::string identity() const override { return "http:" + poster_.url(); }

private:
    JsonPoster poster_;
};

class HttpEmbed final : public EmbedBackend {
public:
    HttpEmbed(const std::string& url, HttpOptions options) : poster_(Endpoint::Embed, url, std::move(options)) {}

    EmbedResponse embed(const EmbedRequest& req) override {
        auto resp = embed_response_from_json(poster_.post(to_json(req)));
        resp.validate(req);
        return resp;
    }

    [[nodiscard]] std::string identity() const override { return "http:" + poster_.url(); }

private:
    JsonPoster poster_;
};

/// Registers /chat, /segment and /embed on `server`, each backed by the given
/// backend (null skips the route). Malformed requests get 400 with a
/// diagnostic; backend failures get 502.
inline void mount_backends(httplib::Server& server, ChatBackend* chat, SegmentBackend* segment, EmbedBackend* embed) {
    auto handle = [](auto call) {
        return [call](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception& e) {
                res.status = 400;
                res.set_content(json{{"error", std::string("request is not JSON: ") + e.what()}}.dump(),
                                "application/json");
                return;
            }
            try {
                res.set_content(call(body, req).dump(), "application/json");
            } catch (const Error& e) {
                const bool client_fault = std::string_view(e.what()).find("schema violation") != std::string_view::npos;
                res.status = client_fault ? 400 : 502;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            }
        };
    };
    if (chat) {
        server.Post("/chat", handle([chat](const json& b, const httplib::Request& http) {
                        auto req = chat_request_from_json(b);
                        if (http.has_header(kAttemptHeader)) {
                            try {
                                req.attempt = static_cast<std::uint32_t>(std::stoul(http.get_header_value(kAttemptHeader)));
                            } catch (const std::exception&) {
                                schema_violation(Endpoint::Chat, std::string(kAttemptHeader) + " is not a number");
                            }
                        }
                        return to_json(chat->chat(req));
                    }));
    }
    if (segment) {
        server.Post("/segment", handle([segment](const json& b, const httplib::Request&) {
                        const auto req = segment_request_from_json(b);
                        auto resp = segment->segment(req);
                        resp.validate(req);
                        return to_json(resp);
                    }));
    }
    if (embed) {
        server.Post("/embed", handle([embed](const json& b, const httplib::Request&) {
                        const auto req = embed_request_from_json(b);
                        auto resp = embed->embed(req);
                        resp.validate(req);
                        return to_json(resp);
                    }));
    }
}

} // namespace openseg::backends
