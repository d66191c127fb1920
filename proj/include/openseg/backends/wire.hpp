#pragma once

// Wire shapes for the three model services. docs/wire.md is the prose
// version of what these encoders and validators enforce.

#include "openseg/core/types.hpp"

#include <nlohmann/json.hpp>

#include <variant>

namespace openseg::backends {

using nlohmann::json;

enum class Endpoint { Chat, Segment, Embed };

inline std::string_view to_string(Endpoint e) {
    switch (e) {
    case Endpoint::Chat: return "chat";
    case Endpoint::Segment: return "segment";
    case Endpoint::Embed: return "embed";
    }
    return "unknown";
}

inline constexpr double kDefaultTemperature = 0.7;
inline constexpr std::string_view kDefaultChatModel = "Qwen2.5-VL-72B-Instruct-AWQ";
inline constexpr std::string_view kDefaultEmbedModel = "all-MiniLM-L6-v2";

[[noreturn]] inline void schema_violation(Endpoint e, const std::string& what) {
    fail(ErrorKind::BackendError, std::string(to_string(e)) + " schema violation: " + what);
}

struct TextPart {
    std::string text;
    friend bool operator==(const TextPart&, const TextPart&) = default;
};

struct ImagePart {
    std::string mime = "application/octet-stream";
    std::string bytes;
    friend bool operator==(const ImagePart&, const ImagePart&) = default;
};

using ChatPart = std::variant<TextPart, ImagePart>;

struct ChatMessage {
    std::string role;
    std::vector<ChatPart> parts;
    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
    std::string model{kDefaultChatModel};
    double temperature = kDefaultTemperature;
    std::vector<ChatMessage> messages;
    /// Retry ordinal. Not part of the JSON body (the HTTP transport sends it as
    /// a header); it separates cache entries so a re-issued step is not
    /// answered with the reply that just failed to parse.
    std::uint32_t attempt = 0;

    [[nodiscard]] std::size_t image_count() const {
        std::size_t n = 0;
        for (const auto& m : messages) {
            for (const auto& p : m.parts) {
                n += std::holds_alternative<ImagePart>(p) ? 1 : 0;
            }
        }
        return n;
    }

    /// Concatenated text parts, for inspection and fixture matching.
    [[nodiscard]] std::string text() const {
        std::string out;
        for (const auto& m : messages) {
            for (const auto& p : m.parts) {
                if (const auto* t = std::get_if<TextPart>(&p)) {
                    if (!out.empty()) {
                        out.push_back('\n');
                    }
                    out += t->text;
                }
            }
        }
        return out;
    }

    [[nodiscard]] const ImagePart* image() const {
        for (const auto& m : messages) {
            for (const auto& p : m.parts) {
                if (const auto* img = std::get_if<ImagePart>(&p)) {
                    return img;
                }
            }
        }
        return nullptr;
    }

    void validate() const {
        if (!(temperature >= 0.0 && temperature <= 2.0)) {
            schema_violation(Endpoint::Chat, "temperature must lie in [0, 2]");
        }
        if (messages.empty()) {
            schema_violation(Endpoint::Chat, "request has no messages");
        }
        if (image_count() > 1) {
            schema_violation(Endpoint::Chat, "at most one image part per request");
        }
    }
};

struct ChatResponse {
    std::string text;
    std::string finish_reason = "stop";
    friend bool operator==(const ChatResponse&, const ChatResponse&) = default;
};

struct SegmentRequest {
    std::string image_bytes;
    std::vector<std::string> prompts;

    void validate() const {
        if (prompts.empty()) {
            schema_violation(Endpoint::Segment, "request carries no prompts");
        }
    }
};

struct SegmentResponse {
    std::vector<LogitMap> maps;

    /// Count and shared-geometry invariants against the originating request.
    void validate(const SegmentRequest& req) const {
        if (maps.size() != req.prompts.size()) {
            schema_violation(Endpoint::Segment, "expected " + std::to_string(req.prompts.size()) +
                                                    " logit maps, got " + std::to_string(maps.size()));
        }
        for (const auto& m : maps) {
            if (m.geometry != maps.front().geometry) {
                schema_violation(Endpoint::Segment, "logit maps do not share geometry");
            }
            if (m.geometry.pixels() == 0 || m.values.size() != m.geometry.pixels()) {
                schema_violation(Endpoint::Segment, "logit map size does not match its header");
            }
        }
    }
};

struct EmbedRequest {
    std::string model{kDefaultEmbedModel};
    std::vector<std::string> texts;
};

struct EmbedResponse {
    std::size_t dimension = 0;
    std::vector<std::vector<double>> vectors;

    void validate(const EmbedRequest& req) const {
        if (vectors.size() != req.texts.size()) {
            schema_violation(Endpoint::Embed, "expected " + std::to_string(req.texts.size()) + " vectors, got " +
                                                  std::to_string(vectors.size()));
        }
        if (dimension == 0) {
            schema_violation(Endpoint::Embed, "declared dimension is zero");
        }
        for (const auto& v : vectors) {
            if (v.size() != dimension) {
                schema_violation(Endpoint::Embed, "vector dimension differs from the declared dimension");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Chat: chat-completions shape with content parts; images as data URLs.

inline json to_json(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) {
        json content = json::array();
        for (const auto& part : m.parts) {
            if (const auto* t = std::get_if<TextPart>(&part)) {
                content.push_back({{"type", "text"}, {"text", t->text}});
            } else {
                const auto& img = std::get<ImagePart>(part);
                content.push_back(
                    {{"type", "image_url"},
                     {"image_url", {{"url", "data:" + img.mime + ";base64," + util::base64_encode(img.bytes)}}}});
            }
        }
        messages.push_back({{"role", m.role}, {"content", content}});
    }
    return {{"model", req.model}, {"temperature", req.temperature}, {"messages", messages}};
}

inline ChatRequest chat_request_from_json(const json& doc) {
    ChatRequest req;
    try {
        req.model = doc.at("model").get<std::string>();
        req.temperature = doc.value("temperature", kDefaultTemperature);
        for (const auto& m : doc.at("messages")) {
            ChatMessage msg;
            msg.role = m.at("role").get<std::string>();
            const auto& content = m.at("content");
            if (content.is_string()) {
                msg.parts.emplace_back(TextPart{content.get<std::string>()});
            } else {
                for (const auto& part : content) {
                    const auto type = part.at("type").get<std::string>();
                    if (type == "text") {
                        msg.parts.emplace_back(TextPart{part.at("text").get<std::string>()});
                    } else if (type == "image_url") {
                        const auto url = part.at("image_url").at("url").get<std::string>();
                        const auto comma = url.find(";base64,");
                        if (url.rfind("data:", 0) != 0 || comma == std::string::npos) {
                            schema_violation(Endpoint::Chat, "image_url must be a base64 data URL");
                        }
                        msg.parts.emplace_back(
                            ImagePart{url.substr(5, comma - 5), util::base64_decode(url.substr(comma + 8))});
                    } else {
                        schema_violation(Endpoint::Chat, "unknown content part type '" + type + "'");
                    }
                }
            }
            req.messages.push_back(std::move(msg));
        }
    } catch (const json::exception& e) {
        schema_violation(Endpoint::Chat, e.what());
    }
    req.validate();
    return req;
}

inline json to_json(const ChatResponse& resp) {
    return {{"choices", json::array({{{"index", 0},
                                      {"message", {{"role", "assistant"}, {"content", resp.text}}},
                                      {"finish_reason", resp.finish_reason}}})}};
}

inline ChatResponse chat_response_from_json(const json& doc) {
    try {
        const auto& choice = doc.at("choices").at(0);
        ChatResponse resp;
        const auto& content = choice.at("message").at("content");
        resp.text = content.is_null() ? std::string{} : content.get<std::string>();
        if (choice.contains("finish_reason") && choice.at("finish_reason").is_string()) {
            resp.finish_reason = choice.at("finish_reason").get<std::string>();
        }
        return resp;
    } catch (const json::exception& e) {
        schema_violation(Endpoint::Chat, e.what());
    }
}

// ---------------------------------------------------------------------------
// Segment: each map is base64 of [u32 width][u32 height][f32 * w*h], big-endian.

inline std::string encode_logit_map(const LogitMap& m) {
    std::string out;
    out.reserve(8 + 4 * m.values.size());
    util::put_u32_be(out, m.geometry.width);
    util::put_u32_be(out, m.geometry.height);
    for (double v : m.values) {
        util::put_f32_be(out, static_cast<float>(v));
    }
    return out;
}

inline LogitMap decode_logit_map(std::string_view bytes) {
    if (bytes.size() < 8) {
        schema_violation(Endpoint::Segment, "logit map shorter than its header");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    LogitMap m;
    m.geometry = {util::get_u32_be(p), util::get_u32_be(p + 4)};
    if (bytes.size() - 8 != 4 * m.geometry.pixels()) {
        schema_violation(Endpoint::Segment, "logit map payload does not match " + to_string(m.geometry));
    }
    m.values.resize(m.geometry.pixels());
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        m.values[i] = util::get_f32_be(p + 8 + 4 * i);
        if (!std::isfinite(m.values[i])) {
            schema_violation(Endpoint::Segment, "logit map contains a non-finite value");
        }
    }
    return m;
}

inline json to_json(const SegmentRequest& req) {
    return {{"image", util::base64_encode(req.image_bytes)}, {"prompts", req.prompts}};
}

inline SegmentRequest segment_request_from_json(const json& doc) {
    SegmentRequest req;
    try {
        req.image_bytes = util::base64_decode(doc.at("image").get<std::string>());
        req.prompts = doc.at("prompts").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        schema_violation(Endpoint::Segment, e.what());
    }
    req.validate();
    return req;
}

inline json to_json(const SegmentResponse& resp) {
    json maps = json::array();
    for (const auto& m : resp.maps) {
        maps.push_back(util::base64_encode(encode_logit_map(m)));
    }
    return {{"maps", maps}};
}

inline SegmentResponse segment_response_from_json(const json& doc) {
    SegmentResponse resp;
    try {
        for (const auto& m : doc.at("maps")) {
            resp.maps.push_back(decode_logit_map(util::base64_decode(m.get<std::string>())));
        }
    } catch (const json::exception& e) {
        schema_violation(Endpoint::Segment, e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::BackendError) {
            throw;
        }
        schema_violation(Endpoint::Segment, e.what());
    }
    return resp;
}

// ---------------------------------------------------------------------------
// Embed

inline json to_json(const EmbedRequest& req) {
    return {{"model", req.model}, {"texts", req.texts}};
}

inline EmbedRequest embed_request_from_json(const json& doc) {
    EmbedRequest req;
    try {
        req.model = doc.value("model", std::string(kDefaultEmbedModel));
        req.texts = doc.at("texts").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        schema_violation(Endpoint::Embed, e.what());
    }
    return req;
}

inline json to_json(const EmbedResponse& resp) {
    return {{"dimension", resp.dimension}, {"vectors", resp.vectors}};
}

inline EmbedResponse embed_response_from_json(const json& doc) {
    EmbedResponse resp;
    try {
        resp.dimension = doc.at("dimension").get<std::size_t>();
        resp.vectors = doc.at("vectors").get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
        schema_violation(Endpoint::Embed, e.what());
    }
    return resp;
}

/// Sorted-key compact dump; nlohmann objects are key-ordered, so any input
/// key order maps to the same bytes.
inline std::string canonical(const json& doc) {
    return doc.dump(-1, ' ', false, json::error_handler_t::strict);
}

inline std::string cache_key_payload(const ChatRequest& req) {
    json doc = to_json(req);
    if (req.attempt != 0) {
        doc["attempt"] = req.attempt;
    }
    return canonical(doc);
}

inline std::string cache_key_payload(const SegmentRequest& req) { return canonical(to_json(req)); }
inline std::string cache_key_payload(const EmbedRequest& req) { return canonical(to_json(req)); }

} // namespace openseg::backends
