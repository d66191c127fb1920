#pragma once

#include "openseg/backends/wire.hpp"
#include "openseg/core/raster.hpp"
#include "openseg/util/single_flight.hpp"

#include <atomic>
#include <functional>
#include <thread>

namespace openseg::backends {

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse chat(const ChatRequest& req) = 0;
    [[nodiscard]] virtual std::string identity() const = 0;
};

class SegmentBackend {
public:
    virtual ~SegmentBackend() = default;
    virtual SegmentResponse segment(const SegmentRequest& req) = 0;
    [[nodiscard]] virtual std::string identity() const = 0;
};

class EmbedBackend {
public:
    virtual ~EmbedBackend() = default;
    virtual EmbedResponse embed(const EmbedRequest& req) = 0;
    [[nodiscard]] virtual std::string identity() const = 0;
};

struct CacheStats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t disk_hits = 0;
};

/// Content-addressed store of canonical response payloads, keyed by
/// (endpoint, sha256 of the canonical request). Optionally persisted under
/// `<dir>/<endpoint>/<hash>.json` so real-model runs can be replayed.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    static std::string key(Endpoint endpoint, std::string_view canonical_request) {
        return std::string(to_string(endpoint)) + "/" + util::sha256_hex(canonical_request);
    }

    template <typename Fetch>
    std::string get_or_fetch(Endpoint endpoint, std::string_view canonical_request, Fetch&& fetch) {
        const std::string k = key(endpoint, canonical_request);
        bool produced = false;
        std::string payload = entries_.get_or_compute(k, [&] {
            produced = true;
            if (dir_) {
                const auto file = *dir_ / (k + ".json");
                if (std::filesystem::is_regular_file(file)) {
                    disk_hits_.fetch_add(1, std::memory_order_relaxed);
                    return detail::read_file(file);
                }
            }
            misses_.fetch_add(1, std::memory_order_relaxed);
            std::string fresh = std::invoke(std::forward<Fetch>(fetch));
            if (dir_) {
                persist(*dir_ / (k + ".json"), fresh);
            }
            return fresh;
        });
        if (!produced) {
            hits_.fetch_add(1, std::memory_order_relaxed);
        }
        return payload;
    }

    [[nodiscard]] CacheStats stats() const {
        return {hits_.load(), misses_.load(), disk_hits_.load()};
    }

    [[nodiscard]] const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

private:
    static void persist(const std::filesystem::path& file, std::string_view payload) {
        auto tmp = file;
        tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
        detail::write_file(tmp, payload);
        std::filesystem::rename(tmp, file);
    }

    std::optional<std::filesystem::path> dir_;
    util::SingleFlightCache<std::string, std::string> entries_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
    std::atomic<std::uint64_t> disk_hits_{0};
};

class CachedChat final : public ChatBackend {
public:
    CachedChat(ChatBackend& upstream, ResponseCache& cache) : upstream_(upstream), cache_(cache) {}

    ChatResponse chat(const ChatRequest& req) override {
        req.validate();
        const auto payload = cache_.get_or_fetch(Endpoint::Chat, cache_key_payload(req),
                                                 [&] { return canonical(to_json(upstream_.chat(req))); });
        return chat_response_from_json(json::parse(payload));
    }

    [[nodiscard]] std::string identity() const override { return upstream_.identity(); }

private:
    ChatBackend& upstream_;
    ResponseCache& cache_;
};

class CachedSegment final : public SegmentBackend {
public:
    CachedSegment(SegmentBackend& upstream, ResponseCache& cache) : upstream_(upstream), cache_(cache) {}

    SegmentResponse segment(const SegmentRequest& req) override {
        const auto payload = cache_.get_or_fetch(Endpoint::Segment, cache_key_payload(req), [&] {
            auto resp = upstream_.segment(req);
            resp.validate(req);
            return canonical(to_json(resp));
        });
        auto resp = segment_response_from_json(json::parse(payload));
        resp.validate(req);
        return resp;
    }

    [[nodiscard]] std::string identity() const override { return upstream_.identity(); }

private:
    SegmentBackend& upstream_;
    ResponseCache& cache_;
};

class CachedEmbed final : public EmbedBackend {
public:
    CachedEmbed(EmbedBackend& upstream, ResponseCache& cache) : upstream_(upstream), cache_(cache) {}

    EmbedResponse embed(const EmbedRequest& req) override {
        const auto payload = cache_.get_or_fetch(Endpoint::Embed, cache_key_payload(req), [&] {
            auto resp = upstream_.embed(req);
            resp.validate(req);
            return canonical(to_json(resp));
        });
        auto resp = embed_response_from_json(json::parse(payload));
        resp.validate(req);
        return resp;
    }

    [[nodiscard]] std::string identity() const override { return upstream_.identity(); }

private:
    EmbedBackend& upstream_;
    ResponseCache& cache_;
};

} // namespace openseg::backends
