#pragma once

#include "openseg/backends/backend.hpp"
#include "openseg/reasoner/protocol.hpp"

#include <mutex>

namespace openseg::backends {

struct TransportFailure {};
using ScriptStep = std::variant<std::string, TransportFailure>;

/// Replays a fixed sequence of replies in call order and records every request.
class ScriptedChat final : public ChatBackend {
public:
    explicit ScriptedChat(std::vector<ScriptStep> script, std::string model = "scripted-lmm")
        : script_(std::move(script)), model_(std::move(model)) {}

    ChatResponse chat(const ChatRequest& req) override {
        std::lock_guard lock(mutex_);
        traffic_.push_back(req);
        if (next_ >= script_.size()) {
            fail(ErrorKind::BackendError, "chat script exhausted after " + std::to_string(next_) + " replies");
        }
        const auto& step = script_[next_++];
        if (std::holds_alternative<TransportFailure>(step)) {
            fail(ErrorKind::BackendError, "chat transport failure (scripted)");
        }
        return {std::get<std::string>(step), "stop"};
    }

    [[nodiscard]] std::string identity() const override { return "mock-chat:" + model_; }

    [[nodiscard]] std::vector<ChatRequest> traffic() const {
        std::lock_guard lock(mutex_);
        return traffic_;
    }

private:
    std::vector<ScriptStep> script_;
    std::string model_;
    mutable std::mutex mutex_;
    std::size_t next_ = 0;
    std::vector<ChatRequest> traffic_;
};

/// Reply list indexed by the request's attempt ordinal; the last entry
/// repeats. The literal "!transport" raises a transport failure instead.
using FixtureReplies = std::vector<std::string>;

inline FixtureReplies fixture_replies(const json& node) {
    if (node.is_string()) {
        return {node.get<std::string>()};
    }
    auto out = node.get<FixtureReplies>();
    if (out.empty()) {
        fail(ErrorKind::FormatError, "fixture reply list is empty");
    }
    return out;
}

inline constexpr std::string_view kTransportMarker = "!transport";

/// Answers the reasoning protocol from a per-image fixture.
///
/// chat.json:
///   {"model": "...",
///    "images": [{"image": "<path>", "description": R, "classes": R, "reasons": R}],
///    "generic": {"<class>": R}}
/// where R is a reply string or a list of replies (see FixtureReplies). Images
/// are recognized by the SHA-256 of their bytes. Generic requests for classes
/// without an entry get a synthesized chain. Unknown images and requests
/// outside the protocol get an empty reply.
class FixtureChat final : public ChatBackend {
public:
    explicit FixtureChat(const std::filesystem::path& fixture) {
        json doc;
        try {
            doc = json::parse(detail::read_file(fixture));
            model_ = doc.value("model", std::string("mock-lmm"));
            const auto base = fixture.parent_path();
            for (const auto& img : doc.at("images")) {
                Entry e;
                e.description = fixture_replies(img.at("description"));
                e.classes = fixture_replies(img.at("classes"));
                e.reasons = fixture_replies(img.at("reasons"));
                const auto bytes = detail::read_file(base / img.at("image").get<std::string>());
                images_.emplace(util::sha256_hex(bytes), std::move(e));
            }
            if (doc.contains("generic")) {
                for (const auto& [name, replies] : doc.at("generic").items()) {
                    generic_.emplace(normalize_class_name(name), fixture_replies(replies));
                }
            }
        } catch (const json::exception& e) {
            fail(ErrorKind::FormatError, "chat fixture '" + fixture.string() + "': " + e.what());
        }
    }

    ChatResponse chat(const ChatRequest& req) override {
        req.validate();
        {
            std::lock_guard lock(mutex_);
            traffic_.push_back(req);
        }
        namespace p = reasoner::protocol;
        const std::string text = req.text();
        const FixtureReplies* replies = nullptr;
        std::string synthesized;
        if (text.starts_with(p::kGenericHeader)) {
            const std::string name = extract_class(text);
            if (auto it = generic_.find(name); it != generic_.end()) {
                replies = &it->second;
            } else {
                synthesized = name + " | object | " + name + " | distinctive shape of " + name + "; typical color of " +
                              name + "; surface texture of " + name;
            }
        } else {
            const Entry* entry = nullptr;
            if (const auto* img = req.image()) {
                if (auto it = images_.find(util::sha256_hex(img->bytes)); it != images_.end()) {
                    entry = &it->second;
                }
            }
            if (text.starts_with(p::kStep1Header)) {
                replies = entry ? &entry->description : nullptr;
            } else if (text.starts_with(p::kStep2Header)) {
                replies = entry ? &entry->classes : nullptr;
            } else if (text.starts_with(p::kStep3Header)) {
                replies = entry ? &entry->reasons : nullptr;
            }
        }
        if (replies == nullptr) {
            return {synthesized, "stop"};
        }
        const auto& reply = (*replies)[std::min<std::size_t>(req.attempt, replies->size() - 1)];
        if (reply == kTransportMarker) {
            fail(ErrorKind::BackendError, "chat transport failure (fixture)");
        }
        return {reply, "stop"};
    }

    [[nodiscard]] std::string identity() const override { return "mock-chat:" + model_; }

    [[nodiscard]] std::vector<ChatRequest> traffic() const {
        std::lock_guard lock(mutex_);
        return traffic_;
    }

private:
    struct Entry {
        FixtureReplies description;
        FixtureReplies classes;
        FixtureReplies reasons;
    };

    static std::string extract_class(const std::string& text) {
        namespace p = reasoner::protocol;
        const auto pos = text.find(std::string("\n") + std::string(p::kClassLabel));
        if (pos == std::string::npos) {
            fail(ErrorKind::BackendError, "fixture chat: generic request names no class");
        }
        const auto start = pos + 1 + p::kClassLabel.size();
        const auto end = text.find('\n', start);
        return normalize_class_name(text.substr(start, end == std::string::npos ? end : end - start));
    }

    std::string model_;
    std::map<std::string, Entry> images_;
    std::map<std::string, FixtureReplies> generic_;
    mutable std::mutex mutex_;
    std::vector<ChatRequest> traffic_;
};

/// Procedural segmentor over labeled fixture regions.
///
/// segment.json:
///   {"inside": 4, "outside": -4, "distractor": 1, "jitter": 0.25,
///    "images": [{"id": "...", "image": "<path>", "regions": "<label map .pgm>"}]}
///
/// A region is the pixel set of one named label. For each prompt a hash of
/// (image id, prompt) seeds the output. When the prompt names a region label
/// as a whole word (earliest occurrence wins, then the longer name), that
/// region gets `inside` logits and the rest `outside`. Otherwise the hash
/// selects one region that receives the weaker `distractor` response. Every
/// pixel also gets a hashed jitter in [-jitter, jitter). Values are rounded to
/// float so they survive the 32-bit wire encoding unchanged.
class MockSegment final : public SegmentBackend {
public:
    explicit MockSegment(const std::filesystem::path& fixture) {
        try {
            const auto doc = json::parse(detail::read_file(fixture));
            inside_ = doc.value("inside", 4.0);
            outside_ = doc.value("outside", -4.0);
            distractor_ = doc.value("distractor", 1.0);
            jitter_ = doc.value("jitter", 0.25);
            const auto base = fixture.parent_path();
            for (const auto& img : doc.at("images")) {
                const auto image_path = base / img.at("image").get<std::string>();
                Entry e;
                e.id = img.value("id", image_path.stem().string());
                e.regions = load_label_map(base / img.at("regions").get<std::string>());
                for (const auto& [id, name] : e.regions.labels) {
                    e.region_names.emplace_back(id, normalize_class_name(name));
                }
                images_.emplace(util::sha256_hex(detail::read_file(image_path)), std::move(e));
            }
        } catch (const json::exception& e) {
            fail(ErrorKind::FormatError, "segment fixture '" + fixture.string() + "': " + e.what());
        }
    }

    SegmentResponse segment(const SegmentRequest& req) override {
        req.validate();
        calls_.fetch_add(1, std::memory_order_relaxed);
        auto it = images_.find(util::sha256_hex(req.image_bytes));
        if (it == images_.end()) {
            fail(ErrorKind::BackendError, "mock segmentor has no fixture for this image");
        }
        const Entry& e = it->second;
        SegmentResponse resp;
        for (const auto& prompt : req.prompts) {
            resp.maps.push_back(render(e, prompt));
        }
        return resp;
    }

    [[nodiscard]] std::string identity() const override { return "mock-segment"; }
    [[nodiscard]] std::uint64_t calls() const { return calls_.load(); }

private:
    struct Entry {
        std::string id;
        LabelMap regions;
        std::vector<std::pair<ClassId, std::string>> region_names;
    };

    static bool is_word_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0;
    }

    static std::optional<ClassId> named_region(const Entry& e, const std::string& prompt) {
        std::string lowered = prompt;
        for (auto& c : lowered) {
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        std::optional<ClassId> best;
        std::size_t best_pos = std::string::npos;
        std::size_t best_len = 0;
        for (const auto& [id, name] : e.region_names) {
            for (auto pos = lowered.find(name); pos != std::string::npos; pos = lowered.find(name, pos + 1)) {
                const auto end = pos + name.size();
                const bool bounded =
                    (pos == 0 || !is_word_char(lowered[pos - 1])) && (end == lowered.size() || !is_word_char(lowered[end]));
                if (!bounded) {
                    continue;
                }
                if (pos < best_pos || (pos == best_pos && name.size() > best_len)) {
                    best = id;
                    best_pos = pos;
                    best_len = name.size();
                }
                break;
            }
        }
        return best;
    }

    LogitMap render(const Entry& e, const std::string& prompt) const {
        std::uint64_t state = util::stable_hash64(e.id + "\n" + prompt);
        double high = inside_;
        std::optional<ClassId> target = named_region(e, prompt);
        if (!target) {
            high = distractor_;
            if (!e.region_names.empty()) {
                target = e.region_names[util::splitmix64(state) % e.region_names.size()].first;
            }
        }
        LogitMap m;
        m.geometry = e.regions.geometry;
        m.values.resize(m.geometry.pixels());
        for (std::size_t i = 0; i < m.values.size(); ++i) {
            const double base = (target && e.regions.ids[i] == *target) ? high : outside_;
            const double noise = jitter_ * util::unit_symmetric(util::splitmix64(state));
            m.values[i] = static_cast<double>(static_cast<float>(base + noise));
        }
        return m;
    }

    double inside_ = 4.0;
    double outside_ = -4.0;
    double distractor_ = 1.0;
    double jitter_ = 0.25;
    std::map<std::string, Entry> images_;
    std::atomic<std::uint64_t> calls_{0};
};

/// Embedding table with hashed fallbacks for unknown strings.
///
/// embed.json: {"model": "...", "dimension": D, "vectors": {"<text>": [D numbers]}}
/// Table vectors are L2-normalized on load; keys are normalized class names.
class MockEmbed final : public EmbedBackend {
public:
    MockEmbed(std::size_t dimension, std::map<std::string, std::vector<double>> table, std::string model = "mock-embed")
        : dimension_(dimension), model_(std::move(model)) {
        if (dimension_ == 0) {
            fail(ErrorKind::DimError, "embedding dimension must be positive");
        }
        for (auto& [text, v] : table) {
            if (v.size() != dimension_) {
                fail(ErrorKind::DimError, "fixture vector for '" + text + "' has the wrong dimension");
            }
            table_.emplace(normalize_class_name(text), normalized(std::move(v)));
        }
    }

    explicit MockEmbed(const std::filesystem::path& fixture) : MockEmbed(load_fixture(fixture)) {}

    EmbedResponse embed(const EmbedRequest& req) override {
        {
            std::lock_guard lock(mutex_);
            ++calls_;
            for (const auto& t : req.texts) {
                ++requested_[t];
            }
        }
        EmbedResponse resp;
        resp.dimension = dimension_;
        for (const auto& t : req.texts) {
            resp.vectors.push_back(vector_for(t));
        }
        return resp;
    }

    /// Table entry, or a unit vector drawn from a hash of the text.
    [[nodiscard]] std::vector<double> vector_for(const std::string& text) const {
        std::string key;
        try {
            key = normalize_class_name(text);
        } catch (const Error&) {
            key = text;
        }
        if (auto it = table_.find(key); it != table_.end()) {
            return it->second;
        }
        std::uint64_t state = util::stable_hash64("embed\n" + text);
        std::vector<double> v(dimension_);
        for (auto& x : v) {
            x = util::unit_symmetric(util::splitmix64(state));
        }
        return normalized(std::move(v));
    }

    [[nodiscard]] std::string identity() const override { return "mock-embed:" + model_; }
    [[nodiscard]] std::size_t dimension() const noexcept { return dimension_; }

    [[nodiscard]] std::size_t calls() const {
        std::lock_guard lock(mutex_);
        return calls_;
    }

    /// How many times each text was sent upstream.
    [[nodiscard]] std::map<std::string, std::size_t> requested() const {
        std::lock_guard lock(mutex_);
        return requested_;
    }

private:
    struct Fixture {
        std::size_t dimension;
        std::map<std::string, std::vector<double>> table;
        std::string model;
    };

    explicit MockEmbed(Fixture f) : MockEmbed(f.dimension, std::move(f.table), std::move(f.model)) {}

    static Fixture load_fixture(const std::filesystem::path& fixture) {
        try {
            const auto doc = json::parse(detail::read_file(fixture));
            return {doc.at("dimension").get<std::size_t>(),
                    doc.at("vectors").get<std::map<std::string, std::vector<double>>>(),
                    doc.value("model", std::string("mock-embed"))};
        } catch (const json::exception& e) {
            fail(ErrorKind::FormatError, "embed fixture '" + fixture.string() + "': " + e.what());
        }
    }

    static std::vector<double> normalized(std::vector<double> v) {
        long double sq = 0;
        for (double x : v) {
            sq += static_cast<long double>(x) * x;
        }
        const double norm = std::sqrt(static_cast<double>(sq));
        if (!(norm > 0) || !std::isfinite(norm)) {
            fail(ErrorKind::NumericError, "cannot normalize a zero or non-finite vector");
        }
        for (auto& x : v) {
            x /= norm;
        }
        return v;
    }

    std::size_t dimension_;
    std::string model_;
    std::map<std::string, std::vector<double>> table_;
    mutable std::mutex mutex_;
    std::size_t calls_ = 0;
    std::map<std::string, std::size_t> requested_;
};

} // namespace openseg::backends
