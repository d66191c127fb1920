#pragma once

#include "openseg/backends/backend.hpp"
#include "openseg/reasoner/parse.hpp"
#include "openseg/reasoner/prompts.hpp"
#include "openseg/util/single_flight.hpp"

#include <variant>

namespace openseg::reasoner {

inline constexpr int kDefaultRetries = 3;

struct ReasonerOptions {
    ChatOptions chat;
    /// Total attempts per step (>= 1).
    int retries = kDefaultRetries;
    /// Ask for Step-3 reasons one class per request instead of one batch.
    bool per_class_reasons = false;
};

struct ImageSpecificResult {
    ImageDescription description;
    RawObservedClasses observed;
    std::map<std::string, ReasonChain> chains;
    /// Observed names still lacking a reason after all attempts.
    std::vector<std::string> unexplained;
};

/// The chat model could not complete the protocol; the caller falls back to
/// generic reasoning for every class.
struct Fallback {
    std::string reason;
};

using ImageSpecificOutcome = std::variant<ImageSpecificResult, Fallback>;

namespace detail {

/// Issues `build(attempt)` until `parse` accepts the reply. Parse failures
/// return nullopt after the last attempt; a transport failure on the last
/// attempt is rethrown.
template <typename Build, typename Parse>
auto attempt_step(backends::ChatBackend& chat, int retries, Build&& build, Parse&& parse, std::string& last_problem)
    -> std::optional<std::invoke_result_t<Parse, const std::string&>> {
    if (retries < 1) {
        fail(ErrorKind::Precondition, "retries must be at least 1");
    }
    for (int attempt = 0; attempt < retries; ++attempt) {
        backends::ChatRequest req = build();
        req.attempt = static_cast<std::uint32_t>(attempt);
        std::string reply;
        try {
            reply = chat.chat(req).text;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::BackendError || attempt + 1 == retries) {
                throw;
            }
            last_problem = e.what();
            continue;
        }
        try {
            return parse(reply);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::ParseError && e.kind() != ErrorKind::PartialParse) {
                throw;
            }
            last_problem = e.what();
        }
    }
    return std::nullopt;
}

inline ImageDescription parse_description(const std::string& reply) {
    std::string text = trim(reply);
    if (text.empty()) {
        fail(ErrorKind::ParseError, "empty image description");
    }
    return {std::move(text)};
}

inline std::vector<std::string> dedupe(std::vector<std::string> names) {
    std::set<std::string> seen;
    std::vector<std::string> out;
    for (auto& n : names) {
        if (seen.insert(n).second) {
            out.push_back(std::move(n));
        }
    }
    return out;
}

} // namespace detail

/// Steps 1 -> 2 -> 3 for one image. Step 2 sees the Step-1 description; Step 3
/// sees only the image and the Step-2 classes. Partial Step-3 answers are
/// retried, and after the last attempt the largest answer is kept with the
/// remaining names reported as unexplained.
inline ImageSpecificOutcome run_image_specific_reasoning(backends::ChatBackend& chat, const ImageData& image,
                                                         const ClassVocabulary& vocab,
                                                         const ReasonerOptions& options = {}) {
    std::string problem;
    auto description = detail::attempt_step(
        chat, options.retries, [&] { return build_description_prompt(image, options.chat); },
        [](const std::string& r) { return detail::parse_description(r); }, problem);
    if (!description) {
        return Fallback{"step 1: " + problem};
    }

    auto observed = detail::attempt_step(
        chat, options.retries, [&] { return build_class_filter_prompt(image, *description, vocab, options.chat); },
        [](const std::string& r) { return parse_observed_classes(r); }, problem);
    if (!observed) {
        return Fallback{"step 2: " + problem};
    }
    observed->names = detail::dedupe(std::move(observed->names));

    ImageSpecificResult result{*description, *observed, {}, {}};

    auto ask = [&](const std::vector<std::string>& names) {
        ReasonParse best;
        auto parsed = detail::attempt_step(
            chat, options.retries, [&] { return build_reason_prompt(image, names, options.chat); },
            [&](const std::string& r) {
                try {
                    return parse_reason_chains(r, names);
                } catch (const PartialParseError& e) {
                    if (e.result().chains.size() > best.chains.size()) {
                        best = e.result();
                    }
                    throw;
                }
            },
            problem);
        return parsed ? *parsed : best;
    };

    if (options.per_class_reasons) {
        for (const auto& name : observed->names) {
            auto parsed = ask({name});
            result.chains.merge(parsed.chains);
        }
    } else {
        result.chains = ask(observed->names).chains;
    }
    if (result.chains.empty()) {
        return Fallback{"step 3: " + problem};
    }
    for (const auto& name : observed->names) {
        if (!result.chains.contains(name)) {
            result.unexplained.push_back(name);
        }
    }
    return result;
}

/// Generic (image-independent) reasoning with a run-wide cache keyed by
/// (vocabulary hash, class id). Concurrent requests for one key reach the
/// backend once.
class GenericReasoner {
public:
    explicit GenericReasoner(ReasonerOptions options = {}) : options_(std::move(options)) {}

    std::map<ClassId, ReasonChain> run(backends::ChatBackend& chat, const ClassVocabulary& vocab,
                                       const std::vector<ClassId>& classes) {
        if (classes.empty()) {
            fail(ErrorKind::Precondition, "generic reasoning requested for an empty class list");
        }
        const std::string vocab_hash = vocab.hash();
        std::map<ClassId, ReasonChain> out;
        for (ClassId id : classes) {
            const std::string& name = vocab.name(id);
            out.emplace(id, cache_.get_or_compute({vocab_hash, id}, [&] {
                std::string problem;
                auto parsed = detail::attempt_step(
                    chat, options_.retries, [&] { return build_generic_reason_prompt(name, options_.chat); },
                    [&](const std::string& r) { return parse_reason_chains(r, {name}); }, problem);
                if (!parsed) {
                    fail(ErrorKind::ParseError, "generic reasoning for '" + name + "' failed: " + problem);
                }
                backend_calls_.fetch_add(1, std::memory_order_relaxed);
                return parsed->chains.at(name);
            }));
        }
        return out;
    }

    /// Number of classes whose reasoning was produced by the backend (cache misses).
    [[nodiscard]] std::uint64_t produced() const { return backend_calls_.load(); }

private:
    ReasonerOptions options_;
    util::SingleFlightCache<std::pair<std::string, ClassId>, ReasonChain> cache_;
    std::atomic<std::uint64_t> backend_calls_{0};
};

/// Union of aligned image-specific and generic entries; must cover the
/// vocabulary exactly with no class supplied by both.
inline ReasoningBundle merge_reasoning(const ReasoningBundle& aligned, const ReasoningBundle& generic,
                                      const ClassVocabulary& vocab) {
    ReasoningBundle merged;
    merged.image = aligned.image;
    merged.description = aligned.description;
    for (const auto& [id, entry] : aligned.entries) {
        if (!vocab.contains(id)) {
            fail(ErrorKind::MergeError, "aligned entry " + std::to_string(id) + " outside the vocabulary");
        }
        merged.entries.emplace(id, entry);
    }
    for (const auto& [id, entry] : generic.entries) {
        if (!vocab.contains(id)) {
            fail(ErrorKind::MergeError, "generic entry " + std::to_string(id) + " outside the vocabulary");
        }
        if (merged.entries.contains(id)) {
            fail(ErrorKind::MergeError, "class '" + vocab.name(id) + "' has both image-specific and generic reasons");
        }
        merged.entries.emplace(id, entry);
    }
    for (const auto& e : vocab) {
        if (!merged.entries.contains(e.id)) {
            fail(ErrorKind::MergeError, "class '" + e.name + "' has no reasoning");
        }
    }
    return merged;
}

} // namespace openseg::reasoner
