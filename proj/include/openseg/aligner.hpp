#pragma once

// Maps chat-model class names onto the vocabulary by sentence-embedding
// cosine similarity, discarding names whose best match is not above sigma.

#include "openseg/backends/backend.hpp"
#include "openseg/reasoner/types.hpp"

#include <algorithm>
#include <future>
#include <mutex>
#include <span>

namespace openseg::aligner {

inline constexpr double kDefaultSigmaAlign = 0.5;

/// Unit-normalized embedding.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    /// Normalizes `values`; rejects empty, zero and non-finite input.
    explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) {
            fail(ErrorKind::DimError, "embedding has no components");
        }
        long double sq = 0;
        for (double v : values_) {
            if (!std::isfinite(v)) {
                fail(ErrorKind::NumericError, "embedding has a non-finite component");
            }
            sq += static_cast<long double>(v) * v;
        }
        const auto norm = std::sqrt(sq);
        if (!(norm > 0)) {
            fail(ErrorKind::NumericError, "embedding has zero norm");
        }
        for (double& v : values_) {
            v = static_cast<double>(v / norm);
        }
    }

    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::size_t dimension() const noexcept { return values_.size(); }

private:
    std::vector<double> values_;
};

/// Dot product of unit vectors, clamped to [-1, 1].
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        fail(ErrorKind::DimError, "cosine of vectors with dimensions " + std::to_string(a.dimension()) + " and " +
                                      std::to_string(b.dimension()));
    }
    long double dot = 0;
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        dot += static_cast<long double>(av[i]) * bv[i];
    }
    return std::clamp(static_cast<double>(dot), -1.0, 1.0);
}

/// Per-run text -> embedding cache. Texts missing from the cache are sent in
/// one batch; a text already in flight on another thread is awaited rather
/// than re-sent, so the backend sees each distinct string at most once.
class EmbeddingCache {
public:
    EmbeddingCache(backends::EmbedBackend& backend, std::string model = std::string(backends::kDefaultEmbedModel))
        : backend_(backend), model_(std::move(model)) {}

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) {
        std::vector<std::shared_future<EmbeddingVector>> futures(texts.size());
        std::vector<std::string> to_send;
        std::map<std::string, std::promise<EmbeddingVector>> owned;
        {
            std::lock_guard lock(mutex_);
            for (std::size_t i = 0; i < texts.size(); ++i) {
                if (auto it = entries_.find(texts[i]); it != entries_.end()) {
                    futures[i] = it->second;
                    continue;
                }
                auto& promise = owned[texts[i]];
                auto fut = promise.get_future().share();
                entries_.emplace(texts[i], fut);
                futures[i] = fut;
                to_send.push_back(texts[i]);
            }
        }
        if (!to_send.empty()) {
            try {
                backends::EmbedRequest req{model_, to_send};
                auto resp = backend_.embed(req);
                resp.validate(req);
                for (std::size_t i = 0; i < to_send.size(); ++i) {
                    owned[to_send[i]].set_value(EmbeddingVector(std::move(resp.vectors[i])));
                }
            } catch (...) {
                {
                    std::lock_guard lock(mutex_);
                    for (const auto& t : to_send) {
                        entries_.erase(t);
                    }
                }
                for (auto& [_, promise] : owned) {
                    promise.set_exception(std::current_exception());
                }
                throw;
            }
        }
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (auto& f : futures) {
            out.push_back(f.get());
        }
        return out;
    }

    [[nodiscard]] const std::string& model() const noexcept { return model_; }

private:
    backends::EmbedBackend& backend_;
    std::string model_;
    std::mutex mutex_;
    std::map<std::string, std::shared_future<EmbeddingVector>> entries_;
};

struct ExactMatch {
    ClassId class_id;
};

struct Matched {
    ClassId class_id;
    double similarity;
};

struct Discarded {
    double best_similarity;
};

using AlignmentDecision = std::variant<ExactMatch, Matched, Discarded>;

struct AlignmentOutcome {
    std::string raw_name;
    AlignmentDecision decision;

    [[nodiscard]] std::optional<ClassId> class_id() const {
        if (const auto* e = std::get_if<ExactMatch>(&decision)) return e->class_id;
        if (const auto* m = std::get_if<Matched>(&decision)) return m->class_id;
        return std::nullopt;
    }
};

/// Exact vocabulary members short-circuit. Otherwise the argmax of cosine
/// similarity over the vocabulary (lowest id on ties) is kept only when
/// strictly above `sigma`.
inline AlignmentOutcome align_class(const std::string& raw, const ClassVocabulary& vocab, EmbeddingCache& embeddings,
                                    double sigma = kDefaultSigmaAlign) {
    if (!(sigma >= -1.0 && sigma <= 1.0)) {
        fail(ErrorKind::Precondition, "sigma_align must lie in [-1, 1]");
    }
    const std::string name = normalize_class_name(raw);
    if (auto id = vocab.find(name)) {
        return {name, ExactMatch{*id}};
    }
    if (vocab.empty()) {
        return {name, Discarded{-1.0}};
    }
    std::vector<std::string> texts{name};
    for (const auto& e : vocab) {
        texts.push_back(e.name);
    }
    const auto vectors = embeddings.embed(texts);
    ClassId best_id = 0;
    double best = -2.0;
    for (std::size_t i = 1; i < vectors.size(); ++i) {
        const double s = cosine(vectors[0], vectors[i]);
        if (s > best) {
            best = s;
            best_id = static_cast<ClassId>(i - 1);
        }
    }
    if (best > sigma) {
        return {name, Matched{best_id, best}};
    }
    return {name, Discarded{best}};
}

struct AlignedBundle {
    reasoner::ReasoningBundle bundle;
    std::vector<AlignmentOutcome> outcomes;
};

/// Moves each aligned name's chain onto its vocabulary class. When two names
/// land on one class, an exact match wins, then the higher similarity, then
/// the earlier emission.
inline AlignedBundle align_bundle(const ImageRef& image, const reasoner::RawObservedClasses& raw,
                                  const std::map<std::string, reasoner::ReasonChain>& chains,
                                  const ClassVocabulary& vocab, EmbeddingCache& embeddings,
                                  double sigma = kDefaultSigmaAlign) {
    AlignedBundle out;
    out.bundle.image = image;
    std::map<ClassId, double> rank;  // exact match ranks above any cosine
    for (const auto& name : raw.names) {
        auto chain = chains.find(normalize_class_name(name));
        if (chain == chains.end()) {
            fail(ErrorKind::Precondition, "observed class '" + name + "' has no reason chain");
        }
        auto outcome = align_class(name, vocab, embeddings, sigma);
        if (auto id = outcome.class_id()) {
            const bool exact = std::holds_alternative<ExactMatch>(outcome.decision);
            const double score = exact ? 2.0 : std::get<Matched>(outcome.decision).similarity;
            auto it = rank.find(*id);
            if (it == rank.end() || score > it->second) {
                rank[*id] = score;
                reasoner::BundleEntry entry;
                entry.chain = chain->second;
                entry.provenance = reasoner::Provenance::ImageSpecific;
                if (!exact) {
                    entry.emitted_name = outcome.raw_name;
                    entry.similarity = score;
                }
                out.bundle.entries[*id] = std::move(entry);
            }
        }
        out.outcomes.push_back(std::move(outcome));
    }
    return out;
}

} // namespace openseg::aligner
