#pragma once

#include "openseg/core/types.hpp"

#include <nlohmann/json.hpp>

namespace openseg::reasoner {

struct ImageDescription {
    std::string text;
};

/// Coarse-to-fine justification for one class.
struct ReasonChain {
    std::string broad;
    std::string sub;
    std::vector<std::string> attributes;

    friend bool operator==(const ReasonChain&, const ReasonChain&) = default;

    void validate() const {
        if (broad.empty() || sub.empty()) {
            fail(ErrorKind::InvariantError, "reason chain has an empty category");
        }
        if (attributes.empty()) {
            fail(ErrorKind::InvariantError, "reason chain has no attributes");
        }
        for (const auto& a : attributes) {
            if (a.find_first_not_of(" \t\r\n") == std::string::npos) {
                fail(ErrorKind::InvariantError, "reason chain has an empty attribute");
            }
        }
    }
};

/// Names as the chat model emitted them, before alignment to the vocabulary.
struct RawObservedClasses {
    std::vector<std::string> names;
};

enum class Provenance {
    ImageSpecific,
    Generic,
    /// No reasoning requested (generic reasoning skipped); composes to the bare class prompt.
    NameOnly,
};

inline std::string_view to_string(Provenance p) {
    switch (p) {
    case Provenance::ImageSpecific: return "image-specific";
    case Provenance::Generic: return "generic";
    case Provenance::NameOnly: return "name-only";
    }
    return "unknown";
}

struct BundleEntry {
    std::optional<ReasonChain> chain;
    Provenance provenance = Provenance::Generic;
    /// Name the chat model used, when it differs from the vocabulary name.
    std::optional<std::string> emitted_name;
    std::optional<double> similarity;

    friend bool operator==(const BundleEntry&, const BundleEntry&) = default;
};

/// Image, class set and per-class reasons, with provenance per class.
struct ReasoningBundle {
    ImageRef image;
    std::map<ClassId, BundleEntry> entries;
    std::optional<ImageDescription> description;

    [[nodiscard]] std::vector<ClassId> class_ids() const {
        std::vector<ClassId> out;
        out.reserve(entries.size());
        for (const auto& [id, _] : entries) {
            out.push_back(id);
        }
        return out;
    }
};

/// One JSON object per (image, class), ordered by class id.
inline std::vector<nlohmann::json> trace_records(const ReasoningBundle& bundle, const ClassVocabulary& vocab) {
    std::vector<nlohmann::json> out;
    for (const auto& [id, entry] : bundle.entries) {
        nlohmann::json rec{{"image", bundle.image.id},
                           {"class_id", id},
                           {"class", vocab.name(id)},
                           {"provenance", to_string(entry.provenance)}};
        if (entry.emitted_name) {
            rec["emitted_name"] = *entry.emitted_name;
        }
        if (entry.similarity) {
            rec["similarity"] = *entry.similarity;
        }
        if (entry.chain) {
            rec["broad"] = entry.chain->broad;
            rec["sub"] = entry.chain->sub;
            rec["attributes"] = entry.chain->attributes;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace openseg::reasoner
