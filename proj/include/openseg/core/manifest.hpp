#pragma once

#include "openseg/core/raster.hpp"

#include <set>

namespace openseg {

struct ManifestRecord {
    ImageRef image;
    std::filesystem::path gt_semantic;
    std::optional<std::filesystem::path> gt_panoptic;
};

struct DatasetManifest {
    ClassVocabulary vocabulary;
    /// Classes resolved per instance in panoptic output; everything else is stuff.
    std::set<ClassId> thing_ids;
    std::vector<ManifestRecord> records;
};

namespace detail {

inline std::filesystem::path resolve_relative(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline void require_file(const std::filesystem::path& path, const std::string& record_id, const char* what) {
    if (!std::filesystem::is_regular_file(path)) {
        fail(ErrorKind::IoError,
             "record '" + record_id + "': " + what + " '" + path.string() + "' does not exist");
    }
}

} // namespace detail

/// Loads and fully validates a manifest. Relative paths resolve against the
/// manifest's directory. Image geometry comes from the semantic ground truth.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) {
        fail(ErrorKind::IoError, "manifest '" + path.string() + "' does not exist");
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::FormatError, "manifest '" + path.string() + "': " + e.what());
    }
    const auto base = path.parent_path();

    DatasetManifest manifest;
    try {
        manifest.vocabulary = ClassVocabulary(doc.at("vocabulary").get<std::vector<std::string>>(),
                                              doc.value("name", path.stem().string()));
        for (const auto& raw : doc.value("things", std::vector<std::string>{})) {
            auto id = manifest.vocabulary.find(normalize_class_name(raw));
            if (!id) {
                fail(ErrorKind::VocabError, "thing class '" + raw + "' is not in the vocabulary");
            }
            manifest.thing_ids.insert(*id);
        }

        std::set<std::string> seen_ids;
        for (const auto& rec : doc.at("images")) {
            ManifestRecord r;
            r.image.id = rec.at("id").get<std::string>();
            if (r.image.id.empty() || !seen_ids.insert(r.image.id).second) {
                fail(ErrorKind::FormatError, "record id '" + r.image.id + "' is empty or duplicated");
            }
            // Ids name output files, so keep them to a portable file-name alphabet.
            const bool safe = r.image.id.front() != '.' &&
                              std::all_of(r.image.id.begin(), r.image.id.end(), [](char c) {
                                  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
                              });
            if (!safe) {
                fail(ErrorKind::FormatError, "record id '" + r.image.id + "' is not a portable file name");
            }
            r.image.path = detail::resolve_relative(base, rec.at("image").get<std::string>());
            r.gt_semantic = detail::resolve_relative(base, rec.at("gt_semantic").get<std::string>());
            if (rec.contains("gt_panoptic") && !rec.at("gt_panoptic").is_null()) {
                r.gt_panoptic = detail::resolve_relative(base, rec.at("gt_panoptic").get<std::string>());
            }
            manifest.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::FormatError, "manifest '" + path.string() + "': " + e.what());
    }

    for (auto& r : manifest.records) {
        detail::require_file(r.image.path, r.image.id, "image");
        detail::require_file(r.gt_semantic, r.image.id, "semantic ground truth");
        if (r.gt_panoptic) {
            detail::require_file(*r.gt_panoptic, r.image.id, "panoptic ground truth");
        }

        LabelMap gt;
        try {
            gt = load_label_map(r.gt_semantic);
            gt.validate(manifest.vocabulary);
        } catch (const Error& e) {
            fail(e.kind() == ErrorKind::RangeError ? ErrorKind::VocabError : e.kind(),
                 "record '" + r.image.id + "': " + e.what());
        }
        for (const auto& [id, name] : gt.labels) {
            if (!manifest.vocabulary.contains(id) || manifest.vocabulary.name(id) != normalize_class_name(name)) {
                fail(ErrorKind::VocabError, "record '" + r.image.id + "': ground-truth label " + std::to_string(id) +
                                                " ('" + name + "') disagrees with the vocabulary");
            }
        }
        r.image.width = gt.geometry.width;
        r.image.height = gt.geometry.height;

        if (r.gt_panoptic) {
            PanopticMap pan;
            try {
                pan = load_panoptic(*r.gt_panoptic);
            } catch (const Error& e) {
                fail(e.kind(), "record '" + r.image.id + "': " + e.what());
            }
            if (pan.geometry != gt.geometry) {
                fail(ErrorKind::GeomError, "record '" + r.image.id + "': panoptic and semantic geometry differ");
            }
            for (const auto& s : pan.segments) {
                if (!manifest.vocabulary.contains(s.class_id)) {
                    fail(ErrorKind::VocabError, "record '" + r.image.id + "': panoptic segment " +
                                                    std::to_string(s.segment_id) + " has an unknown class");
                }
            }
        }
    }
    return manifest;
}

} // namespace openseg
