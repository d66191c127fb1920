#pragma once

#include "openseg/error.hpp"
#include "openseg/util/encoding.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace openseg {

using ClassId = std::uint32_t;

/// Reserved "unlabeled" id. Never a valid class id.
inline constexpr ClassId kIgnoreId = 65535;

/// Lowercase, trim, collapse whitespace runs, and map '_' / '-' to spaces.
inline std::string normalize_class_name(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char ch : raw) {
        auto c = static_cast<unsigned char>(ch);
        if (c == '_' || c == '-' || c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
            c == '\f') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
    }
    if (out.empty()) {
        fail(ErrorKind::NameEmpty, "class name '" + std::string(raw) + "' is empty after normalization");
    }
    return out;
}

struct ClassEntry {
    ClassId id;
    std::string name;
};

/// Candidate class set. Ids are dense 0..K-1 in construction order.
class ClassVocabulary {
public:
    ClassVocabulary() = default;

    explicit ClassVocabulary(const std::vector<std::string>& raw_names, std::string source_name = {})
        : source_name_(std::move(source_name)) {
        entries_.reserve(raw_names.size());
        for (const auto& raw : raw_names) {
            std::string name = normalize_class_name(raw);
            if (index_.contains(name)) {
                fail(ErrorKind::VocabError, "duplicate class name '" + name + "' (from '" + raw + "')");
            }
            const auto id = static_cast<ClassId>(entries_.size());
            if (id >= kIgnoreId) {
                fail(ErrorKind::RangeError, "vocabulary exceeds the id range reserved by the ignore id");
            }
            index_.emplace(name, id);
            entries_.push_back({id, std::move(name)});
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    [[nodiscard]] const std::string& source_name() const noexcept { return source_name_; }
    [[nodiscard]] const std::vector<ClassEntry>& entries() const noexcept { return entries_; }
    [[nodiscard]] auto begin() const noexcept { return entries_.begin(); }
    [[nodiscard]] auto end() const noexcept { return entries_.end(); }

    [[nodiscard]] bool contains(ClassId id) const noexcept { return id < entries_.size(); }

    [[nodiscard]] const std::string& name(ClassId id) const {
        if (!contains(id)) {
            fail(ErrorKind::RangeError, "class id " + std::to_string(id) + " outside vocabulary");
        }
        return entries_[id].name;
    }

    /// Looks up an already-normalized name.
    [[nodiscard]] std::optional<ClassId> find(std::string_view normalized) const {
        auto it = index_.find(std::string(normalized));
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    [[nodiscard]] std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) {
            out.push_back(e.name);
        }
        return out;
    }

    /// Content hash over the ordered names; keys caches that are valid per vocabulary.
    [[nodiscard]] std::string hash() const {
        std::string joined;
        for (const auto& e : entries_) {
            joined += e.name;
            joined.push_back('\n');
        }
        return util::sha256_hex(joined);
    }

private:
    std::vector<ClassEntry> entries_;
    std::map<std::string, ClassId, std::less<>> index_;
    std::string source_name_;
};

struct ImageRef {
    std::string id;
    std::filesystem::path path;
    std::uint32_t width = 0;
    std::uint32_t height = 0;

    void validate() const {
        if (width == 0 || height == 0) {
            fail(ErrorKind::GeomError, "image '" + id + "' has zero extent");
        }
    }
};

struct Geometry {
    std::uint32_t width = 0;
    std::uint32_t height = 0;

    [[nodiscard]] std::size_t pixels() const noexcept { return std::size_t{width} * height; }
    friend bool operator==(const Geometry&, const Geometry&) = default;
};

inline std::string to_string(Geometry g) {
    return std::to_string(g.width) + "x" + std::to_string(g.height);
}

/// One reason-guided mask: unbounded per-pixel logits, row-major.
struct LogitMap {
    Geometry geometry;
    std::vector<double> values;

    void validate() const {
        if (values.size() != geometry.pixels()) {
            fail(ErrorKind::GeomError, "logit map holds " + std::to_string(values.size()) +
                                           " values for geometry " + to_string(geometry));
        }
        for (double v : values) {
            if (!std::isfinite(v)) {
                fail(ErrorKind::NumericError, "logit map contains a non-finite value");
            }
        }
    }
};

/// The N reason-guided masks for one class.
struct MaskStack {
    ClassId class_id = 0;
    std::vector<LogitMap> maps;

    void validate() const {
        if (maps.empty()) {
            fail(ErrorKind::EmptyStack, "mask stack for class " + std::to_string(class_id) + " is empty");
        }
        for (const auto& m : maps) {
            if (m.geometry != maps.front().geometry) {
                fail(ErrorKind::GeomError, "mask stack maps disagree on geometry");
            }
            if (m.values.size() != m.geometry.pixels()) {
                fail(ErrorKind::GeomError, "mask stack map has wrong value count");
            }
        }
    }
};

struct BinaryMask {
    Geometry geometry;
    std::vector<bool> bits;
};

/// Per-pixel class ids plus the id -> name table written to the sidecar.
struct LabelMap {
    Geometry geometry;
    std::vector<ClassId> ids;
    ClassId ignore_id = kIgnoreId;
    std::map<ClassId, std::string> labels;

    friend bool operator==(const LabelMap&, const LabelMap&) = default;

    /// Every id must name a vocabulary class or be the ignore id.
    void validate(const ClassVocabulary& vocab) const {
        if (ids.size() != geometry.pixels()) {
            fail(ErrorKind::GeomError, "label map size does not match geometry " + to_string(geometry));
        }
        for (ClassId id : ids) {
            if (id != ignore_id && !vocab.contains(id)) {
                fail(ErrorKind::RangeError, "label id " + std::to_string(id) + " is not in the vocabulary");
            }
        }
    }
};

inline std::map<ClassId, std::string> label_table(const ClassVocabulary& vocab) {
    std::map<ClassId, std::string> out;
    for (const auto& e : vocab) {
        out.emplace(e.id, e.name);
    }
    return out;
}

} // namespace openseg
