#pragma once

#include "openseg/core/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <iterator>
#include <span>

namespace openseg {

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::IoError, "cannot write '" + path.string() + "'");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(ErrorKind::IoError, "short write to '" + path.string() + "'");
    }
}

/// Netpbm header scanner: whitespace-separated tokens with '#' comments.
class PnmHeader {
public:
    explicit PnmHeader(std::string_view bytes) : bytes_(bytes) {}

    std::string token() {
        skip_space();
        std::string out;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            out.push_back(bytes_[pos_++]);
        }
        return out;
    }

    std::uint32_t number(const char* what) {
        const std::string tok = token();
        if (tok.empty() || tok.size() > 9 ||
            !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            fail(ErrorKind::FormatError, std::string("malformed ") + what + " in netpbm header");
        }
        return static_cast<std::uint32_t>(std::stoul(tok));
    }

    /// Exactly one whitespace byte separates the header from the samples.
    std::size_t data_offset() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            fail(ErrorKind::FormatError, "netpbm header not terminated by whitespace");
        }
        return pos_ + 1;
    }

private:
    void skip_space() {
        while (pos_ < bytes_.size()) {
            const auto c = static_cast<unsigned char>(bytes_[pos_]);
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Grayscale raster as stored on disk; samples are widened to 32 bits.
struct GrayRaster {
    Geometry geometry;
    std::uint32_t maxval = 65535;
    std::vector<std::uint32_t> samples;
};

inline GrayRaster decode_pgm(std::string_view bytes) {
    detail::PnmHeader header(bytes);
    if (header.token() != "P5") {
        fail(ErrorKind::FormatError, "not a binary PGM (P5) raster");
    }
    GrayRaster r;
    r.geometry.width = header.number("width");
    r.geometry.height = header.number("height");
    r.maxval = header.number("maxval");
    if (r.geometry.width == 0 || r.geometry.height == 0) {
        fail(ErrorKind::FormatError, "PGM raster has zero extent");
    }
    if (r.maxval == 0 || r.maxval > 65535) {
        fail(ErrorKind::FormatError, "PGM maxval must be in 1..65535");
    }
    const std::size_t offset = header.data_offset();
    const std::size_t sample_bytes = r.maxval > 255 ? 2 : 1;
    const std::size_t need = r.geometry.pixels() * sample_bytes;
    if (bytes.size() - offset != need) {
        fail(ErrorKind::FormatError, "PGM payload is " + std::to_string(bytes.size() - offset) +
                                         " bytes, expected " + std::to_string(need));
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
    r.samples.resize(r.geometry.pixels());
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        r.samples[i] = sample_bytes == 2 ? util::get_u16_be(p + 2 * i) : p[i];
        if (r.samples[i] > r.maxval) {
            fail(ErrorKind::RangeError, "PGM sample exceeds maxval");
        }
    }
    return r;
}

/// Always writes maxval 65535 with big-endian 16-bit samples.
inline std::string encode_pgm16(Geometry geometry, std::span<const std::uint32_t> samples) {
    if (samples.size() != geometry.pixels()) {
        fail(ErrorKind::GeomError, "raster sample count does not match geometry");
    }
    std::string out = "P5\n" + std::to_string(geometry.width) + " " + std::to_string(geometry.height) +
                      "\n65535\n";
    out.reserve(out.size() + 2 * samples.size());
    for (std::uint32_t s : samples) {
        if (s > 65535) {
            fail(ErrorKind::RangeError,
                 "id " + std::to_string(s) + " exceeds the 16-bit raster range (maxval 65535)");
        }
        util::put_u16_be(out, static_cast<std::uint16_t>(s));
    }
    return out;
}

/// "<dir>/<stem>.pgm" -> "<dir>/<stem>.labels.json"
inline std::filesystem::path label_sidecar_path(const std::filesystem::path& raster) {
    auto side = raster;
    side.replace_extension(".labels.json");
    return side;
}

inline std::string encode_label_sidecar(const LabelMap& map) {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [id, name] : map.labels) {
        labels[std::to_string(id)] = name;
    }
    nlohmann::json doc{{"ignore_id", map.ignore_id}, {"labels", labels}};
    return doc.dump(2) + "\n";
}

inline void save_label_map(const LabelMap& map, const std::filesystem::path& path) {
    const std::string raster = encode_pgm16(map.geometry, map.ids);
    const std::string sidecar = encode_label_sidecar(map);
    detail::write_file(path, raster);
    detail::write_file(label_sidecar_path(path), sidecar);
}

/// Reads the raster and, when present, its sidecar. Ids outside the sidecar's
/// table (other than the ignore id) are rejected.
inline LabelMap load_label_map(const std::filesystem::path& path) {
    const GrayRaster raster = decode_pgm(detail::read_file(path));
    LabelMap map;
    map.geometry = raster.geometry;
    map.ids = raster.samples;
    const auto side = label_sidecar_path(path);
    if (!std::filesystem::exists(side)) {
        return map;
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(detail::read_file(side));
        map.ignore_id = doc.at("ignore_id").get<ClassId>();
        for (const auto& [key, name] : doc.at("labels").items()) {
            map.labels.emplace(static_cast<ClassId>(std::stoul(key)), name.get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::FormatError, "label sidecar '" + side.string() + "': " + e.what());
    } catch (const std::logic_error& e) {
        fail(ErrorKind::FormatError, "label sidecar '" + side.string() + "' has a non-numeric id");
    }
    for (ClassId id : map.ids) {
        if (id != map.ignore_id && !map.labels.contains(id)) {
            fail(ErrorKind::RangeError,
                 "'" + path.string() + "' contains id " + std::to_string(id) + " missing from its sidecar");
        }
    }
    return map;
}

struct PanopticSegment {
    std::uint32_t segment_id = 0;
    ClassId class_id = 0;

    friend bool operator==(const PanopticSegment&, const PanopticSegment&) = default;
};

/// Raster of segment ids (0 = void) plus the segment -> class table.
/// Segments are disjoint by construction.
struct PanopticMap {
    Geometry geometry;
    std::vector<std::uint32_t> segment_ids;
    std::vector<PanopticSegment> segments;

    friend bool operator==(const PanopticMap&, const PanopticMap&) = default;

    void validate() const {
        if (segment_ids.size() != geometry.pixels()) {
            fail(ErrorKind::GeomError, "panoptic raster does not match geometry");
        }
        std::map<std::uint32_t, ClassId> seen;
        for (const auto& s : segments) {
            if (s.segment_id == 0) {
                fail(ErrorKind::InvariantError, "segment id 0 is reserved for void");
            }
            if (!seen.emplace(s.segment_id, s.class_id).second) {
                fail(ErrorKind::InvariantError, "segment id " + std::to_string(s.segment_id) + " listed twice");
            }
        }
        for (std::uint32_t id : segment_ids) {
            if (id != 0 && !seen.contains(id)) {
                fail(ErrorKind::InvariantError,
                     "raster references segment " + std::to_string(id) + " absent from the segment list");
            }
        }
    }
};

/// Writes "<stem>.json" and the "<stem>.pgm" raster it names.
inline void save_panoptic(const PanopticMap& pan, const std::filesystem::path& json_path) {
    auto raster_path = json_path;
    raster_path.replace_extension(".pgm");
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : pan.segments) {
        segs.push_back({{"segment_id", s.segment_id}, {"class_id", s.class_id}});
    }
    nlohmann::json doc{{"raster", raster_path.filename().string()}, {"segments", segs}};
    detail::write_file(raster_path, encode_pgm16(pan.geometry, pan.segment_ids));
    detail::write_file(json_path, doc.dump(2) + "\n");
}

inline PanopticMap load_panoptic(const std::filesystem::path& json_path) {
    PanopticMap pan;
    std::filesystem::path raster_path;
    try {
        const auto doc = nlohmann::json::parse(detail::read_file(json_path));
        for (const auto& s : doc.at("segments")) {
            pan.segments.push_back({s.at("segment_id").get<std::uint32_t>(), s.at("class_id").get<ClassId>()});
        }
        raster_path = json_path.parent_path() / doc.at("raster").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::FormatError, "panoptic file '" + json_path.string() + "': " + e.what());
    }
    const GrayRaster raster = decode_pgm(detail::read_file(raster_path));
    pan.geometry = raster.geometry;
    pan.segment_ids = raster.samples;
    pan.validate();
    return pan;
}

/// Debug dump: "OSF1" magic, u32 width, u32 height, then 32-bit big-endian floats.
inline std::string encode_float_raster(Geometry geometry, std::span<const double> values) {
    std::string out = "OSF1";
    util::put_u32_be(out, geometry.width);
    util::put_u32_be(out, geometry.height);
    for (double v : values) {
        util::put_f32_be(out, static_cast<float>(v));
    }
    return out;
}

struct RgbImage {
    Geometry geometry;
    std::vector<std::uint8_t> rgb;
};

/// Binary PPM (P6, maxval 255) only; other image formats stay opaque.
inline std::optional<RgbImage> decode_ppm(std::string_view bytes) {
    if (bytes.substr(0, 2) != "P6") {
        return std::nullopt;
    }
    detail::PnmHeader header(bytes);
    header.token();
    RgbImage img;
    img.geometry.width = header.number("width");
    img.geometry.height = header.number("height");
    if (header.number("maxval") != 255) {
        return std::nullopt;
    }
    const std::size_t offset = header.data_offset();
    if (bytes.size() - offset != 3 * img.geometry.pixels()) {
        fail(ErrorKind::FormatError, "PPM payload size does not match its header");
    }
    img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
    return img;
}

inline std::string encode_ppm(const RgbImage& img) {
    std::string out = "P6\n" + std::to_string(img.geometry.width) + " " + std::to_string(img.geometry.height) +
                      "\n255\n";
    out.append(img.rgb.begin(), img.rgb.end());
    return out;
}

/// Fixed palette so overlays are reproducible across runs.
inline std::array<std::uint8_t, 3> palette_color(ClassId id) {
    if (id == kIgnoreId) {
        return {0, 0, 0};
    }
    std::uint32_t h = (id + 1) * 2654435761u;
    return {static_cast<std::uint8_t>(64 + (h >> 24) % 192), static_cast<std::uint8_t>(64 + (h >> 16) % 192),
            static_cast<std::uint8_t>(64 + (h >> 8) % 192)};
}

/// Colors the label map; blends 50/50 with the source when it is a same-sized PPM.
inline RgbImage render_overlay(const LabelMap& labels, const std::optional<RgbImage>& base) {
    RgbImage out;
    out.geometry = labels.geometry;
    out.rgb.resize(3 * labels.geometry.pixels());
    const bool blend = base && base->geometry == labels.geometry;
    for (std::size_t i = 0; i < labels.ids.size(); ++i) {
        const auto color = palette_color(labels.ids[i]);
        for (std::size_t c = 0; c < 3; ++c) {
            out.rgb[3 * i + c] = blend ? static_cast<std::uint8_t>((color[c] + base->rgb[3 * i + c]) / 2) : color[c];
        }
    }
    return out;
}

} // namespace openseg
