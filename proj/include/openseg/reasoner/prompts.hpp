#pragma once

#include "openseg/backends/wire.hpp"
#include "openseg/core/raster.hpp"
#include "openseg/reasoner/protocol.hpp"
#include "openseg/reasoner/types.hpp"

#include <set>

namespace openseg::reasoner {

/// Image reference plus the opaque bytes handed to the chat model and segmentor.
struct ImageData {
    ImageRef ref;
    std::string bytes;
    std::string mime = "application/octet-stream";
};

inline std::string mime_for(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    for (auto& c : ext) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".ppm") return "image/x-portable-pixmap";
    if (ext == ".webp") return "image/webp";
    return "application/octet-stream";
}

inline ImageData load_image(const ImageRef& ref) {
    ref.validate();
    return {ref, openseg::detail::read_file(ref.path), mime_for(ref.path)};
}

struct ChatOptions {
    std::string model{backends::kDefaultChatModel};
    double temperature = backends::kDefaultTemperature;
};

namespace detail {

inline backends::ChatRequest user_request(const ChatOptions& options, std::string text, const ImageData* image) {
    backends::ChatRequest req;
    req.model = options.model;
    req.temperature = options.temperature;
    backends::ChatMessage msg{"user", {backends::TextPart{std::move(text)}}};
    if (image != nullptr) {
        msg.parts.emplace_back(backends::ImagePart{image->mime, image->bytes});
    }
    req.messages.push_back(std::move(msg));
    return req;
}

inline std::string join_lines(std::initializer_list<std::string_view> parts) {
    std::string out;
    for (auto p : parts) {
        out += p;
        out.push_back('\n');
    }
    out.pop_back();
    return out;
}

} // namespace detail

/// Step 1: global description of the scene.
inline backends::ChatRequest build_description_prompt(const ImageData& image, const ChatOptions& options = {}) {
    return detail::user_request(options, detail::join_lines({protocol::kStep1Header, protocol::kStep1Body}), &image);
}

/// Step 2: which vocabulary classes are present, conditioned on the description.
inline backends::ChatRequest build_class_filter_prompt(const ImageData& image, const ImageDescription& description,
                                                       const ClassVocabulary& vocab, const ChatOptions& options = {}) {
    if (description.text.find_first_not_of(" \t\r\n") == std::string::npos) {
        fail(ErrorKind::Precondition, "class filter prompt needs a non-empty image description");
    }
    std::string candidates;
    for (const auto& e : vocab) {
        candidates += "- " + e.name + "\n";
    }
    std::string text = std::string(protocol::kStep2Header) + "\n" + std::string(protocol::kDescriptionLabel) + "\n" +
                       description.text + "\n\n" + std::string(protocol::kCandidatesLabel) + "\n" + candidates + "\n" +
                       std::string(protocol::kStep2Body);
    return detail::user_request(options, std::move(text), &image);
}

/// Step 3: coarse-to-fine reasons for the observed classes, in the order given.
inline backends::ChatRequest build_reason_prompt(const ImageData& image, const std::vector<std::string>& observed,
                                                 const ChatOptions& options = {}) {
    if (observed.empty()) {
        fail(ErrorKind::EmptyObserved, "reason prompt needs at least one observed class");
    }
    std::set<std::string> seen;
    std::string listing;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const std::string name = normalize_class_name(observed[i]);
        if (!seen.insert(name).second) {
            fail(ErrorKind::DuplicateObserved, "observed class '" + name + "' listed twice");
        }
        listing += std::to_string(i + 1) + ". " + name + "\n";
    }
    std::string text = std::string(protocol::kStep3Header) + "\n" + std::string(protocol::kObservedLabel) + "\n" +
                       listing + "\n" + std::string(protocol::kStep3Body);
    return detail::user_request(options, std::move(text), &image);
}

/// Image-independent reasoning for one class; carries no image part.
inline backends::ChatRequest build_generic_reason_prompt(std::string_view class_name, const ChatOptions& options = {}) {
    std::string text = std::string(protocol::kGenericHeader) + "\n" + std::string(protocol::kClassLabel) + " " +
                       normalize_class_name(class_name) + "\n\n" + std::string(protocol::kGenericBody);
    return detail::user_request(options, std::move(text), nullptr);
}

} // namespace openseg::reasoner
