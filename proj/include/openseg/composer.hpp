#pragma once

#include "openseg/reasoner/types.hpp"

#include <set>

namespace openseg::composer {

enum class PromptStyle { ClassName, Coarse, CoarseAtt, Att };

inline std::string_view to_string(PromptStyle s) {
    switch (s) {
    case PromptStyle::ClassName: return "class-name";
    case PromptStyle::Coarse: return "coarse";
    case PromptStyle::CoarseAtt: return "coarse-att";
    case PromptStyle::Att: return "att";
    }
    return "unknown";
}

inline PromptStyle parse_prompt_style(std::string_view s) {
    for (auto style : {PromptStyle::ClassName, PromptStyle::Coarse, PromptStyle::CoarseAtt, PromptStyle::Att}) {
        if (s == to_string(style)) {
            return style;
        }
    }
    fail(ErrorKind::UsageError,
         "unknown prompt style '" + std::string(s) + "' (expected class-name, coarse, coarse-att or att)");
}

/// Placeholders: {c} class name, {broad}, {sub}, {r} one attribute.
struct Templates {
    std::string class_name = "a photo of {c}";
    std::string coarse = "a photo of {c} that is a {sub}, a kind of {broad}";
    std::string coarse_att = "a photo of {c} that is a {sub}, a kind of {broad}, that has {r}";
    std::string att = "a photo of {c} that has {r}";

    friend bool operator==(const Templates&, const Templates&) = default;
};

struct PromptSet {
    ClassId class_id = 0;
    std::vector<std::string> prompts;
};

/// Single left-to-right pass, so substituted text is never re-expanded.
inline std::string expand(std::string_view tmpl, const std::map<std::string_view, std::string_view>& values) {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i);
            if (close != std::string_view::npos) {
                if (auto it = values.find(tmpl.substr(i + 1, close - i - 1)); it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

/// Prompts for one class. Attribute styles give one prompt per attribute in
/// chain order; repeated attributes collapse to one prompt.
inline PromptSet compose(ClassId class_id, std::string_view class_name, const reasoner::ReasonChain* chain,
                         PromptStyle style, const Templates& templates = {}) {
    PromptSet set{class_id, {}};
    if (style == PromptStyle::ClassName) {
        set.prompts.push_back(expand(templates.class_name, {{"c", class_name}}));
        return set;
    }
    if (chain == nullptr) {
        fail(ErrorKind::InvariantError, "class '" + std::string(class_name) + "' has no reason chain for style " +
                                            std::string(to_string(style)));
    }
    if (chain->broad.empty() || chain->sub.empty()) {
        fail(ErrorKind::InvariantError, "class '" + std::string(class_name) + "' has an empty category");
    }
    if (style == PromptStyle::Coarse) {
        set.prompts.push_back(
            expand(templates.coarse, {{"c", class_name}, {"broad", chain->broad}, {"sub", chain->sub}}));
        return set;
    }
    if (chain->attributes.empty()) {
        fail(ErrorKind::InvariantError, "class '" + std::string(class_name) + "' has no attributes for style " +
                                            std::string(to_string(style)));
    }
    const std::string& tmpl = style == PromptStyle::Att ? templates.att : templates.coarse_att;
    std::set<std::string> seen;
    for (const auto& attr : chain->attributes) {
        if (attr.empty()) {
            fail(ErrorKind::InvariantError, "class '" + std::string(class_name) + "' has an empty attribute");
        }
        auto prompt = expand(tmpl, {{"c", class_name}, {"broad", chain->broad}, {"sub", chain->sub}, {"r", attr}});
        if (seen.insert(prompt).second) {
            set.prompts.push_back(std::move(prompt));
        }
    }
    return set;
}

inline PromptSet compose(std::string_view class_name, const reasoner::ReasonChain& chain, PromptStyle style,
                         const Templates& templates = {}) {
    return compose(0, class_name, &chain, style, templates);
}

/// One prompt set per bundle entry. Entries without reasoning (name-only)
/// always use the bare class template.
inline std::map<ClassId, PromptSet> compose_bundle(const reasoner::ReasoningBundle& bundle,
                                                   const ClassVocabulary& vocab, PromptStyle style,
                                                   const Templates& templates = {}) {
    std::map<ClassId, PromptSet> out;
    for (const auto& [id, entry] : bundle.entries) {
        const auto effective = entry.provenance == reasoner::Provenance::NameOnly ? PromptStyle::ClassName : style;
        try {
            out.emplace(id, compose(id, vocab.name(id), entry.chain ? &*entry.chain : nullptr, effective, templates));
        } catch (const Error& e) {
            fail(e.kind(), "composing prompts for class " + std::to_string(id) + ": " + e.what());
        }
    }
    return out;
}

} // namespace openseg::composer
