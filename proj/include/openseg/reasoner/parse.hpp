#pragma once

#include "openseg/reasoner/protocol.hpp"
#include "openseg/reasoner/types.hpp"

#include <set>

namespace openseg::reasoner {

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) {
            return out;
        }
        start = pos + 1;
    }
}

inline std::vector<std::string> lines(std::string_view text) {
    return split(text, '\n');
}

/// Drops markdown decoration models like to add: bullets, "1." / "1)" counters, bold markers.
inline std::string strip_list_marker(std::string s) {
    s = trim(s);
    while (!s.empty() && (s.front() == '*' || s.front() == '-' || s.front() == '`')) {
        s = trim(s.substr(1));
    }
    std::size_t digits = 0;
    while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) {
        ++digits;
    }
    if (digits > 0 && digits < s.size() && (s[digits] == '.' || s[digits] == ')')) {
        s = trim(s.substr(digits + 1));
    }
    while (!s.empty() && (s.back() == '*' || s.back() == '`')) {
        s.pop_back();
    }
    return trim(s);
}

inline bool iequals_prefix(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) {
        return false;
    }
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
            return false;
        }
    }
    return true;
}

} // namespace detail

/// Reads the first `classes:` line of a Step-2 reply. Names are normalized,
/// kept in emission order, and empty items dropped. Following lines are ignored.
inline RawObservedClasses parse_observed_classes(std::string_view response) {
    for (const auto& raw_line : detail::lines(response)) {
        const std::string line = detail::strip_list_marker(raw_line);
        if (!detail::iequals_prefix(line, protocol::kClassesPrefix)) {
            continue;
        }
        std::string body = detail::trim(std::string_view(line).substr(protocol::kClassesPrefix.size()));
        while (!body.empty() && body.back() == '.') {
            body.pop_back();
        }
        RawObservedClasses out;
        for (const auto& item : detail::split(body, protocol::kAttributeSeparator)) {
            const std::string cleaned = detail::trim(item);
            if (cleaned.empty()) {
                continue;
            }
            try {
                out.names.push_back(normalize_class_name(cleaned));
            } catch (const Error&) {
            }
        }
        if (out.names.empty()) {
            fail(ErrorKind::ParseError, "the classes line lists no names");
        }
        return out;
    }
    fail(ErrorKind::ParseError, "reply contains no 'classes:' line");
}

struct ReasonParse {
    std::map<std::string, ReasonChain> chains;
    std::vector<std::string> missing;
};

/// Thrown when some, but not all, expected classes were answered.
class PartialParseError : public Error {
public:
    explicit PartialParseError(ReasonParse result)
        : Error(ErrorKind::PartialParse, describe(result)), result_(std::move(result)) {}

    [[nodiscard]] const ReasonParse& result() const noexcept { return result_; }

private:
    static std::string describe(const ReasonParse& r) {
        std::string msg = "missing reasons for:";
        for (const auto& m : r.missing) {
            msg += " '" + m + "'";
        }
        return msg;
    }

    ReasonParse result_;
};

/// Parses `<name> | <broad> | <sub> | <attr>; <attr>; ...` lines.
///
/// Lines for names outside `expected` are ignored, as is a repeated line for a
/// class already parsed. A single trailing ';' is tolerated; any other empty
/// field or attribute makes the whole reply a ParseError.
inline ReasonParse parse_reason_chains(std::string_view response, const std::vector<std::string>& expected) {
    if (expected.empty()) {
        fail(ErrorKind::Precondition, "parse_reason_chains needs at least one expected class");
    }
    std::vector<std::string> wanted;
    for (const auto& e : expected) {
        wanted.push_back(normalize_class_name(e));
    }
    const std::set<std::string> wanted_set(wanted.begin(), wanted.end());

    ReasonParse out;
    for (const auto& raw_line : detail::lines(response)) {
        const std::string line = detail::strip_list_marker(raw_line);
        auto fields = detail::split(line, protocol::kFieldSeparator);
        if (fields.size() != 4) {
            continue;
        }
        std::string name;
        try {
            name = normalize_class_name(detail::strip_list_marker(fields[0]));
        } catch (const Error&) {
            continue;
        }
        if (!wanted_set.contains(name) || out.chains.contains(name)) {
            continue;
        }
        ReasonChain chain;
        chain.broad = detail::trim(fields[1]);
        chain.sub = detail::trim(fields[2]);
        auto attrs = detail::split(fields[3], protocol::kAttributeSeparator);
        if (attrs.size() > 1 && detail::trim(attrs.back()).empty()) {
            attrs.pop_back();
        }
        for (const auto& a : attrs) {
            chain.attributes.push_back(detail::trim(a));
        }
        try {
            chain.validate();
        } catch (const Error& e) {
            fail(ErrorKind::ParseError, "reason line for '" + name + "': " + e.what());
        }
        out.chains.emplace(name, std::move(chain));
    }
    if (out.chains.empty()) {
        fail(ErrorKind::ParseError, "reply contains no reason line for any expected class");
    }
    for (const auto& w : wanted) {
        if (!out.chains.contains(w)) {
            out.missing.push_back(w);
        }
    }
    if (!out.missing.empty()) {
        throw PartialParseError(std::move(out));
    }
    return out;
}

} // namespace openseg::reasoner
