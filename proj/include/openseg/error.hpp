#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace openseg {

enum class ErrorKind {
    NameEmpty,
    FormatError,
    RangeError,
    IoError,
    VocabError,
    Precondition,
    EmptyObserved,
    DuplicateObserved,
    ParseError,
    PartialParse,
    BackendError,
    MergeError,
    DimError,
    InvariantError,
    EmptyStack,
    NumericError,
    GeomError,
    CoverageError,
    EmptyEval,
    UsageError,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::NameEmpty: return "NameEmpty";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::RangeError: return "RangeError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::VocabError: return "VocabError";
    case ErrorKind::Precondition: return "Precondition";
    case ErrorKind::EmptyObserved: return "EmptyObserved";
    case ErrorKind::DuplicateObserved: return "DuplicateObserved";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::PartialParse: return "PartialParse";
    case ErrorKind::BackendError: return "BackendError";
    case ErrorKind::MergeError: return "MergeError";
    case ErrorKind::DimError: return "DimError";
    case ErrorKind::InvariantError: return "InvariantError";
    case ErrorKind::EmptyStack: return "EmptyStack";
    case ErrorKind::NumericError: return "NumericError";
    case ErrorKind::GeomError: return "GeomError";
    case ErrorKind::CoverageError: return "CoverageError";
    case ErrorKind::EmptyEval: return "EmptyEval";
    case ErrorKind::UsageError: return "UsageError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a kind so callers can branch
/// on it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace openseg
