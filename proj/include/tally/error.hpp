#pragma once

#include <stdexcept>
#include <string>

namespace tally {

enum class ErrorKind {
    Usage,
    SpecMismatch,
    InvalidInput,
    InvalidWeights,
    DegenerateComparison,
    Data,
    Numerical,
};

/// Single exception type for the library. The kind selects the CLI exit code:
/// usage problems exit 1, data problems exit 2, numerical failures exit 3.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::Usage: return 1;
            case ErrorKind::DegenerateComparison:
            case ErrorKind::Numerical: return 3;
            default: return 2;
        }
    }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::Usage: return "usage";
        case ErrorKind::SpecMismatch: return "spec-mismatch";
        case ErrorKind::InvalidInput: return "invalid-input";
        case ErrorKind::InvalidWeights: return "invalid-weights";
        case ErrorKind::DegenerateComparison: return "degenerate-comparison";
        case ErrorKind::Data: return "data";
        case ErrorKind::Numerical: return "numerical";
    }
    return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace tally
