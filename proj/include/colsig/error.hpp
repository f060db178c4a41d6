#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace colsig {

enum class ErrorKind {
    Parameter,
    Shape,
    EmptySignature,
    FaintScan,
    Io,
    Format,
    NotFound,
    Conflict,
    Rejected,
    Diverged,
};

constexpr std::string_view to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::Parameter: return "parameter_error";
    case ErrorKind::Shape: return "shape_error";
    case ErrorKind::EmptySignature: return "empty_signature";
    case ErrorKind::FaintScan: return "faint_scan";
    case ErrorKind::Io: return "io_error";
    case ErrorKind::Format: return "format_error";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Rejected: return "rejected";
    case ErrorKind::Diverged: return "diverged";
    }
    return "error";
}

// All library failures are reported through this type; `kind()` is what the
// CLI and the HTTP layer switch on.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised by normalize_signature when nothing survives thresholding.
class FaintScanError : public Error {
public:
    explicit FaintScanError(std::string source_id)
        : Error(ErrorKind::FaintScan, "faint scan: nothing survives thresholding in '" + source_id + "'"),
          source_id_(std::move(source_id)) {}

    const std::string& source_id() const noexcept { return source_id_; }

private:
    std::string source_id_;
};

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) throw Error(kind, msg);
}

} // namespace colsig
