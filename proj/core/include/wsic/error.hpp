#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wsic {

/// Machine-readable failure categories shared by the library, the CLI and the
/// HTTP service. Each code maps to exactly one HTTP status in the service.
enum class ErrorCode {
    InvalidArgument,
    DegenerateInput,
    NonSimplePolygon,
    SingleClass,
    EmptyConfidentSet,
    ZeroPatches,
    ContradictoryCorrection,
    NoPendingScribbles,
    UnknownPolicy,
    ParseError,
    NotFound,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        throw Error(code, message);
    }
}

} // namespace wsic
