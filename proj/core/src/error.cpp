#include "wsic/error.hpp"

namespace wsic {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DegenerateInput: return "degenerate_input";
    case ErrorCode::NonSimplePolygon: return "non_simple_polygon";
    case ErrorCode::SingleClass: return "single_class";
    case ErrorCode::EmptyConfidentSet: return "empty_confident_set";
    case ErrorCode::ZeroPatches: return "zero_patches";
    case ErrorCode::ContradictoryCorrection: return "contradictory_correction";
    case ErrorCode::NoPendingScribbles: return "no_pending_scribbles";
    case ErrorCode::UnknownPolicy: return "unknown_policy";
    case ErrorCode::ParseError: return "parse_error";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Io: return "io_error";
    }
    return "unknown";
}

} // namespace wsic
