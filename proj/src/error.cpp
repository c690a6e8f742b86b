#include "fer4d/error.hpp"

namespace fer4d {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::Format: return "format error";
    case ErrorCode::DegenerateCrop: return "degenerate crop";
    case ErrorCode::Config: return "configuration error";
    case ErrorCode::Shape: return "shape error";
    case ErrorCode::Domain: return "domain error";
    case ErrorCode::MissingAttribute: return "missing attribute";
    case ErrorCode::RankDeficiency: return "rank deficiency";
    case ErrorCode::TooShort: return "sequence too short";
    case ErrorCode::WindowTooLarge: return "window too large";
    case ErrorCode::Coverage: return "class coverage error";
    case ErrorCode::Io: return "i/o error";
  }
  return "error";
}

}  // namespace fer4d
