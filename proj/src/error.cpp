#include "skinsplat/error.hpp"

namespace skinsplat {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidInput: return "invalid input";
    case ErrorCode::EmptyTexture: return "empty texture";
    case ErrorCode::NoPlane: return "no plane";
    case ErrorCode::NoScale: return "no scale";
    case ErrorCode::DegenerateConfiguration: return "degenerate configuration";
    case ErrorCode::NumericalFailure: return "numerical failure";
    case ErrorCode::Io: return "i/o error";
  }
  return "unknown error";
}

}  // namespace skinsplat
