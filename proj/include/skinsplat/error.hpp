#pragma once

#include <stdexcept>
#include <string>

namespace skinsplat {

enum class ErrorCode {
  InvalidInput,
  EmptyTexture,
  NoPlane,
  NoScale,
  DegenerateConfiguration,
  NumericalFailure,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace skinsplat
