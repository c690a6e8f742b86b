#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fer4d {

enum class ErrorCode {
  Parse,
  Format,
  DegenerateCrop,
  Config,
  Shape,
  Domain,
  MissingAttribute,
  RankDeficiency,
  TooShort,
  WindowTooLarge,
  Coverage,
  Io,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  // Same error with a location prefix, e.g. "frame 3: ...".
  Error with_context(const std::string& where) const { return Error(code_, where + ": " + detail_); }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace fer4d
