#pragma once

#include <stdexcept>
#include <string>

namespace asv {

/// Failure categories surfaced to callers. The CLI maps `Usage` to exit
/// code 1 and every other category to exit code 2.
enum class Errc {
  Usage,
  FileNotFound,
  MalformedHeader,
  UnsupportedEncoding,
  InvalidArgument,
  ShapeMismatch,
  DuplicatePosition,
  NonContiguousPositions,
  ScoreOutOfRange,
  MissingColumn,
  ParseError,
  UnknownUtterance,
  Io,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace asv
