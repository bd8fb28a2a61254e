#include "asvkit/error.hpp"

namespace asv {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::Usage: return "usage";
    case Errc::FileNotFound: return "file not found";
    case Errc::MalformedHeader: return "malformed header";
    case Errc::UnsupportedEncoding: return "unsupported encoding";
    case Errc::InvalidArgument: return "invalid argument";
    case Errc::ShapeMismatch: return "dimension mismatch";
    case Errc::DuplicatePosition: return "duplicate position";
    case Errc::NonContiguousPositions: return "non-contiguous positions";
    case Errc::ScoreOutOfRange: return "score out of range";
    case Errc::MissingColumn: return "missing column";
    case Errc::ParseError: return "parse error";
    case Errc::UnknownUtterance: return "unknown utterance";
    case Errc::Io: return "i/o error";
  }
  return "unknown";
}

}  // namespace asv
