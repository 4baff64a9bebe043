#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gridseek {

enum class ErrorKind {
  kShapeMismatch,
  kDomain,
  kDegenerateEmbedding,
  kTape,
  kNonFinite,
  kOutOfBounds,
  kInvalidArgument,
  kCodec,
  kCorruptCheckpoint,
  kVersionMismatch,
  kCorruptIndex,
  kIo,
  kConfig,
  kData,
};

std::string_view to_string(ErrorKind kind);

// All recoverable failures in gridseek surface as this type; `kind()` lets
// callers (notably the CLI) map them to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShapeMismatch: return "shape mismatch";
    case ErrorKind::kDomain: return "domain error";
    case ErrorKind::kDegenerateEmbedding: return "degenerate embedding";
    case ErrorKind::kTape: return "tape error";
    case ErrorKind::kNonFinite: return "non-finite value";
    case ErrorKind::kOutOfBounds: return "out of bounds";
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kCodec: return "codec error";
    case ErrorKind::kCorruptCheckpoint: return "corrupt checkpoint";
    case ErrorKind::kVersionMismatch: return "version mismatch";
    case ErrorKind::kCorruptIndex: return "corrupt index";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kData: return "data error";
  }
  return "error";
}

}  // namespace gridseek
