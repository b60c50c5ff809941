#pragma once

#include <stdexcept>
#include <string>

namespace ttx {

// Bad tensor shapes (dimension mismatch, odd GLU width, ...).
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values (frame index out of range, T < 1, ...).
struct ArgError : std::invalid_argument {
  explicit ArgError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A softmax row with no allowed entry.
struct MaskError : std::runtime_error {
  explicit MaskError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed checkpoint / feature files. Every corrupt input maps to one of
// these kinds; file readers never crash on bad bytes.
struct FormatError : std::runtime_error {
  enum class Kind {
    bad_magic,
    truncated,
    bad_manifest,
    unknown_dtype,
    shape_mismatch,
    overlap,
    too_large,
    io,
  };
  Kind kind;
  FormatError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Stream misuse (short chunk followed by more input, oversized chunk, ...).
struct SequencingError : std::logic_error {
  explicit SequencingError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace ttx
