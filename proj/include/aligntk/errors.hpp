#pragma once

#include <stdexcept>
#include <string>

namespace aligntk {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched tensor/alignment dimensions.
struct ShapeError : Error {
  using Error::Error;
};

// A softmax row with no unmasked entry, or a missing required mask.
struct MaskError : Error {
  using Error::Error;
};

// Invalid model or run configuration (e.g. d_model not divisible by heads).
struct ConfigError : Error {
  using Error::Error;
};

// Token id or position outside the valid range.
struct IndexError : Error {
  using Error::Error;
};

// Malformed or inconsistent input data (files, corpora, checkpoints).
struct DataError : Error {
  using Error::Error;
};

// Metric undefined for the given inputs (e.g. AER with |A|+|S| == 0).
struct ScoreError : Error {
  using Error::Error;
};

}  // namespace aligntk
