#pragma once

#include <stdexcept>

namespace csnn {

// Operand shapes do not line up; the message carries both shapes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input file (model JSON, CSV, IDX).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid run configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Training hit a non-finite loss or other numerical breakdown.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace csnn
