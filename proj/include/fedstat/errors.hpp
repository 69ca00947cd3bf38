#pragma once

#include <stdexcept>
#include <string>

namespace fedstat {

// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller-supplied value violates an operation's precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values, singular systems, solver non-convergence.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input bytes (bad magic, unsupported type code).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input shorter or longer than its header announces.
class LengthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Not enough samples to satisfy a partition request.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment configuration; message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required input file or dataset is not present.
class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedstat
