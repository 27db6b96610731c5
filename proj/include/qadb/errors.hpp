#pragma once

#include <stdexcept>
#include <string>

namespace qadb {

// Bad input: shapes, ranges, unknown names, malformed config. The CLI maps
// these to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Malformed binary or text file (IDX, checkpoint, report).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qadb
