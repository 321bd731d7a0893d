#pragma once

#include <stdexcept>

namespace gridwalk {

// Raised for out-of-range arguments and malformed inputs.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an operation is attempted on a value in the wrong state.
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised when a protocol handler is fed an impossible transition.
// Seeing one of these means the simulator itself is wrong.
class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gridwalk
