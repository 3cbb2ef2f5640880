#pragma once

#include <stdexcept>
#include <string>

namespace toxhmm {

// Caller supplied something outside an operation's contract.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A sequence with probability zero under the model was asked for posteriors
// or a decoding.
class ImpossibleSequence : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Floating point broke down during fitting (non-finite likelihood).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace toxhmm
