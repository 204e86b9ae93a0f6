#pragma once

#include <stdexcept>
#include <string>

namespace nrinit {

/// Raised for malformed inputs: bad dimensions, invalid networks, schema
/// violations in case/dataset/model files.
class InputError : public std::runtime_error {
  public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a numerical procedure cannot continue (singular reduced
/// admittance, NaN during training).
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nrinit
