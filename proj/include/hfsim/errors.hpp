#pragma once

#include <stdexcept>
#include <string>

namespace hfsim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid construction parameters or inconsistent scenario configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Guest-physical range outside machine memory.
class AddressError : public Error {
 public:
  using Error::Error;
};

// Operation issued in a machine state that does not allow it
// (module loaded before the IDT was placed, vector beyond the IDT, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace hfsim
