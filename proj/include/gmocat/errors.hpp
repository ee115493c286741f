#pragma once

#include <stdexcept>
#include <string>

namespace gmocat {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad ratios, negative weights, unknown keys, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (parse failures, missing mappings).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A caller or component violated a documented contract (stale forward
/// record, selector returning a masked question, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// An operation requires a capability the active component lacks
/// (e.g. Fisher-information selection on a non-IRT cognitive model).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss and was aborted.
class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

}  // namespace gmocat
