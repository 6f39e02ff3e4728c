#ifndef THREDKIT_ERROR_HPP
#define THREDKIT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace thredkit {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument value (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or parsed (CLI exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

/// Incompatible tensor or vector extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain (negative variance, non-finite value).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss. `component()` names the offending term.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string component, double value)
      : Error("non-finite loss component '" + component + "' (" + std::to_string(value) + ")"),
        component_(std::move(component)) {}

  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

}  // namespace thredkit

#endif  // THREDKIT_ERROR_HPP
