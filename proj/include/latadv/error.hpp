#pragma once

#include <stdexcept>
#include <string>

namespace latadv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside its documented range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Array shapes disagree with what a model or operation declared.
class InterfaceError : public Error {
 public:
  using Error::Error;
};

/// A backend or classifier lacks a capability the caller needs (e.g. gradients).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class RegistryError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when a metric has no defined value (e.g. ASR over zero images).
class UndefinedResultError : public Error {
 public:
  using Error::Error;
};

}  // namespace latadv
