#pragma once

#include <stdexcept>
#include <string>

namespace padens {

// Runtime failure (I/O, numerics, corrupt files).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input, configuration or precondition violation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class UnknownArchitecture : public ValidationError {
 public:
  explicit UnknownArchitecture(const std::string& name)
      : ValidationError("unknown architecture '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class PretrainedUnavailable : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace padens
