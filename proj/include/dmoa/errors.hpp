#pragma once

#include <stdexcept>
#include <string>

namespace dmoa {

// Invalid parameters or configuration. The message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A message or transition the protocol state machine does not allow.
class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TimeoutError : public BackendError {
 public:
  using BackendError::BackendError;
};

class ConnectionError : public BackendError {
 public:
  using BackendError::BackendError;
};

class HttpStatusError : public BackendError {
 public:
  HttpStatusError(int status, const std::string& what)
      : BackendError(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class DecodeError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace dmoa
