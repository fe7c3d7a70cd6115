#pragma once

#include <stdexcept>
#include <string>

namespace dynamix {

// Caller broke a documented precondition (bad batch size, short series, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or inconsistent configuration (unknown worker, duplicate id, bad JSON).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Wire-level problem: unknown message kind, version mismatch, unexpected message.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

// Policy update produced a non-finite gradient or parameter.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The arbitrator gave up on the session; what() names the stalled worker/step.
class SessionAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}

}  // namespace detail
}  // namespace dynamix
