#pragma once

#include <stdexcept>
#include <string>

namespace tropeline {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files, missing ids, coverage gaps.
class DataError : public Error {
 public:
  using Error::Error;
};

// Bad arguments or a violated precondition.
class UsageError : public Error {
 public:
  using Error::Error;
};

// The external scorer misbehaved: bad handshake, bad line, out-of-range score, child exit.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

// A scorer failed while the pipeline was refining a candidate list.
class ScorerError : public Error {
 public:
  using Error::Error;
};

}  // namespace tropeline
