#pragma once

#include <stdexcept>
#include <string>

namespace mvmol {

/// Error taxonomy shared across the library. The kind is part of the
/// contract: callers dispatch on it, messages are for humans.
enum class ErrorKind {
  Shape,       // dimension / rank mismatch
  Value,       // bad numeric input (NaN, degenerate mask, near-zero norm, ...)
  Parse,       // malformed file content
  Validation,  // structurally invalid domain object
  Capacity,    // input exceeds a configured limit
  Category,    // triplet category not allowed by the operation
  Sampling,    // sampler cannot produce a batch
  Resolution,  // dangling entity reference
  Config,      // bad configuration
  Io,          // file system failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace mvmol
