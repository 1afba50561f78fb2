#pragma once

#include <stdexcept>
#include <string>

namespace ivfuse {

// Bad inputs, shape mismatches, malformed configs. Mapped to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem / decode failures and anything that goes wrong mid-run.
// Mapped to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace ivfuse
