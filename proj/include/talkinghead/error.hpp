#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace th {

/// Dimension or configuration mismatch between collaborating objects.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a documented invariant (non-unit normal, NaN, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation called outside its precondition (empty corpus, too few landmarks, ...).
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-fatal diagnostics go to stderr unless silenced.
void warn(std::string_view message);
void set_quiet(bool quiet);
bool quiet();

}  // namespace th
