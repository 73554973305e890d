#pragma once

#include <stdexcept>
#include <string>

namespace casgnn {

// Error taxonomy shared by all modules. The CLI maps these onto its
// stable exit codes (2 usage, 3 I/O, 4 numeric, 5 verification).
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VerificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace casgnn
