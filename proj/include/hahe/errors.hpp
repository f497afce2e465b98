#pragma once

#include <stdexcept>
#include <string>

namespace hahe {

// Problems with input data: malformed files, schema violations, dangling
// references. Maps to CLI exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures: NaN loss, path-count overflow, exhausted enumeration
// budgets. Maps to CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hahe
