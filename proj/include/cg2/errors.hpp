#pragma once

#include <stdexcept>
#include <string>

namespace cg2 {

// Malformed or missing input data (bad files, empty corpora, contract
// violations on user-supplied values). CLI maps this to exit code 2.
class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failure during compute (non-finite activations, repeated NaN
// loss). CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cg2
