#pragma once

#include <stdexcept>
#include <string>

namespace boostdepth {

/// Invalid configuration: bad keys, out-of-range parameters, shape mismatches
/// between a camera and the data it is applied to.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input data (files, scene directories, image shapes).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown: NaN loss, no valid pixels left after masking.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace boostdepth
