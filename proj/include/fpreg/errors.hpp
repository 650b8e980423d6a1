#pragma once
#include <stdexcept>
#include <string>

namespace fpreg {

// Unusable input: bad shapes, bad config, malformed files, violated bounds.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Rank-deficient or otherwise non-invertible linear systems.
struct SingularError : std::runtime_error {
  explicit SingularError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fpreg
