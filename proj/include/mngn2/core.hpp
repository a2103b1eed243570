#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace mngn2 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// 2^-52, added to residuals where a strictly positive floor is required.
inline constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The stacked pair [J; L] is rank deficient, i.e. N(J) and N(L) intersect.
class DegeneratePairError : public FactorizationError {
 public:
  using FactorizationError::FactorizationError;
};

// A step was requested with a rank that includes an exactly zero singular value.
class InconsistentRankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace rng {

// Counter-based generator: every draw is a pure function of its key, so trial
// streams are reproducible independently of execution order and thread count.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline double uniform01(std::uint64_t seed, std::uint64_t trial, std::uint64_t coord,
                        std::uint64_t stream_tag = 0) {
  std::uint64_t k = splitmix64(seed ^ splitmix64(stream_tag));
  k = splitmix64(k ^ trial);
  k = splitmix64(k ^ coord);
  return static_cast<double>(k >> 11) * 0x1.0p-53;
}

}  // namespace rng

}  // namespace mngn2
