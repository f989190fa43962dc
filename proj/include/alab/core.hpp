#ifndef ALAB_CORE_HPP_
#define ALAB_CORE_HPP_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace alab {

using Rng = std::mt19937_64;

// Ground state of a continuous MDP.
using State = Eigen::VectorXd;

// Discrete action index. Kept distinct from plain ints so that cluster ids and
// action ids cannot be swapped silently.
struct ActionId {
  int index = 0;
  friend bool operator==(ActionId, ActionId) = default;
};

// Abstract state produced by a state abstraction.
struct AbstractState {
  int cluster = 0;
  friend bool operator==(AbstractState, AbstractState) = default;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Derives an independent stream seed from a base seed and an index (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace alab

#endif  // ALAB_CORE_HPP_
