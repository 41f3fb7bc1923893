#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedsim {

// Malformed input files (rating data, config text).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatches, impossible parameters, violated preconditions.
struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (unknown key, invalid value, unknown plugin).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic stream derivation: seeds for (epoch, client) and similar
// tuples must not depend on execution order.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

// Fixed stream tags so unrelated consumers of the same master seed
// never collide.
namespace stream {
constexpr std::uint64_t kDataset = 0x01;
constexpr std::uint64_t kPublicInit = 0x02;
constexpr std::uint64_t kClientInit = 0x03;
constexpr std::uint64_t kSampling = 0x04;
constexpr std::uint64_t kRound = 0x05;
constexpr std::uint64_t kJaccard = 0x06;
}  // namespace stream

}  // namespace fedsim
