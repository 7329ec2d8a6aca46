// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef TASKSIM_COMMON_H_
#define TASKSIM_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace tasksim {

// Bad input: malformed files, violated invariants, inconsistent configs.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while executing an otherwise valid request (divergence, IO).
// The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// Derives an independent stream seed from a base seed and a salt, so that
// e.g. run #17 of a grid does not share a random stream with run #18.
inline std::uint64_t MixSeed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t MixSeed(std::uint64_t base, const std::string& salt) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : salt) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return MixSeed(base, h);
}

// Uniform double in [0, 1) taken from the top 53 bits. Unlike
// std::uniform_real_distribution the result is the same on every standard
// library, which keeps generated corpora portable.
inline double UniformUnit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t UniformIndex(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(UniformUnit(rng) * static_cast<double>(n));
}

}  // namespace tasksim

#endif  // TASKSIM_COMMON_H_
