#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "difflm/logmath.hpp"

namespace difflm {

uint64_t splitmix64(uint64_t x);

// FNV-1a, used to fold utterance ids into seed derivations.
uint64_t hash_string(std::string_view s);

// Pure seed derivation: every parallel task gets its seed as a function of
// the global seed and its position in the work tree, never from shared
// engine state.
uint64_t derive_seed(uint64_t seed, uint64_t a);
uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b);
uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c);

// Deterministic RNG over the raw mt19937_64 stream. The standard pins the
// engine output exactly; distributions are hand-rolled here so results are
// identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // [0, n), rejection-sampled
  uint64_t uniform_int(uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Categorical draw from a log-domain distribution.
  int sample(const CatDist& dist);
  int sample_probs(std::span<const double> probs);

 private:
  std::mt19937_64 engine_;
};

}  // namespace difflm
