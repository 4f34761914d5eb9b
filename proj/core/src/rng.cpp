#include "difflm/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace difflm {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t hash_string(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t derive_seed(uint64_t seed, uint64_t a) {
  return splitmix64(splitmix64(seed) ^ a);
}

uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  return derive_seed(derive_seed(seed, a, b), c);
}

uint64_t Rng::uniform_int(uint64_t n) {
  if (n == 0) throw std::runtime_error("rng: uniform_int over empty range");
  // Accept only the top 2^64 - (2^64 mod n) values so x % n is unbiased.
  uint64_t threshold = -n % n;
  uint64_t x;
  do {
    x = engine_();
  } while (x < threshold);
  return x % n;
}

int Rng::sample(const CatDist& dist) {
  std::vector<double> p = dist.probs();
  return sample_probs(p);
}

int Rng::sample_probs(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  if (!(total > 0.0)) throw std::runtime_error("rng: sampling from zero-mass distribution");
  double u = uniform() * total;
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Round-off can leave u just past the last bucket: return the last
  // index with positive mass.
  for (size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace difflm
