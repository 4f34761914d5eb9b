#include "difflm/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace difflm {

namespace {

void check_level(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::runtime_error("schedule: noise level outside [0, 1]: " + std::to_string(t));
  }
}

void check_interval(double s, double t) {
  check_level(s);
  check_level(t);
  if (!(s < t)) {
    throw std::runtime_error("schedule: posterior needs s < t, got s=" + std::to_string(s) +
                             " t=" + std::to_string(t));
  }
}

}  // namespace

double NoiseSchedule::alpha(double t) const {
  check_level(t);
  return 1.0 - t;
}

double NoiseSchedule::alpha_prime(double t) const {
  check_level(t);
  return -1.0;
}

NoisySeq mdlm_corrupt(const std::vector<int>& ids, double t, const NoiseSchedule& sched,
                      int mask_id, Rng& rng) {
  double mask_prob = 1.0 - sched.alpha(t);
  NoisySeq out;
  out.ids = ids;
  out.t = t;
  for (int j = 0; j < static_cast<int>(ids.size()); ++j) {
    if (rng.bernoulli(mask_prob)) {
      out.ids[j] = mask_id;
      out.masked_positions.push_back(j);
    }
  }
  return out;
}

NoisySeq usdm_corrupt(const std::vector<int>& ids, double t, const NoiseSchedule& sched,
                      int vocab_size, Rng& rng) {
  double keep_prob = sched.alpha(t);
  NoisySeq out;
  out.ids = ids;
  out.t = t;
  for (int j = 0; j < static_cast<int>(ids.size()); ++j) {
    if (!rng.bernoulli(keep_prob)) {
      out.ids[j] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(vocab_size)));
    }
  }
  return out;
}

CatDist mdlm_posterior(int z_t, int w, double s, double t, const NoiseSchedule& sched,
                       int vocab_size, int mask_id) {
  check_interval(s, t);
  int n = vocab_size + 1;
  int mask_slot = vocab_size;  // mask occupies the extra last slot
  if (z_t != mask_id) {
    if (z_t < 0 || z_t >= vocab_size) {
      throw std::runtime_error("schedule: z_t outside vocabulary: " + std::to_string(z_t));
    }
    return CatDist::point_mass(z_t, n);
  }
  double alpha_s = sched.alpha(s);
  double alpha_t = sched.alpha(t);
  double denom = 1.0 - alpha_t;
  std::vector<double> probs(n, 0.0);
  probs[mask_slot] = (1.0 - alpha_s) / denom;
  probs[w] += (alpha_s - alpha_t) / denom;
  return CatDist::from_probs(probs);
}

CatDist usdm_posterior(int z_t, int w, double s, double t, const NoiseSchedule& sched,
                       int vocab_size) {
  check_interval(s, t);
  if (z_t < 0 || z_t >= vocab_size || w < 0 || w >= vocab_size) {
    throw std::runtime_error("schedule: token outside vocabulary");
  }
  double alpha_s = sched.alpha(s);
  double alpha_t = sched.alpha(t);
  // Conditional schedule for the t|s hop; alpha_s = 0 only at s = 1 which
  // s < t <= 1 excludes.
  double alpha_ts = alpha_t / alpha_s;
  double inv_v = 1.0 / vocab_size;
  std::vector<double> probs(vocab_size, 0.0);
  for (int v = 0; v < vocab_size; ++v) {
    double lik = (v == z_t ? alpha_ts : 0.0) + (1.0 - alpha_ts) * inv_v;
    double prior = (v == w ? alpha_s : 0.0) + (1.0 - alpha_s) * inv_v;
    probs[v] = lik * prior;
  }
  return CatDist::from_probs(probs);
}

CatDist mdlm_marginal(int w, double t, const NoiseSchedule& sched, int vocab_size,
                      int mask_id) {
  (void)mask_id;
  check_level(t);
  double alpha_t = sched.alpha(t);
  std::vector<double> probs(vocab_size + 1, 0.0);
  probs[w] = alpha_t;
  probs[vocab_size] += 1.0 - alpha_t;
  return CatDist::from_probs(probs);
}

CatDist usdm_marginal(int w, double t, const NoiseSchedule& sched, int vocab_size) {
  check_level(t);
  double alpha_t = sched.alpha(t);
  double inv_v = 1.0 / vocab_size;
  std::vector<double> probs(vocab_size, (1.0 - alpha_t) * inv_v);
  probs[w] += alpha_t;
  return CatDist::from_probs(probs);
}

}  // namespace difflm
