#pragma once

#include <vector>

#include "difflm/logmath.hpp"
#include "difflm/rng.hpp"
#include "difflm/vocab.hpp"

namespace difflm {

// Linear noise schedule: alpha(t) = 1 - t on [0, 1]. alpha(0) = 1 is the
// clean endpoint, alpha(1) = 0 fully corrupted.
class NoiseSchedule {
 public:
  double alpha(double t) const;
  double alpha_prime(double t) const;
};

// A corrupted sequence at level t. For the masked process, ids[j] equals
// mask_id exactly when j is in masked_positions; the uniform process never
// produces mask_id and leaves masked_positions empty.
struct NoisySeq {
  std::vector<int> ids;
  double t = 0.0;
  std::vector<int> masked_positions;
};

NoisySeq mdlm_corrupt(const std::vector<int>& ids, double t, const NoiseSchedule& sched,
                      int mask_id, Rng& rng);

NoisySeq usdm_corrupt(const std::vector<int>& ids, double t, const NoiseSchedule& sched,
                      int vocab_size, Rng& rng);

// Reverse posterior q(z_s | z_t, w) for the masked process, s < t. The
// returned distribution has vocab_size + 1 slots with the mask in the last
// slot. Unmasked z_t gives a point mass on z_t; masked z_t splits mass
// (1-alpha_s)/(1-alpha_t) on mask and (alpha_s-alpha_t)/(1-alpha_t) on w.
CatDist mdlm_posterior(int z_t, int w, double s, double t, const NoiseSchedule& sched,
                       int vocab_size, int mask_id);

// Reverse posterior q(z_s | z_t, w) for the uniform process, s < t, over
// the ordinary vocabulary (vocab_size slots). Bayes' rule over the two
// marginal factors q(z_t | z_s) and q(z_s | w).
CatDist usdm_posterior(int z_t, int w, double s, double t, const NoiseSchedule& sched,
                       int vocab_size);

// Forward marginal q(z_t | w) over vocab_size + 1 slots (mask last).
CatDist mdlm_marginal(int w, double t, const NoiseSchedule& sched, int vocab_size,
                      int mask_id);

// Forward marginal q(z_t | w) over vocab_size slots.
CatDist usdm_marginal(int w, double t, const NoiseSchedule& sched, int vocab_size);

}  // namespace difflm
