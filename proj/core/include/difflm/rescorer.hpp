#pragma once

#include <string>
#include <vector>

#include "difflm/ctc.hpp"
#include "difflm/denoiser.hpp"
#include "difflm/schedule.hpp"

namespace difflm {

// Interpolation weights for the combined hypothesis score; the prior
// weight enters with a minus sign.
struct RescoreWeights {
  double lambda_ctc = 1.0;
  double lambda_difflm = 0.3;
  double lambda_prior = 0.0;
};

enum class EstimatorKind { seq_norm, sample_mask, global_mask, coupled, usdm };

EstimatorKind parse_estimator_kind(const std::string& name);
std::string estimator_kind_name(EstimatorKind kind);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::sample_mask;
  int samples = 16;      // K
  double t_fixed = 0.5;  // noise level for every sample
  uint64_t seed = 0;     // global seed; per-hypothesis seeds derive from it
  // When set, every hypothesis in a list draws from the same stream, so
  // equal-length hypotheses see identical masks (paired comparison).
  bool share_masks = false;
};

struct ScoreResult {
  double score = 0.0;
  // Standard error of the Monte-Carlo mean (delta-method for the pooled
  // global_mask ratio); 0 when K = 1.
  double std_error = 0.0;
};

// Monte-Carlo language-model score of one hypothesis. Sample k draws its
// randomness from a fresh generator seeded by derive_seed(hyp_seed, k),
// so samples are order-independent and reproducible. Masked-process
// kinds resample until the mask set is non-empty, except coupled, which
// draws a uniform subset and its complement and keeps empty halves.
ScoreResult mdlm_score(const std::vector<int>& hyp, const EstimatorConfig& cfg,
                       const Denoiser& d, const NoiseSchedule& sched, uint64_t hyp_seed);

// All-position average log-probability under uniform-state corruption at
// t_fixed; every position contributes in every sample.
ScoreResult usdm_score(const std::vector<int>& hyp, const EstimatorConfig& cfg,
                       const Denoiser& d, const NoiseSchedule& sched, uint64_t hyp_seed);

// Dispatches on cfg.kind.
ScoreResult score_hypothesis(const std::vector<int>& hyp, const EstimatorConfig& cfg,
                             const Denoiser& d, const NoiseSchedule& sched,
                             uint64_t hyp_seed);

// Exact expectation of the per-sample statistic the Monte-Carlo score
// averages: enumerates mask patterns (masked kinds; conditioned on
// non-empty except coupled) or noisy sequences (usdm). Bounded to
// len <= 12 for masked kinds and len <= 6, |V| <= 6 for usdm.
double exact_expected_score(const std::vector<int>& hyp, EstimatorKind kind, double t,
                            const Denoiser& d, const NoiseSchedule& sched);

// lambda_ctc*ctc + lambda_difflm*s - lambda_prior*prior. A -inf CTC score
// propagates; zero-weight terms are skipped so they never poison the sum.
double combine_scores(double ctc_lp, double s_difflm, double prior_lp,
                      const RescoreWeights& w);

struct RescoredEntry {
  std::vector<int> ids;
  double ctc_logprob = 0.0;
  double s_difflm = 0.0;
  double combined = 0.0;
};

// Sorted by combined score descending, ties by original CTC rank.
struct RescoredList {
  std::vector<RescoredEntry> entries;
};

// Scores every hypothesis and re-ranks. Hypothesis at original rank r
// (1-based) uses seed derive_seed(utt_seed, r), or derive_seed(utt_seed, 0)
// for every hypothesis under cfg.share_masks. Empty hypotheses keep
// only their CTC term.
RescoredList rescore_nbest(const NBestList& list, const EstimatorConfig& cfg,
                           const RescoreWeights& w, const Denoiser& d,
                           const LabelPrior& prior, const NoiseSchedule& sched,
                           uint64_t utt_seed);

// Rescored file lines append "<s_difflm> <combined>" to the n-best
// format; the last two fields are always the appended scores.
void save_rescored(const std::string& path, const std::string& utt_id,
                   const RescoredList& list);
std::pair<std::string, RescoredList> load_rescored(const std::string& path);

}  // namespace difflm
