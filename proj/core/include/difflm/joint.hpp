#pragma once

#include <string>
#include <vector>

#include "difflm/ctc.hpp"
#include "difflm/denoiser.hpp"
#include "difflm/rescorer.hpp"
#include "difflm/schedule.hpp"

namespace difflm {

enum class FinalRule { argmax, sample };

FinalRule parse_final_rule(const std::string& name);
std::string final_rule_name(FinalRule rule);

struct JointConfig {
  double t_start = 0.3;
  int steps = 16;  // L
  RescoreWeights weights;  // lambda_prior unused here
  uint64_t seed = 0;
  FinalRule final_rule = FinalRule::argmax;
};

// One decoding-loop state snapshot, recorded when tracing.
struct DecodeTraceStep {
  int step = 0;
  double t = 0.0;
  std::vector<int> z;
};

// Per-position combined scores over the vocabulary:
//   S_i(v) = lambda_ctc * log P_ctc(v | frame tau[i])
//          + lambda_difflm * log P_lm(v | z at level t_l),
// with the CTC factor renormalized over non-blank labels and the LM
// factor from one denoiser call on the whole sequence. Zero-weight terms
// are skipped entirely.
std::vector<std::vector<double>> combined_position_scores(
    const CtcPosterior& p, const std::vector<int>& tau, const std::vector<int>& z,
    double t_l, const Denoiser& d, const RescoreWeights& w);

// Applies one ancestral step: non-final draws each position from
// softmax(scores[i]); the final step follows the rule (argmax by
// default).
std::vector<int> denoise_step(const std::vector<std::vector<double>>& scores, Rng& rng,
                              bool final, FinalRule rule);

// Full decoding loop: start from the greedy-collapse tokens treated as
// the state at t_start, walk the linear noise grid
// t_start * (L - l) / L for l = 0..L, and return the final sequence.
// Output length always equals the greedy-collapse length; an empty
// greedy collapse returns empty immediately.
std::vector<int> joint_decode(const CtcPosterior& p, const JointConfig& cfg,
                              const Denoiser& d, const NoiseSchedule& sched,
                              std::vector<DecodeTraceStep>* trace = nullptr);

// Decode file lines: "<utt_id> <id id ...>".
void save_decodes(const std::string& path, const std::vector<std::string>& utt_ids,
                  const std::vector<std::vector<int>>& decodes);
std::vector<std::pair<std::string, std::vector<int>>> load_decodes(const std::string& path);

}  // namespace difflm
