#pragma once

#include <string>
#include <vector>

#include "difflm/logmath.hpp"
#include "difflm/rng.hpp"

namespace difflm {

// Framewise label posteriors: T rows of vocab_size + 1 log-probabilities,
// with the blank symbol in the last column (column index vocab_size).
struct CtcPosterior {
  std::vector<std::vector<double>> log_probs;
  int vocab_size = 0;

  int frames() const { return static_cast<int>(log_probs.size()); }
  int blank_col() const { return vocab_size; }

  void save(const std::string& path) const;
  static CtcPosterior load(const std::string& path);
};

// Greedy decode with alignment: tau[i] is the first frame of the run that
// produced collapsed token i, so len(tau) == len(tokens).
struct AlignedGreedy {
  std::vector<int> tokens;
  std::vector<int> tau;
};

struct NBestEntry {
  std::vector<int> ids;
  double ctc_logprob = 0.0;
};

// Hypotheses sorted by ctc_logprob descending, ties by token ids
// ascending; all distinct, all scores finite.
struct NBestList {
  std::vector<NBestEntry> entries;
};

// Label prior over the ordinary vocabulary, no blank slot.
struct LabelPrior {
  CatDist log_probs;

  double sequence_log_prob(const std::vector<int>& ids) const;
  void save(const std::string& path) const;
  static LabelPrior load(const std::string& path);
};

// Synthetic acoustic stand-in. Emits frames_per_token frames per reference
// token followed by one blank-dominant separator frame. At a token frame
// the non-blank mass (1 - blank_mass) is split (1-noise)/noise between a
// dominant symbol and a minor one; with probability noise the per-frame
// confuser takes the dominant share instead of the true token, so noise
// acts as a symbol error rate. Separator frames put max(blank_mass, 0.9)
// on blank and spread the rest uniformly over the vocabulary.
CtcPosterior simulate_channel(const std::vector<int>& ref, int vocab_size,
                              int frames_per_token, double noise, double blank_mass,
                              Rng& rng);

AlignedGreedy greedy_collapse(const CtcPosterior& p);

// Drops the blank column at one frame and renormalizes over the
// vocabulary.
CatDist renorm_nonblank(const CtcPosterior& p, int frame);

// Exact alignment-sum log-probability of a label sequence; -inf when no
// alignment of length frames() collapses to it.
double ctc_forward_score(const CtcPosterior& p, const std::vector<int>& labels);

// Prefix beam search followed by exact forward rescoring of the surviving
// prefixes. Ranking is (score desc, token ids lex asc); at most n entries.
NBestList prefix_beam_nbest(const CtcPosterior& p, int beam, int n);

// Time-averaged label prior: framewise posteriors averaged over every
// frame of every utterance, blank dropped, renormalized.
LabelPrior estimate_prior(const std::vector<CtcPosterior>& posteriors);

// N-best file lines: "<utt_id> <rank> <ctc_logprob> <id id ...>"; rank is
// 1-based.
void save_nbest(const std::string& path, const std::string& utt_id, const NBestList& list);
// Returns (utt_id, list); the file must hold exactly one utterance.
std::pair<std::string, NBestList> load_nbest(const std::string& path);

}  // namespace difflm
