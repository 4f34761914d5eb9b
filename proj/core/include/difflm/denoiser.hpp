#pragma once

#include <map>
#include <string>
#include <vector>

#include "difflm/logmath.hpp"
#include "difflm/schedule.hpp"
#include "difflm/vocab.hpp"

namespace difflm {

// Per-position distributions over the ordinary vocabulary, one CatDist of
// vocab_size slots per input position.
struct DenoiserOutput {
  std::vector<CatDist> per_position;
};

enum class CorruptionKind { mdlm, usdm };

CorruptionKind parse_corruption_kind(const std::string& name);
std::string corruption_kind_name(CorruptionKind kind);

// First-order chain over token ids with add-smoothing. Log domain; every
// entry is at least the smoothing floor.
class BigramModel {
 public:
  static BigramModel fit(const std::vector<std::vector<int>>& corpus, int vocab_size,
                         double smoothing);
  // Builds directly from probability tables (already row-stochastic).
  static BigramModel from_probs(const std::vector<double>& initial,
                                const std::vector<std::vector<double>>& transition);

  int vocab_size() const { return static_cast<int>(initial_.size()); }
  double initial_log_prob(int v) const { return initial_[v]; }
  double transition_log_prob(int prev, int next) const { return transition_[prev][next]; }

  // Exact sequence log-probability under the chain.
  double sequence_log_prob(const std::vector<int>& ids) const;
  std::vector<int> sample_sequence(int length, Rng& rng) const;

  // Exact per-token perplexity of the chain over a corpus: exp of total
  // negative log-probability divided by total token count.
  double corpus_perplexity(const std::vector<std::vector<int>>& corpus) const;

  void save(const std::string& path) const;
  static BigramModel load(const std::string& path);

  const std::vector<double>& initial() const { return initial_; }
  const std::vector<std::vector<double>>& transition() const { return transition_; }

 private:
  BigramModel(std::vector<double> initial, std::vector<std::vector<double>> transition);

  std::vector<double> initial_;
  std::vector<std::vector<double>> transition_;
};

// Denoising model interface: maps a corrupted sequence at level t to a
// full distribution over the vocabulary at every position.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual DenoiserOutput denoise(const NoisySeq& z, CorruptionKind kind) const = 0;
  virtual int vocab_size() const = 0;
  // Mask symbol this denoiser expects in masked inputs. The default is
  // the shared id convention: blank at vocab_size, mask right after it.
  virtual int mask_id() const { return vocab_size() + 1; }
};

// Context-free denoiser returning the same distribution at every
// position; a uniform instance gives the constant-model baselines.
class FixedDenoiser : public Denoiser {
 public:
  explicit FixedDenoiser(CatDist dist) : dist_(std::move(dist)) {}
  static FixedDenoiser uniform(int vocab_size) {
    return FixedDenoiser(CatDist::uniform(vocab_size));
  }

  DenoiserOutput denoise(const NoisySeq& z, CorruptionKind kind) const override {
    (void)kind;
    DenoiserOutput out;
    out.per_position.assign(z.ids.size(), dist_);
    return out;
  }
  int vocab_size() const override { return static_cast<int>(dist_.size()); }

 private:
  CatDist dist_;
};

// Exact per-position posterior marginals P(w_j | z_t) under the bigram
// chain prior and the corruption channel as emission model, by
// forward-backward over the chain.
class ExactPosteriorDenoiser : public Denoiser {
 public:
  ExactPosteriorDenoiser(BigramModel model, NoiseSchedule sched, int mask_id);

  DenoiserOutput denoise(const NoisySeq& z, CorruptionKind kind) const override;
  int vocab_size() const override { return model_.vocab_size(); }

  const BigramModel& model() const { return model_; }

 private:
  BigramModel model_;
  NoiseSchedule sched_;
  int mask_id_;
  // Probability-domain copies of the chain parameters; forward-backward
  // runs scaled in probability space for speed, which is exact up to
  // floating point.
  std::vector<double> initial_p_;
  std::vector<std::vector<double>> transition_p_;
  std::vector<std::vector<double>> transition_p_colmajor_;
};

// Brute-force Bayes oracle: enumerates every clean sequence of the given
// length, weights by chain prior times channel likelihood, and reduces to
// per-position marginals. Only feasible for tiny instances.
DenoiserOutput enumerate_posterior_denoise(const NoisySeq& z, CorruptionKind kind,
                                           const BigramModel& model,
                                           const NoiseSchedule& sched, int mask_id);

// File-backed denoiser that replays stored per-position distributions.
// Keys are (sequence ids, t quantized to 4 decimals). Rows that have
// drifted from normalization by more than 1e-6 are renormalized, with a
// warning counter incremented.
class ReplayDenoiser : public Denoiser {
 public:
  explicit ReplayDenoiser(int vocab_size);
  static ReplayDenoiser load(const std::string& path);

  void add(const std::vector<int>& ids, double t, const DenoiserOutput& out);
  void save(const std::string& path) const;

  DenoiserOutput denoise(const NoisySeq& z, CorruptionKind kind) const override;
  int vocab_size() const override { return vocab_size_; }

  bool has_entry(const std::vector<int>& ids, double t) const;
  size_t entry_count() const { return entries_.size(); }
  int renormalized_rows() const { return renormalized_rows_; }

  static std::string make_key(const std::vector<int>& ids, double t);

 private:
  int vocab_size_;
  std::map<std::string, std::vector<std::vector<double>>> entries_;
  mutable int renormalized_rows_ = 0;
};

}  // namespace difflm
