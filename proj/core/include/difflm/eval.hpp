#pragma once

#include <string>
#include <vector>

#include "difflm/ctc.hpp"
#include "difflm/denoiser.hpp"
#include "difflm/joint.hpp"
#include "difflm/rescorer.hpp"
#include "difflm/vocab.hpp"

namespace difflm {

struct EvalPair {
  std::vector<int> reference;
  std::vector<int> hypothesis;
  std::string utt_id;
};

int edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp);

// Corpus-level word error rate: summed edit distance over summed
// reference length, in percent.
double wer_percent(const std::vector<EvalPair>& pairs);

// Per-utterance seed chain shared by every pipeline stage.
inline uint64_t utterance_seed(uint64_t global_seed, const std::string& utt_id) {
  return derive_seed(global_seed, hash_string(utt_id));
}

struct PplResult {
  double ppl = 0.0;
  double nll_per_token = 0.0;
  double nll_std_error = 0.0;  // standard error of nll_per_token
  long long tokens = 0;
};

// Monte-Carlo perplexity upper bound. Masked kind: per position, the
// position itself is forced masked while the rest are masked at an
// independent uniform rate, and the bound accumulates the negative
// log-probability of the true token (the per-position form of the
// schedule-weighted bound; the rate weight cancels analytically, so a
// uniform denoiser yields exactly |V|). Uniform kind: discrete-time
// bound over usdm_grid levels, summing per-position KL between the true
// reverse posterior and the model-averaged one, plus reconstruction at
// the lowest level; the level-1 prior term is exactly zero.
PplResult ppl_upper_bound(const std::vector<std::vector<int>>& corpus, const Denoiser& d,
                          const NoiseSchedule& sched, CorruptionKind kind, int samples,
                          uint64_t seed, int workers = 1, int usdm_grid = 32);

struct BenchmarkSpec {
  int n_utts = 500;
  int min_len = 6;
  int max_len = 12;
  int vocab_size = 26;  // ordinary tokens including <unk>
  int frames_per_token = 1;
  double noise = 0.15;
  double blank_mass = 0.3;
  double smoothing = 0.1;   // bigram fit when building from a text corpus
  uint64_t seed = 1;
  std::string corpus_path;  // empty: synthesize a concentrated chain
};

struct Benchmark {
  Vocabulary vocab;
  BigramModel model;
  std::vector<std::string> utt_ids;
  std::vector<std::vector<int>> refs;
  std::vector<CtcPosterior> posteriors;
  BenchmarkSpec spec;
};

// Directory layout: refs.txt, vocab.txt(+.json), model.txt, manifest.json,
// posteriors/<utt>.post. N-best files land in nbest/ via a later stage.
Benchmark generate_benchmark(const std::string& dir, const BenchmarkSpec& spec);
Benchmark load_benchmark(const std::string& dir);

std::vector<NBestList> compute_nbest_lists(const Benchmark& bench, int beam, int n,
                                           int workers);

// WER of the top CTC hypothesis of each list.
double nbest_baseline_wer(const Benchmark& bench, const std::vector<NBestList>& lists);

struct ResultRow {
  std::string config;
  double wer = 0.0;
  double stddev = 0.0;
  double wall_time_s = 0.0;
};

enum class SweepMode { rescore, joint };

SweepMode parse_sweep_mode(const std::string& name);

struct SweepSpec {
  SweepMode mode = SweepMode::rescore;
  std::string bench_dir;
  // Rescore grid: kinds x k_values x lambda_values.
  std::vector<EstimatorKind> kinds = {EstimatorKind::sample_mask};
  std::vector<int> k_values = {16};
  // Joint grid: t_start_values x step_values x lambda_values.
  std::vector<double> t_start_values = {0.3};
  std::vector<int> step_values = {16};
  std::vector<double> lambda_values = {0.3};  // lambda_difflm
  std::vector<uint64_t> seeds = {1};
  double lambda_ctc = 1.0;
  double lambda_prior = 0.0;
  double t_fixed = 0.5;
  int beam = 16;
  int nbest = 16;
  FinalRule final_rule = FinalRule::argmax;
  int workers = 1;
  // Off by default so reruns produce byte-identical reports.
  bool measure_time = false;
};

// One row per grid point, WER mean and sample stddev over the seeds.
std::vector<ResultRow> run_sweep(const SweepSpec& spec);

// CSV "config,wer,stddev,wall_time_s"; wer/stddev with 4 decimals, wall
// time with 3.
void emit_report(const std::vector<ResultRow>& rows, const std::string& path);

}  // namespace difflm
