#include "difflm/rescorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace difflm {

namespace {

void check_config(const std::vector<int>& hyp, const EstimatorConfig& cfg) {
  if (hyp.empty()) throw std::runtime_error("rescorer: empty hypothesis");
  if (cfg.samples < 1) throw std::runtime_error("rescorer: K must be >= 1");
  if (!(cfg.t_fixed > 0.0 && cfg.t_fixed < 1.0)) {
    throw std::runtime_error("rescorer: t_fixed outside (0, 1)");
  }
}

// Masks positions of hyp per the Bernoulli(1-alpha_t) rule, redrawing
// until at least one position is masked.
NoisySeq draw_nonempty_mask(const std::vector<int>& hyp, double t, const NoiseSchedule& sched,
                            int mask_id, Rng& rng) {
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    NoisySeq z = mdlm_corrupt(hyp, t, sched, mask_id, rng);
    if (!z.masked_positions.empty()) return z;
  }
  throw std::runtime_error("rescorer: could not draw a non-empty mask");
}

double masked_log_prob_sum(const DenoiserOutput& out, const NoisySeq& z,
                           const std::vector<int>& hyp) {
  double sum = 0.0;
  for (int j : z.masked_positions) sum += out.per_position[j].log_probs[hyp[j]];
  return sum;
}

ScoreResult mean_and_se(const std::vector<double>& stats) {
  ScoreResult r;
  r.score = mean(stats);
  if (stats.size() > 1) {
    r.std_error = std::sqrt(variance(stats) / static_cast<double>(stats.size()));
  }
  return r;
}

}  // namespace

EstimatorKind parse_estimator_kind(const std::string& name) {
  if (name == "seq_norm") return EstimatorKind::seq_norm;
  if (name == "sample_mask") return EstimatorKind::sample_mask;
  if (name == "global_mask") return EstimatorKind::global_mask;
  if (name == "coupled") return EstimatorKind::coupled;
  if (name == "usdm") return EstimatorKind::usdm;
  throw std::runtime_error("rescorer: unknown estimator kind: " + name);
}

std::string estimator_kind_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::seq_norm: return "seq_norm";
    case EstimatorKind::sample_mask: return "sample_mask";
    case EstimatorKind::global_mask: return "global_mask";
    case EstimatorKind::coupled: return "coupled";
    case EstimatorKind::usdm: return "usdm";
  }
  throw std::runtime_error("rescorer: unknown estimator kind");
}

ScoreResult mdlm_score(const std::vector<int>& hyp, const EstimatorConfig& cfg,
                       const Denoiser& d, const NoiseSchedule& sched, uint64_t hyp_seed) {
  check_config(hyp, cfg);
  if (cfg.kind == EstimatorKind::usdm) {
    throw std::runtime_error("rescorer: usdm kind scored by usdm_score");
  }
  int s_len = static_cast<int>(hyp.size());
  double inv_len = 1.0 / s_len;
  double t = cfg.t_fixed;
  int mask_id = d.mask_id();
  double schedule_weight = sched.alpha_prime(t) / (1.0 - sched.alpha(t));

  // Per-sample statistics; the reported score is their mean except for
  // the pooled global_mask ratio.
  std::vector<double> stats(cfg.samples);
  std::vector<double> mask_counts(cfg.samples, 0.0);
  for (int k = 0; k < cfg.samples; ++k) {
    Rng rng(derive_seed(hyp_seed, static_cast<uint64_t>(k)));
    switch (cfg.kind) {
      case EstimatorKind::seq_norm: {
        NoisySeq z = draw_nonempty_mask(hyp, t, sched, mask_id, rng);
        double sum = masked_log_prob_sum(d.denoise(z, CorruptionKind::mdlm), z, hyp);
        stats[k] = -inv_len * schedule_weight * sum;
        break;
      }
      case EstimatorKind::sample_mask: {
        NoisySeq z = draw_nonempty_mask(hyp, t, sched, mask_id, rng);
        double sum = masked_log_prob_sum(d.denoise(z, CorruptionKind::mdlm), z, hyp);
        stats[k] = sum / static_cast<double>(z.masked_positions.size());
        break;
      }
      case EstimatorKind::global_mask: {
        NoisySeq z = draw_nonempty_mask(hyp, t, sched, mask_id, rng);
        stats[k] = masked_log_prob_sum(d.denoise(z, CorruptionKind::mdlm), z, hyp);
        mask_counts[k] = static_cast<double>(z.masked_positions.size());
        break;
      }
      case EstimatorKind::coupled: {
        // A uniform random subset and its complement; together the two
        // passes cover every position exactly once.
        NoisySeq z1, z2;
        z1.ids = hyp;
        z2.ids = hyp;
        z1.t = t;
        z2.t = t;
        for (int j = 0; j < s_len; ++j) {
          if (rng.bernoulli(0.5)) {
            z1.ids[j] = mask_id;
            z1.masked_positions.push_back(j);
          } else {
            z2.ids[j] = mask_id;
            z2.masked_positions.push_back(j);
          }
        }
        double sum = 0.0;
        if (!z1.masked_positions.empty()) {
          sum += masked_log_prob_sum(d.denoise(z1, CorruptionKind::mdlm), z1, hyp);
        }
        if (!z2.masked_positions.empty()) {
          sum += masked_log_prob_sum(d.denoise(z2, CorruptionKind::mdlm), z2, hyp);
        }
        stats[k] = inv_len * sum;
        break;
      }
      case EstimatorKind::usdm: break;
    }
  }

  if (cfg.kind != EstimatorKind::global_mask) return mean_and_se(stats);

  // Pooled ratio: all masked log-probs over all masked positions. The
  // standard error follows the delta method for a ratio of means.
  double sum_lp = 0.0, sum_count = 0.0;
  for (int k = 0; k < cfg.samples; ++k) {
    sum_lp += stats[k];
    sum_count += mask_counts[k];
  }
  ScoreResult r;
  r.score = sum_lp / sum_count;
  if (cfg.samples > 1) {
    double mean_count = sum_count / cfg.samples;
    double resid_sq = 0.0;
    for (int k = 0; k < cfg.samples; ++k) {
      double resid = stats[k] - r.score * mask_counts[k];
      resid_sq += resid * resid;
    }
    double k_d = static_cast<double>(cfg.samples);
    r.std_error = std::sqrt(resid_sq / (k_d * (k_d - 1.0))) / mean_count;
  }
  return r;
}

ScoreResult usdm_score(const std::vector<int>& hyp, const EstimatorConfig& cfg,
                       const Denoiser& d, const NoiseSchedule& sched, uint64_t hyp_seed) {
  check_config(hyp, cfg);
  if (cfg.kind != EstimatorKind::usdm) {
    throw std::runtime_error("rescorer: masked kinds scored by mdlm_score");
  }
  int s_len = static_cast<int>(hyp.size());
  double inv_len = 1.0 / s_len;
  std::vector<double> stats(cfg.samples);
  for (int k = 0; k < cfg.samples; ++k) {
    Rng rng(derive_seed(hyp_seed, static_cast<uint64_t>(k)));
    NoisySeq z = usdm_corrupt(hyp, cfg.t_fixed, sched, d.vocab_size(), rng);
    DenoiserOutput out = d.denoise(z, CorruptionKind::usdm);
    double sum = 0.0;
    for (int j = 0; j < s_len; ++j) sum += out.per_position[j].log_probs[hyp[j]];
    stats[k] = inv_len * sum;
  }
  return mean_and_se(stats);
}

ScoreResult score_hypothesis(const std::vector<int>& hyp, const EstimatorConfig& cfg,
                             const Denoiser& d, const NoiseSchedule& sched,
                             uint64_t hyp_seed) {
  return cfg.kind == EstimatorKind::usdm ? usdm_score(hyp, cfg, d, sched, hyp_seed)
                                         : mdlm_score(hyp, cfg, d, sched, hyp_seed);
}

double exact_expected_score(const std::vector<int>& hyp, EstimatorKind kind, double t,
                            const Denoiser& d, const NoiseSchedule& sched) {
  if (hyp.empty()) throw std::runtime_error("rescorer: empty hypothesis");
  int s_len = static_cast<int>(hyp.size());
  double inv_len = 1.0 / s_len;
  int mask_id = d.mask_id();

  if (kind == EstimatorKind::usdm) {
    int n = d.vocab_size();
    if (s_len > 6 || n > 6) throw std::runtime_error("rescorer: enumeration too large");
    double alpha_t = sched.alpha(t);
    double uniform = (1.0 - alpha_t) / n;
    // Enumerate every noisy sequence weighted by the product channel.
    std::vector<int> z(s_len, 0);
    double acc = 0.0;
    while (true) {
      double weight = 1.0;
      for (int j = 0; j < s_len; ++j) {
        weight *= (z[j] == hyp[j] ? alpha_t + uniform : uniform);
      }
      NoisySeq noisy{z, t, {}};
      DenoiserOutput out = d.denoise(noisy, CorruptionKind::usdm);
      double sum = 0.0;
      for (int j = 0; j < s_len; ++j) sum += out.per_position[j].log_probs[hyp[j]];
      acc += weight * inv_len * sum;
      int pos = s_len - 1;
      while (pos >= 0 && ++z[pos] == n) {
        z[pos] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
    return acc;
  }

  if (s_len > 12) throw std::runtime_error("rescorer: enumeration too large");
  double mask_prob = 1.0 - sched.alpha(t);
  double schedule_weight = sched.alpha_prime(t) / (1.0 - sched.alpha(t));
  double p_empty = std::pow(1.0 - mask_prob, s_len);

  // Enumerate every mask pattern with its Bernoulli probability.
  double acc = 0.0;
  double acc_counts = 0.0;
  uint64_t patterns = uint64_t{1} << s_len;
  for (uint64_t bits = 0; bits < patterns; ++bits) {
    NoisySeq z;
    z.ids = hyp;
    z.t = t;
    double prob = 1.0;
    for (int j = 0; j < s_len; ++j) {
      if (bits >> j & 1) {
        z.ids[j] = mask_id;
        z.masked_positions.push_back(j);
        prob *= mask_prob;
      } else {
        prob *= 1.0 - mask_prob;
      }
    }
    if (kind == EstimatorKind::coupled) {
      // Pattern probability is uniform 2^-len: z is the first half, the
      // complement is the second.
      NoisySeq z2;
      z2.ids = hyp;
      z2.t = t;
      for (int j = 0; j < s_len; ++j) {
        if (!(bits >> j & 1)) {
          z2.ids[j] = mask_id;
          z2.masked_positions.push_back(j);
        }
      }
      double sum = 0.0;
      if (!z.masked_positions.empty()) {
        sum += masked_log_prob_sum(d.denoise(z, CorruptionKind::mdlm), z, hyp);
      }
      if (!z2.masked_positions.empty()) {
        sum += masked_log_prob_sum(d.denoise(z2, CorruptionKind::mdlm), z2, hyp);
      }
      acc += inv_len * sum / static_cast<double>(patterns);
      continue;
    }
    if (z.masked_positions.empty()) continue;
    double sum = masked_log_prob_sum(d.denoise(z, CorruptionKind::mdlm), z, hyp);
    switch (kind) {
      case EstimatorKind::seq_norm:
        acc += prob * (-inv_len * schedule_weight * sum);
        break;
      case EstimatorKind::sample_mask:
        acc += prob * sum / static_cast<double>(z.masked_positions.size());
        break;
      case EstimatorKind::global_mask:
        acc += prob * sum;
        acc_counts += prob * static_cast<double>(z.masked_positions.size());
        break;
      default: break;
    }
  }
  switch (kind) {
    case EstimatorKind::seq_norm:
    case EstimatorKind::sample_mask:
      // Resampling conditions the estimator on a non-empty mask.
      return acc / (1.0 - p_empty);
    case EstimatorKind::global_mask:
      // Ratio of expectations; the empty pattern contributes zero to
      // both numerator and denominator, so no conditioning is needed.
      return acc / acc_counts;
    case EstimatorKind::coupled:
      // Both halves were accumulated unconditionally, so acc is already
      // the expectation over uniform subsets.
      return acc;
    default:
      throw std::runtime_error("rescorer: unhandled estimator kind");
  }
}

double combine_scores(double ctc_lp, double s_difflm, double prior_lp,
                      const RescoreWeights& w) {
  if (ctc_lp == kNegInf) return kNegInf;
  double total = 0.0;
  if (w.lambda_ctc != 0.0) total += w.lambda_ctc * ctc_lp;
  if (w.lambda_difflm != 0.0) total += w.lambda_difflm * s_difflm;
  if (w.lambda_prior != 0.0) total -= w.lambda_prior * prior_lp;
  return total;
}

RescoredList rescore_nbest(const NBestList& list, const EstimatorConfig& cfg,
                           const RescoreWeights& w, const Denoiser& d,
                           const LabelPrior& prior, const NoiseSchedule& sched,
                           uint64_t utt_seed) {
  if (list.entries.empty()) throw std::runtime_error("rescorer: empty n-best list");
  struct Ranked {
    RescoredEntry entry;
    int orig_rank;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(list.entries.size());
  for (size_t i = 0; i < list.entries.size(); ++i) {
    const NBestEntry& in = list.entries[i];
    RescoredEntry out;
    out.ids = in.ids;
    out.ctc_logprob = in.ctc_logprob;
    double prior_lp = 0.0;
    if (!in.ids.empty()) {
      uint64_t rank_key = cfg.share_masks ? 0 : i + 1;
      uint64_t hyp_seed = derive_seed(utt_seed, rank_key);
      out.s_difflm = score_hypothesis(in.ids, cfg, d, sched, hyp_seed).score;
      prior_lp = prior.sequence_log_prob(in.ids);
    }
    out.combined = combine_scores(in.ctc_logprob, out.s_difflm, prior_lp, w);
    ranked.push_back(Ranked{std::move(out), static_cast<int>(i)});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.entry.combined != b.entry.combined) return a.entry.combined > b.entry.combined;
    return a.orig_rank < b.orig_rank;
  });
  RescoredList out;
  out.entries.reserve(ranked.size());
  for (auto& r : ranked) out.entries.push_back(std::move(r.entry));
  return out;
}

void save_rescored(const std::string& path, const std::string& utt_id,
                   const RescoredList& list) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("rescorer: cannot write rescored file: " + path);
  char buf[64];
  auto write_score = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    out << buf;
  };
  for (size_t i = 0; i < list.entries.size(); ++i) {
    const RescoredEntry& e = list.entries[i];
    out << utt_id << ' ' << (i + 1) << ' ';
    write_score(e.ctc_logprob);
    for (int id : e.ids) out << ' ' << id;
    out << ' ';
    write_score(e.s_difflm);
    out << ' ';
    write_score(e.combined);
    out << '\n';
  }
}

std::pair<std::string, RescoredList> load_rescored(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("rescorer: cannot open rescored file: " + path);
  std::string utt_id;
  RescoredList list;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string f;
    while (ls >> f) fields.push_back(f);
    if (fields.size() < 5) throw std::runtime_error("rescorer: short rescored line: " + line);
    if (utt_id.empty()) {
      utt_id = fields[0];
    } else if (fields[0] != utt_id) {
      throw std::runtime_error("rescorer: rescored file mixes utterances: " + path);
    }
    RescoredEntry e;
    e.ctc_logprob = std::stod(fields[2]);
    // The token ids sit between the CTC score and the two appended
    // score columns.
    for (size_t i = 3; i + 2 < fields.size(); ++i) e.ids.push_back(std::stoi(fields[i]));
    e.s_difflm = std::stod(fields[fields.size() - 2]);
    e.combined = std::stod(fields[fields.size() - 1]);
    list.entries.push_back(std::move(e));
  }
  if (utt_id.empty()) throw std::runtime_error("rescorer: empty rescored file: " + path);
  return {utt_id, list};
}

}  // namespace difflm
