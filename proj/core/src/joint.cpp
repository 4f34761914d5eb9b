#include "difflm/joint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace difflm {

FinalRule parse_final_rule(const std::string& name) {
  if (name == "argmax") return FinalRule::argmax;
  if (name == "sample") return FinalRule::sample;
  throw std::runtime_error("joint: unknown final rule: " + name);
}

std::string final_rule_name(FinalRule rule) {
  return rule == FinalRule::argmax ? "argmax" : "sample";
}

std::vector<std::vector<double>> combined_position_scores(
    const CtcPosterior& p, const std::vector<int>& tau, const std::vector<int>& z,
    double t_l, const Denoiser& d, const RescoreWeights& w) {
  if (z.empty() || z.size() != tau.size()) {
    throw std::runtime_error("joint: state and alignment lengths disagree");
  }
  int n = d.vocab_size();
  int s_len = static_cast<int>(z.size());
  std::vector<std::vector<double>> scores(s_len, std::vector<double>(n, 0.0));

  if (w.lambda_difflm != 0.0) {
    NoisySeq state{z, t_l, {}};
    DenoiserOutput out = d.denoise(state, CorruptionKind::usdm);
    for (int i = 0; i < s_len; ++i) {
      for (int v = 0; v < n; ++v) {
        scores[i][v] = w.lambda_difflm * out.per_position[i].log_probs[v];
      }
    }
  }
  if (w.lambda_ctc != 0.0) {
    for (int i = 0; i < s_len; ++i) {
      CatDist frame = renorm_nonblank(p, tau[i]);
      for (int v = 0; v < n; ++v) {
        double lp = frame.log_probs[v];
        // A zero-probability label stays vetoed even against a finite
        // LM term.
        scores[i][v] = lp == kNegInf ? kNegInf : scores[i][v] + w.lambda_ctc * lp;
      }
    }
  }
  return scores;
}

std::vector<int> denoise_step(const std::vector<std::vector<double>>& scores, Rng& rng,
                              bool final, FinalRule rule) {
  std::vector<int> next(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    if (final && rule == FinalRule::argmax) {
      int best = 0;
      for (size_t v = 1; v < scores[i].size(); ++v) {
        if (scores[i][v] > scores[i][best]) best = static_cast<int>(v);
      }
      next[i] = best;
    } else {
      CatDist d{scores[i]};
      log_softmax(d.log_probs);
      next[i] = rng.sample(d);
    }
  }
  return next;
}

std::vector<int> joint_decode(const CtcPosterior& p, const JointConfig& cfg,
                              const Denoiser& d, const NoiseSchedule& sched,
                              std::vector<DecodeTraceStep>* trace) {
  (void)sched;
  if (!(cfg.t_start > 0.0 && cfg.t_start <= 1.0)) {
    throw std::runtime_error("joint: t_start outside (0, 1]");
  }
  if (cfg.steps < 1) throw std::runtime_error("joint: need at least one step");

  AlignedGreedy greedy = greedy_collapse(p);
  if (greedy.tokens.empty()) return {};

  Rng rng(cfg.seed);
  std::vector<int> z = greedy.tokens;
  int steps = cfg.steps;
  if (trace) trace->push_back(DecodeTraceStep{0, cfg.t_start, z});
  for (int l = 1; l <= steps; ++l) {
    // The state entering step l carries level t_{l-1} on the linear grid
    // from t_start down to 0.
    double t_cur = cfg.t_start * static_cast<double>(steps - (l - 1)) / steps;
    auto scores = combined_position_scores(p, greedy.tau, z, t_cur, d, cfg.weights);
    z = denoise_step(scores, rng, l == steps, cfg.final_rule);
    if (trace) {
      double t_next = cfg.t_start * static_cast<double>(steps - l) / steps;
      trace->push_back(DecodeTraceStep{l, t_next, z});
    }
  }
  return z;
}

void save_decodes(const std::string& path, const std::vector<std::string>& utt_ids,
                  const std::vector<std::vector<int>>& decodes) {
  if (utt_ids.size() != decodes.size()) {
    throw std::runtime_error("joint: utterance id and decode counts disagree");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("joint: cannot write decode file: " + path);
  for (size_t i = 0; i < utt_ids.size(); ++i) {
    out << utt_ids[i];
    for (int id : decodes[i]) out << ' ' << id;
    out << '\n';
  }
}

std::vector<std::pair<std::string, std::vector<int>>> load_decodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("joint: cannot open decode file: " + path);
  std::vector<std::pair<std::string, std::vector<int>>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string utt_id;
    ls >> utt_id;
    std::vector<int> ids;
    int id;
    while (ls >> id) ids.push_back(id);
    out.emplace_back(std::move(utt_id), std::move(ids));
  }
  return out;
}

}  // namespace difflm
