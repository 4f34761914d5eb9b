#include "difflm/denoiser.hpp"

#include "difflm/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace difflm {

namespace {
constexpr double kProbFloor = 1e-10;

std::vector<double> floored_log_row(const std::vector<double>& probs) {
  std::vector<double> row(probs.size());
  double total = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    double p = std::max(probs[i], kProbFloor);
    row[i] = p;
    total += p;
  }
  if (!(total > 0.0)) throw std::runtime_error("denoiser: zero-mass distribution row");
  for (auto& p : row) p = std::log(p / total);
  return row;
}
}  // namespace

CorruptionKind parse_corruption_kind(const std::string& name) {
  if (name == "mdlm") return CorruptionKind::mdlm;
  if (name == "usdm") return CorruptionKind::usdm;
  throw std::runtime_error("denoiser: unknown corruption kind: " + name);
}

std::string corruption_kind_name(CorruptionKind kind) {
  return kind == CorruptionKind::mdlm ? "mdlm" : "usdm";
}

BigramModel::BigramModel(std::vector<double> initial,
                         std::vector<std::vector<double>> transition)
    : initial_(std::move(initial)), transition_(std::move(transition)) {}

BigramModel BigramModel::fit(const std::vector<std::vector<int>>& corpus, int vocab_size,
                             double smoothing) {
  if (corpus.empty()) throw std::runtime_error("denoiser: empty corpus");
  if (!(smoothing > 0.0)) throw std::runtime_error("denoiser: smoothing must be positive");

  std::vector<double> init_counts(vocab_size, smoothing);
  std::vector<std::vector<double>> trans_counts(vocab_size,
                                                std::vector<double>(vocab_size, smoothing));
  for (const auto& seq : corpus) {
    if (seq.empty()) continue;
    init_counts[seq[0]] += 1.0;
    for (size_t i = 1; i < seq.size(); ++i) {
      trans_counts[seq[i - 1]][seq[i]] += 1.0;
    }
  }
  std::vector<double> initial = floored_log_row(init_counts);
  std::vector<std::vector<double>> transition(vocab_size);
  for (int u = 0; u < vocab_size; ++u) transition[u] = floored_log_row(trans_counts[u]);
  return BigramModel(std::move(initial), std::move(transition));
}

BigramModel BigramModel::from_probs(const std::vector<double>& initial,
                                    const std::vector<std::vector<double>>& transition) {
  int n = static_cast<int>(initial.size());
  if (static_cast<int>(transition.size()) != n) {
    throw std::runtime_error("denoiser: transition matrix shape mismatch");
  }
  std::vector<std::vector<double>> trans(n);
  for (int u = 0; u < n; ++u) {
    if (static_cast<int>(transition[u].size()) != n) {
      throw std::runtime_error("denoiser: transition matrix shape mismatch");
    }
    trans[u] = floored_log_row(transition[u]);
  }
  return BigramModel(floored_log_row(initial), std::move(trans));
}

double BigramModel::sequence_log_prob(const std::vector<int>& ids) const {
  if (ids.empty()) return 0.0;
  double lp = initial_[ids[0]];
  for (size_t i = 1; i < ids.size(); ++i) lp += transition_[ids[i - 1]][ids[i]];
  return lp;
}

double BigramModel::corpus_perplexity(const std::vector<std::vector<int>>& corpus) const {
  double nll = 0.0;
  long long tokens = 0;
  for (const auto& seq : corpus) {
    nll -= sequence_log_prob(seq);
    tokens += static_cast<long long>(seq.size());
  }
  if (tokens == 0) throw std::runtime_error("denoiser: perplexity of an empty corpus");
  return std::exp(nll / static_cast<double>(tokens));
}

void BigramModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("denoiser: cannot write model file: " + path);
  char buf[64];
  auto write_row = [&](const std::vector<double>& row) {
    for (size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      if (i > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  };
  out << "DIFFLM-BIGRAM 1 " << vocab_size() << '\n';
  write_row(initial_);
  for (const auto& row : transition_) write_row(row);
}

BigramModel BigramModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("denoiser: cannot open model file: " + path);
  std::string magic;
  int version = 0, n = 0;
  in >> magic >> version >> n;
  if (magic != "DIFFLM-BIGRAM" || version != 1 || n < 2) {
    throw std::runtime_error("denoiser: bad model header in " + path);
  }
  auto read_row = [&](std::vector<double>& row) {
    row.resize(n);
    for (auto& lp : row) {
      if (!(in >> lp)) throw std::runtime_error("denoiser: truncated model file");
    }
  };
  std::vector<double> initial;
  read_row(initial);
  std::vector<std::vector<double>> transition(n);
  for (auto& row : transition) read_row(row);
  return BigramModel(std::move(initial), std::move(transition));
}

std::vector<int> BigramModel::sample_sequence(int length, Rng& rng) const {
  std::vector<int> out;
  out.reserve(length);
  int prev = -1;
  for (int i = 0; i < length; ++i) {
    const std::vector<double>& row = (i == 0) ? initial_ : transition_[prev];
    CatDist d{row};
    prev = rng.sample(d);
    out.push_back(prev);
  }
  return out;
}

ExactPosteriorDenoiser::ExactPosteriorDenoiser(BigramModel model, NoiseSchedule sched,
                                               int mask_id)
    : model_(std::move(model)), sched_(sched), mask_id_(mask_id) {
  int n = model_.vocab_size();
  initial_p_.resize(n);
  for (int v = 0; v < n; ++v) initial_p_[v] = std::exp(model_.initial_log_prob(v));
  transition_p_.assign(n, std::vector<double>(n));
  transition_p_colmajor_.assign(n, std::vector<double>(n));
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      double p = std::exp(model_.transition_log_prob(u, v));
      transition_p_[u][v] = p;
      transition_p_colmajor_[v][u] = p;
    }
  }
}

// Emission column for one position: e_j(w) = P(z_j | w) up to a constant.
// mdlm observes either the clean token (delta) or mask (uninformative);
// usdm mixes a keep spike with a uniform resample.
namespace {
struct Emission {
  // delta_token >= 0 means the column is an indicator on that token.
  int delta_token = -1;
  double match = 1.0;  // value at w = z_j when not a delta
  double other = 1.0;  // value elsewhere
  int z = -1;

  double at(int w) const {
    if (delta_token >= 0) return w == delta_token ? 1.0 : 0.0;
    return w == z ? match : other;
  }
};

Emission emission_for(int z_j, CorruptionKind kind, double alpha_t, int vocab_size,
                      int mask_id) {
  Emission e;
  if (kind == CorruptionKind::mdlm) {
    if (z_j == mask_id) return e;  // uninformative: all ones
    if (z_j < 0 || z_j >= vocab_size) {
      throw std::runtime_error("denoiser: token outside vocabulary: " + std::to_string(z_j));
    }
    e.delta_token = z_j;
    return e;
  }
  if (z_j == mask_id) throw std::runtime_error("denoiser: mask token under uniform kind");
  if (z_j < 0 || z_j >= vocab_size) {
    throw std::runtime_error("denoiser: token outside vocabulary: " + std::to_string(z_j));
  }
  e.z = z_j;
  double uniform = (1.0 - alpha_t) / vocab_size;
  e.match = alpha_t + uniform;
  e.other = uniform;
  return e;
}
}  // namespace

DenoiserOutput ExactPosteriorDenoiser::denoise(const NoisySeq& z, CorruptionKind kind) const {
  int n = model_.vocab_size();
  int s_len = static_cast<int>(z.ids.size());
  DenoiserOutput out;
  if (s_len == 0) return out;
  double alpha_t = sched_.alpha(z.t);

  std::vector<Emission> emis(s_len);
  for (int j = 0; j < s_len; ++j) {
    emis[j] = emission_for(z.ids[j], kind, alpha_t, n, mask_id_);
  }

  // Scaled forward-backward in probability domain. Each fwd/bwd row is
  // normalized to sum 1; the scales cancel in the per-position posterior.
  std::vector<std::vector<double>> fwd(s_len, std::vector<double>(n, 0.0));
  std::vector<double> prev_in(n);
  for (int j = 0; j < s_len; ++j) {
    std::vector<double>& row = fwd[j];
    if (j == 0) {
      for (int v = 0; v < n; ++v) row[v] = initial_p_[v] * emis[0].at(v);
    } else {
      const std::vector<double>& prev = fwd[j - 1];
      if (emis[j].delta_token >= 0) {
        int v = emis[j].delta_token;
        const std::vector<double>& col = transition_p_colmajor_[v];
        double acc = 0.0;
        for (int u = 0; u < n; ++u) acc += prev[u] * col[u];
        row[v] = acc;
      } else {
        for (int v = 0; v < n; ++v) {
          const std::vector<double>& col = transition_p_colmajor_[v];
          double acc = 0.0;
          for (int u = 0; u < n; ++u) acc += prev[u] * col[u];
          row[v] = acc * emis[j].at(v);
        }
      }
    }
    double total = 0.0;
    for (double p : row) total += p;
    if (!(total > 0.0)) throw std::runtime_error("denoiser: forward pass lost all mass");
    double inv = 1.0 / total;
    for (auto& p : row) p *= inv;
  }

  std::vector<double> bwd(n, 1.0);
  std::vector<double> bwd_next(n);
  out.per_position.resize(s_len);
  std::vector<double> post(n);
  for (int j = s_len - 1; j >= 0; --j) {
    for (int v = 0; v < n; ++v) post[v] = fwd[j][v] * bwd[v];
    out.per_position[j] = CatDist::from_probs(post);
    if (j == 0) break;
    // bwd_prev[u] = sum_v T[u][v] * e_j(v) * bwd[v]
    for (int v = 0; v < n; ++v) prev_in[v] = emis[j].at(v) * bwd[v];
    double total = 0.0;
    if (emis[j].delta_token >= 0) {
      int v = emis[j].delta_token;
      double w = prev_in[v];
      const std::vector<double>& col = transition_p_colmajor_[v];
      for (int u = 0; u < n; ++u) {
        bwd_next[u] = col[u] * w;
        total += bwd_next[u];
      }
    } else {
      for (int u = 0; u < n; ++u) {
        const std::vector<double>& trow = transition_p_[u];
        double acc = 0.0;
        for (int v = 0; v < n; ++v) acc += trow[v] * prev_in[v];
        bwd_next[u] = acc;
        total += acc;
      }
    }
    if (!(total > 0.0)) throw std::runtime_error("denoiser: backward pass lost all mass");
    double inv = 1.0 / total;
    for (int u = 0; u < n; ++u) bwd[u] = bwd_next[u] * inv;
  }
  return out;
}

DenoiserOutput enumerate_posterior_denoise(const NoisySeq& z, CorruptionKind kind,
                                           const BigramModel& model,
                                           const NoiseSchedule& sched, int mask_id) {
  int n = model.vocab_size();
  int s_len = static_cast<int>(z.ids.size());
  DenoiserOutput out;
  if (s_len == 0) return out;
  double total = std::pow(static_cast<double>(n), s_len);
  if (s_len > 8 || total > 2e6) {
    throw std::runtime_error("denoiser: enumeration too large");
  }
  double alpha_t = sched.alpha(z.t);
  std::vector<Emission> emis(s_len);
  for (int j = 0; j < s_len; ++j) {
    emis[j] = emission_for(z.ids[j], kind, alpha_t, n, mask_id);
  }

  std::vector<std::vector<double>> acc(s_len, std::vector<double>(n, kNegInf));
  std::vector<int> w(s_len, 0);
  while (true) {
    double lw = model.sequence_log_prob(w);
    bool zero = false;
    for (int j = 0; j < s_len && !zero; ++j) {
      double e = emis[j].at(w[j]);
      if (e <= 0.0) {
        zero = true;
      } else {
        lw += std::log(e);
      }
    }
    if (!zero) {
      for (int j = 0; j < s_len; ++j) {
        acc[j][w[j]] = log_sum_exp(acc[j][w[j]], lw);
      }
    }
    int pos = s_len - 1;
    while (pos >= 0 && ++w[pos] == n) {
      w[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }

  out.per_position.resize(s_len);
  for (int j = 0; j < s_len; ++j) {
    CatDist d{acc[j]};
    d.renormalize();
    out.per_position[j] = std::move(d);
  }
  return out;
}

ReplayDenoiser::ReplayDenoiser(int vocab_size) : vocab_size_(vocab_size) {}

std::string ReplayDenoiser::make_key(const std::vector<int>& ids, double t) {
  char tbuf[32];
  std::snprintf(tbuf, sizeof(tbuf), "%.4f", t);
  std::string key = tbuf;
  key += '|';
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) key += ' ';
    key += std::to_string(ids[i]);
  }
  return key;
}

void ReplayDenoiser::add(const std::vector<int>& ids, double t, const DenoiserOutput& out) {
  if (static_cast<int>(out.per_position.size()) != static_cast<int>(ids.size())) {
    throw std::runtime_error("denoiser: replay entry length mismatch");
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(out.per_position.size());
  for (const auto& d : out.per_position) {
    if (static_cast<int>(d.size()) != vocab_size_) {
      throw std::runtime_error("denoiser: replay entry vocabulary size mismatch");
    }
    rows.push_back(d.log_probs);
  }
  entries_[make_key(ids, t)] = std::move(rows);
}

void ReplayDenoiser::save(const std::string& path) const {
  std::ofstream outf(path);
  if (!outf) throw std::runtime_error("denoiser: cannot write replay file: " + path);
  char buf[64];
  outf << "DIFFLM-REPLAY 1 " << vocab_size_ << '\n';
  for (const auto& [key, rows] : entries_) {
    auto bar = key.find('|');
    outf << "KEY " << key.substr(0, bar) << ' ' << key.substr(bar + 1) << '\n';
    for (const auto& row : rows) {
      for (size_t i = 0; i < row.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
        if (i > 0) outf << ' ';
        outf << buf;
      }
      outf << '\n';
    }
  }
}

ReplayDenoiser ReplayDenoiser::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("denoiser: cannot open replay file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("denoiser: empty replay file: " + path);
  std::istringstream header(line);
  std::string magic;
  int version = 0, vocab_size = 0;
  header >> magic >> version >> vocab_size;
  if (magic != "DIFFLM-REPLAY" || version != 1 || vocab_size < 2) {
    throw std::runtime_error("denoiser: bad replay header: " + line);
  }
  ReplayDenoiser store(vocab_size);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream key_line(line);
    std::string tag;
    key_line >> tag;
    if (tag != "KEY") throw std::runtime_error("denoiser: expected KEY line, got: " + line);
    double t = 0.0;
    key_line >> t;
    std::vector<int> ids;
    int id;
    while (key_line >> id) ids.push_back(id);
    std::vector<std::vector<double>> rows;
    rows.reserve(ids.size());
    for (size_t j = 0; j < ids.size(); ++j) {
      if (!std::getline(in, line)) {
        throw std::runtime_error("denoiser: truncated replay entry");
      }
      std::vector<double> row = parse_double_row(line);
      if (static_cast<int>(row.size()) != vocab_size) {
        throw std::runtime_error("denoiser: replay row has wrong vocabulary size");
      }
      rows.push_back(std::move(row));
    }
    store.entries_[make_key(ids, t)] = std::move(rows);
  }
  return store;
}

bool ReplayDenoiser::has_entry(const std::vector<int>& ids, double t) const {
  return entries_.count(make_key(ids, t)) > 0;
}

DenoiserOutput ReplayDenoiser::denoise(const NoisySeq& z, CorruptionKind kind) const {
  (void)kind;
  auto it = entries_.find(make_key(z.ids, z.t));
  if (it == entries_.end()) {
    throw std::runtime_error("denoiser: no replay entry for key " + make_key(z.ids, z.t));
  }
  DenoiserOutput out;
  out.per_position.reserve(it->second.size());
  for (const auto& row : it->second) {
    CatDist d{row};
    if (!d.is_normalized(1e-6)) {
      d.renormalize();
      ++renormalized_rows_;
    }
    out.per_position.push_back(std::move(d));
  }
  return out;
}

}  // namespace difflm
