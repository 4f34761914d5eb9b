#include "difflm/ctc.hpp"

#include "difflm/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace difflm {

namespace {

void write_score(std::ostream& out, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  out << buf;
}

void check_frame(const CtcPosterior& p, int frame) {
  if (frame < 0 || frame >= p.frames()) {
    throw std::runtime_error("ctc: frame index out of range: " + std::to_string(frame));
  }
}

}  // namespace

void CtcPosterior::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ctc: cannot write posterior file: " + path);
  out << "CTC-POST 1 " << frames() << ' ' << (vocab_size + 1) << ' ' << blank_col() << '\n';
  for (const auto& row : log_probs) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out << ' ';
      write_score(out, row[i]);
    }
    out << '\n';
  }
}

CtcPosterior CtcPosterior::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ctc: cannot open posterior file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("ctc: empty posterior file: " + path);
  std::istringstream header(line);
  std::string magic;
  int version = 0, frames = 0, cols = 0, blank = 0;
  header >> magic >> version >> frames >> cols >> blank;
  if (magic != "CTC-POST" || version != 1 || frames < 1 || cols < 3 || blank != cols - 1) {
    throw std::runtime_error("ctc: bad posterior header: " + line);
  }
  CtcPosterior p;
  p.vocab_size = cols - 1;
  p.log_probs.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    if (!std::getline(in, line)) throw std::runtime_error("ctc: truncated posterior file");
    std::vector<double> row = parse_double_row(line);
    if (static_cast<int>(row.size()) != cols) {
      throw std::runtime_error("ctc: posterior row has wrong width");
    }
    p.log_probs.push_back(std::move(row));
  }
  return p;
}

double LabelPrior::sequence_log_prob(const std::vector<int>& ids) const {
  double lp = 0.0;
  for (int id : ids) lp += log_probs.log_probs.at(id);
  return lp;
}

void LabelPrior::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ctc: cannot write prior file: " + path);
  out << "CTC-PRIOR 1 " << log_probs.size() << '\n';
  for (size_t i = 0; i < log_probs.log_probs.size(); ++i) {
    if (i > 0) out << ' ';
    write_score(out, log_probs.log_probs[i]);
  }
  out << '\n';
}

LabelPrior LabelPrior::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ctc: cannot open prior file: " + path);
  std::string magic;
  int version = 0, size = 0;
  in >> magic >> version >> size;
  if (magic != "CTC-PRIOR" || version != 1 || size < 2) {
    throw std::runtime_error("ctc: bad prior header in " + path);
  }
  std::string line;
  std::getline(in, line);
  if (!std::getline(in, line)) throw std::runtime_error("ctc: truncated prior file");
  std::vector<double> row = parse_double_row(line);
  if (static_cast<int>(row.size()) != size) {
    throw std::runtime_error("ctc: truncated prior file");
  }
  return LabelPrior{CatDist{std::move(row)}};
}

CtcPosterior simulate_channel(const std::vector<int>& ref, int vocab_size,
                              int frames_per_token, double noise, double blank_mass,
                              Rng& rng) {
  if (ref.empty()) throw std::runtime_error("ctc: empty reference");
  if (!(noise >= 0.0 && noise < 1.0)) throw std::runtime_error("ctc: noise outside [0, 1)");
  if (!(blank_mass >= 0.0 && blank_mass < 1.0)) {
    throw std::runtime_error("ctc: blank_mass outside [0, 1)");
  }
  if (frames_per_token < 1) throw std::runtime_error("ctc: frames_per_token must be >= 1");
  if (vocab_size < 2) throw std::runtime_error("ctc: vocabulary too small for a confuser");

  CtcPosterior p;
  p.vocab_size = vocab_size;
  int blank = vocab_size;
  double sep_blank = std::max(blank_mass, 0.9);
  double sep_rest = (1.0 - sep_blank) / vocab_size;

  for (int token : ref) {
    if (token < 0 || token >= vocab_size) {
      throw std::runtime_error("ctc: reference token outside vocabulary");
    }
    for (int f = 0; f < frames_per_token; ++f) {
      int confuser = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(vocab_size - 1)));
      if (confuser >= token) ++confuser;
      bool swapped = rng.bernoulli(noise);
      int dominant = swapped ? confuser : token;
      int minor = swapped ? token : confuser;
      std::vector<double> probs(vocab_size + 1, 0.0);
      probs[blank] = blank_mass;
      probs[dominant] = (1.0 - noise) * (1.0 - blank_mass);
      probs[minor] += noise * (1.0 - blank_mass);
      p.log_probs.push_back(CatDist::from_probs(probs).log_probs);
    }
    std::vector<double> sep(vocab_size + 1, sep_rest);
    sep[blank] = sep_blank;
    p.log_probs.push_back(CatDist::from_probs(sep).log_probs);
  }
  return p;
}

AlignedGreedy greedy_collapse(const CtcPosterior& p) {
  AlignedGreedy out;
  int prev = -1;
  for (int t = 0; t < p.frames(); ++t) {
    const auto& row = p.log_probs[t];
    int best = 0;
    for (int v = 1; v < static_cast<int>(row.size()); ++v) {
      if (row[v] > row[best]) best = v;
    }
    if (best != p.blank_col() && best != prev) {
      out.tokens.push_back(best);
      out.tau.push_back(t);
    }
    prev = best;
  }
  return out;
}

CatDist renorm_nonblank(const CtcPosterior& p, int frame) {
  check_frame(p, frame);
  const auto& row = p.log_probs[frame];
  CatDist d{std::vector<double>(row.begin(), row.begin() + p.vocab_size)};
  d.renormalize();
  return d;
}

double ctc_forward_score(const CtcPosterior& p, const std::vector<int>& labels) {
  int frames = p.frames();
  int blank = p.blank_col();
  for (int id : labels) {
    if (id < 0 || id >= p.vocab_size) {
      throw std::runtime_error("ctc: label outside vocabulary: " + std::to_string(id));
    }
  }
  if (labels.empty()) {
    double lp = 0.0;
    for (int t = 0; t < frames; ++t) lp += p.log_probs[t][blank];
    return lp;
  }

  // Blank-interleaved label row: blank, l0, blank, l1, ..., blank.
  int s_len = static_cast<int>(labels.size());
  int ext = 2 * s_len + 1;
  auto ext_label = [&](int i) { return i % 2 == 0 ? blank : labels[i / 2]; };

  std::vector<double> alpha(ext, kNegInf);
  std::vector<double> next(ext);
  alpha[0] = p.log_probs[0][blank];
  alpha[1] = p.log_probs[0][labels[0]];
  for (int t = 1; t < frames; ++t) {
    const auto& row = p.log_probs[t];
    for (int i = 0; i < ext; ++i) {
      double acc = alpha[i];
      if (i >= 1) acc = log_sum_exp(acc, alpha[i - 1]);
      // Skip transition over a blank is allowed unless it would merge a
      // repeated label.
      if (i >= 2 && ext_label(i) != blank && ext_label(i) != ext_label(i - 2)) {
        acc = log_sum_exp(acc, alpha[i - 2]);
      }
      next[i] = acc + row[ext_label(i)];
    }
    std::swap(alpha, next);
  }
  return log_sum_exp(alpha[ext - 1], alpha[ext - 2]);
}

namespace {

struct PrefixMass {
  double blank_lp = kNegInf;     // paths ending in blank
  double nonblank_lp = kNegInf;  // paths ending in the last label

  double total() const { return log_sum_exp(blank_lp, nonblank_lp); }
};

}  // namespace

NBestList prefix_beam_nbest(const CtcPosterior& p, int beam, int n) {
  if (n < 1 || beam < n) throw std::runtime_error("ctc: need beam >= n >= 1");
  int blank = p.blank_col();

  std::map<std::vector<int>, PrefixMass> beams;
  beams[{}] = PrefixMass{0.0, kNegInf};

  for (int t = 0; t < p.frames(); ++t) {
    const auto& row = p.log_probs[t];
    std::map<std::vector<int>, PrefixMass> next;
    for (const auto& [prefix, mass] : beams) {
      double total = mass.total();
      // Blank keeps the prefix.
      {
        PrefixMass& nm = next[prefix];
        nm.blank_lp = log_sum_exp(nm.blank_lp, total + row[blank]);
      }
      int last = prefix.empty() ? -1 : prefix.back();
      for (int v = 0; v < p.vocab_size; ++v) {
        double lp = row[v];
        if (lp == kNegInf) continue;
        if (v == last) {
          // Same label without an intervening blank merges into the
          // existing final token; with a blank it starts a new one.
          PrefixMass& same = next[prefix];
          same.nonblank_lp = log_sum_exp(same.nonblank_lp, mass.nonblank_lp + lp);
          std::vector<int> grown = prefix;
          grown.push_back(v);
          PrefixMass& nm = next[grown];
          nm.nonblank_lp = log_sum_exp(nm.nonblank_lp, mass.blank_lp + lp);
        } else {
          std::vector<int> grown = prefix;
          grown.push_back(v);
          PrefixMass& nm = next[grown];
          nm.nonblank_lp = log_sum_exp(nm.nonblank_lp, total + lp);
        }
      }
    }
    if (static_cast<int>(next.size()) > beam) {
      std::vector<std::pair<double, const std::vector<int>*>> ranked;
      ranked.reserve(next.size());
      for (const auto& [prefix, mass] : next) ranked.emplace_back(mass.total(), &prefix);
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return *a.second < *b.second;
      });
      std::map<std::vector<int>, PrefixMass> kept;
      for (int i = 0; i < beam; ++i) kept.emplace(*ranked[i].second, next[*ranked[i].second]);
      next = std::move(kept);
    }
    beams = std::move(next);
  }

  // Exact rescoring of every surviving prefix.
  std::vector<NBestEntry> entries;
  entries.reserve(beams.size());
  for (const auto& [prefix, mass] : beams) {
    double score = ctc_forward_score(p, prefix);
    if (score == kNegInf) continue;
    entries.push_back(NBestEntry{prefix, score});
  }
  std::sort(entries.begin(), entries.end(), [](const NBestEntry& a, const NBestEntry& b) {
    if (a.ctc_logprob != b.ctc_logprob) return a.ctc_logprob > b.ctc_logprob;
    return a.ids < b.ids;
  });
  if (static_cast<int>(entries.size()) > n) entries.resize(n);
  return NBestList{std::move(entries)};
}

LabelPrior estimate_prior(const std::vector<CtcPosterior>& posteriors) {
  if (posteriors.empty()) throw std::runtime_error("ctc: no posteriors for prior estimate");
  int vocab_size = posteriors.front().vocab_size;
  std::vector<double> sums(vocab_size, 0.0);
  long long frames = 0;
  for (const auto& p : posteriors) {
    if (p.vocab_size != vocab_size) {
      throw std::runtime_error("ctc: posterior vocabulary sizes disagree");
    }
    for (const auto& row : p.log_probs) {
      for (int v = 0; v < vocab_size; ++v) sums[v] += std::exp(row[v]);
      ++frames;
    }
  }
  for (auto& s : sums) s /= static_cast<double>(frames);
  return LabelPrior{CatDist::from_probs(sums)};
}

void save_nbest(const std::string& path, const std::string& utt_id, const NBestList& list) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ctc: cannot write n-best file: " + path);
  for (size_t i = 0; i < list.entries.size(); ++i) {
    out << utt_id << ' ' << (i + 1) << ' ';
    write_score(out, list.entries[i].ctc_logprob);
    for (int id : list.entries[i].ids) out << ' ' << id;
    out << '\n';
  }
}

std::pair<std::string, NBestList> load_nbest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ctc: cannot open n-best file: " + path);
  std::string utt_id;
  NBestList list;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    int rank = 0;
    NBestEntry entry;
    ls >> id >> rank >> entry.ctc_logprob;
    if (!ls && ls.eof() && id.empty()) continue;
    if (utt_id.empty()) {
      utt_id = id;
    } else if (id != utt_id) {
      throw std::runtime_error("ctc: n-best file mixes utterances: " + path);
    }
    if (rank != static_cast<int>(list.entries.size()) + 1) {
      throw std::runtime_error("ctc: n-best ranks out of order in " + path);
    }
    int token;
    while (ls >> token) entry.ids.push_back(token);
    list.entries.push_back(std::move(entry));
  }
  if (utt_id.empty()) throw std::runtime_error("ctc: empty n-best file: " + path);
  return {utt_id, list};
}

}  // namespace difflm
