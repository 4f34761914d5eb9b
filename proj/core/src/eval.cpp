#include "difflm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "difflm/parallel.hpp"
#include "json.hpp"

namespace difflm {

namespace fs = std::filesystem;

int edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp) {
  size_t r = ref.size(), h = hyp.size();
  std::vector<int> prev(h + 1), cur(h + 1);
  for (size_t j = 0; j <= h; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= r; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= h; ++j) {
      int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[h];
}

double wer_percent(const std::vector<EvalPair>& pairs) {
  long long edits = 0, ref_tokens = 0;
  for (const auto& pair : pairs) {
    edits += edit_distance(pair.reference, pair.hypothesis);
    ref_tokens += static_cast<long long>(pair.reference.size());
  }
  if (ref_tokens == 0) throw std::runtime_error("eval: no reference tokens");
  return 100.0 * static_cast<double>(edits) / static_cast<double>(ref_tokens);
}

namespace {

// Masked-kind bound for one sequence: mean over samples of the summed
// per-position forced-mask negative log-probabilities.
double mdlm_nll_sample(const std::vector<int>& seq, const Denoiser& d, Rng& rng) {
  int s_len = static_cast<int>(seq.size());
  int mask = d.mask_id();
  double nll = 0.0;
  NoisySeq z;
  for (int j = 0; j < s_len; ++j) {
    double rate = rng.uniform();
    z.ids = seq;
    z.t = rate;
    z.masked_positions.clear();
    for (int jj = 0; jj < s_len; ++jj) {
      if (jj == j || rng.bernoulli(rate)) {
        z.ids[jj] = mask;
        z.masked_positions.push_back(jj);
      }
    }
    DenoiserOutput out = d.denoise(z, CorruptionKind::mdlm);
    nll -= out.per_position[j].log_probs[seq[j]];
  }
  return nll;
}

// Uniform-kind discrete bound for one sequence and one sample path.
double usdm_nll_sample(const std::vector<int>& seq, const Denoiser& d,
                       const NoiseSchedule& sched, int grid, Rng& rng) {
  int s_len = static_cast<int>(seq.size());
  int n = d.vocab_size();
  double inv_n = 1.0 / n;
  double nll = 0.0;

  // Reconstruction at the lowest level.
  double t1 = 1.0 / grid;
  NoisySeq z1 = usdm_corrupt(seq, t1, sched, n, rng);
  DenoiserOutput recon = d.denoise(z1, CorruptionKind::usdm);
  for (int j = 0; j < s_len; ++j) nll -= recon.per_position[j].log_probs[seq[j]];

  // KL terms over consecutive grid levels. The terminal prior KL is zero
  // because the level-1 marginal is exactly uniform.
  for (int i = 2; i <= grid; ++i) {
    double t = static_cast<double>(i) / grid;
    double s = static_cast<double>(i - 1) / grid;
    double alpha_s = sched.alpha(s);
    double alpha_t = sched.alpha(t);
    double alpha_ts = alpha_t / alpha_s;
    NoisySeq z = usdm_corrupt(seq, t, sched, n, rng);
    DenoiserOutput out = d.denoise(z, CorruptionKind::usdm);
    // Factor shorthand: the reverse posterior for clean token c is
    //   q(v | z_j, c) = lik(v) * prior_c(v) / Z_c,
    //   lik(v) = a + b[v = z_j],  prior_c(v) = cc + e[v = c],
    // so the model-averaged transition only needs the total model mass
    // on z_j and per-token masses, all O(|V|).
    double a = (1.0 - alpha_ts) * inv_n;
    double b = alpha_ts;
    double cc = (1.0 - alpha_s) * inv_n;
    double e = alpha_s;
    double z0 = a * cc * n + a * e + b * cc;
    double zz = z0 + b * e;
    for (int j = 0; j < s_len; ++j) {
      int zj = z.ids[j];
      const std::vector<double>& model_lp = out.per_position[j].log_probs;
      double p_zj = std::exp(model_lp[zj]);
      double mix = (1.0 - p_zj) / z0 + p_zj / zz;
      // True reverse posterior for the actual clean token.
      double zq = zj == seq[j] ? zz : z0;
      double kl = 0.0;
      for (int v = 0; v < n; ++v) {
        double lik = a + (v == zj ? b : 0.0);
        double q = lik * (cc + (v == seq[j] ? e : 0.0)) / zq;
        double pv = std::exp(model_lp[v]);
        double zv = v == zj ? zz : z0;
        double m = lik * (cc * mix + e * pv / zv);
        kl += q * (std::log(q) - std::log(m));
      }
      nll += kl;
    }
  }
  return nll;
}

}  // namespace

PplResult ppl_upper_bound(const std::vector<std::vector<int>>& corpus, const Denoiser& d,
                          const NoiseSchedule& sched, CorruptionKind kind, int samples,
                          uint64_t seed, int workers, int usdm_grid) {
  if (corpus.empty()) throw std::runtime_error("eval: empty corpus");
  if (samples < 1) throw std::runtime_error("eval: sample count must be >= 1");
  if (usdm_grid < 2) throw std::runtime_error("eval: grid needs at least two levels");

  long long tokens = 0;
  for (const auto& seq : corpus) tokens += static_cast<long long>(seq.size());
  if (tokens == 0) throw std::runtime_error("eval: corpus has no tokens");

  int n_seqs = static_cast<int>(corpus.size());
  std::vector<double> seq_mean(n_seqs, 0.0);
  std::vector<double> seq_var(n_seqs, 0.0);
  parallel_for(n_seqs, workers, [&](int s_idx) {
    const auto& seq = corpus[s_idx];
    if (seq.empty()) return;
    std::vector<double> draws(samples);
    for (int k = 0; k < samples; ++k) {
      Rng rng(derive_seed(seed, static_cast<uint64_t>(s_idx), static_cast<uint64_t>(k)));
      draws[k] = kind == CorruptionKind::mdlm
                     ? mdlm_nll_sample(seq, d, rng)
                     : usdm_nll_sample(seq, d, sched, usdm_grid, rng);
    }
    seq_mean[s_idx] = mean(draws);
    if (samples > 1) seq_var[s_idx] = variance(draws);
  });

  double total_nll = 0.0, total_var = 0.0;
  for (int i = 0; i < n_seqs; ++i) {
    total_nll += seq_mean[i];
    total_var += seq_var[i] / samples;
  }
  PplResult r;
  r.tokens = tokens;
  r.nll_per_token = total_nll / static_cast<double>(tokens);
  r.nll_std_error = std::sqrt(total_var) / static_cast<double>(tokens);
  r.ppl = std::exp(r.nll_per_token);
  return r;
}

namespace {

std::string format_utt_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "utt%04d", index);
  return buf;
}

std::string hex64(uint64_t x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

// A concentrated chain: every token has three plausible successors with
// probabilities 0.5 / 0.3 / 0.2 and a vanishing floor elsewhere, so
// context pins tokens down hard.
BigramModel make_concentrated_chain(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> initial(n, 1.0 / n);
  std::vector<std::vector<double>> transition(n);
  const double floor = 1e-6;
  const double branch[3] = {0.5, 0.3, 0.2};
  for (int u = 0; u < n; ++u) {
    std::vector<double> row(n, floor);
    double branch_total = 1.0 - floor * (n - 3);
    int succ[3];
    for (int b = 0; b < 3; ++b) {
      bool fresh = false;
      while (!fresh) {
        succ[b] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)));
        fresh = true;
        for (int prev = 0; prev < b; ++prev) fresh = fresh && succ[b] != succ[prev];
      }
    }
    for (int b = 0; b < 3; ++b) row[succ[b]] += branch[b] * branch_total - floor;
    transition[u] = row;
  }
  return BigramModel::from_probs(initial, transition);
}

void write_manifest(const std::string& dir, const BenchmarkSpec& spec,
                    const Vocabulary& vocab) {
  nlohmann::json m;
  m["version"] = 1;
  m["seed"] = spec.seed;
  m["n_utts"] = spec.n_utts;
  m["min_len"] = spec.min_len;
  m["max_len"] = spec.max_len;
  m["vocab_size"] = spec.vocab_size;
  m["frames_per_token"] = spec.frames_per_token;
  m["noise"] = spec.noise;
  m["blank_mass"] = spec.blank_mass;
  m["smoothing"] = spec.smoothing;
  m["corpus"] = spec.corpus_path.empty() ? std::string("synthetic") : spec.corpus_path;
  m["vocab_hash"] = hex64(vocab.content_hash());
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw std::runtime_error("eval: cannot write manifest in " + dir);
  out << m.dump(2) << '\n';
}

}  // namespace

Benchmark generate_benchmark(const std::string& dir, const BenchmarkSpec& spec) {
  if (spec.n_utts < 1) throw std::runtime_error("eval: benchmark needs utterances");
  if (spec.min_len < 1 || spec.max_len < spec.min_len) {
    throw std::runtime_error("eval: bad reference length range");
  }
  if (spec.vocab_size < 4) throw std::runtime_error("eval: benchmark vocabulary too small");
  fs::create_directories(dir);
  fs::create_directories(dir + "/posteriors");

  // Vocabulary and chain model: either fitted from a text corpus or
  // synthesized from the seed alone.
  std::vector<std::string> corpus_lines;
  if (spec.corpus_path.empty()) {
    std::string line;
    for (int i = 0; i + 1 < spec.vocab_size; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "w%03d", i);
      if (i > 0) line += ' ';
      line += buf;
    }
    corpus_lines.push_back(line);
  } else {
    corpus_lines = read_lines(spec.corpus_path);
  }
  Vocabulary vocab = Vocabulary::build(corpus_lines, 1);

  BigramModel model = [&] {
    if (spec.corpus_path.empty()) {
      return make_concentrated_chain(vocab.size(),
                                     derive_seed(spec.seed, hash_string("model")));
    }
    std::vector<std::vector<int>> encoded;
    encoded.reserve(corpus_lines.size());
    for (const auto& line : corpus_lines) encoded.push_back(vocab.encode(line));
    return BigramModel::fit(encoded, vocab.size(), spec.smoothing);
  }();

  Benchmark bench{vocab, model, {}, {}, {}, spec};
  bench.spec.vocab_size = vocab.size();
  std::ofstream refs_out(dir + "/refs.txt");
  if (!refs_out) throw std::runtime_error("eval: cannot write refs in " + dir);
  for (int i = 0; i < spec.n_utts; ++i) {
    std::string utt_id = format_utt_id(i);
    Rng ref_rng(derive_seed(spec.seed, hash_string("refs"), static_cast<uint64_t>(i)));
    int len = spec.min_len +
              static_cast<int>(ref_rng.uniform_int(
                  static_cast<uint64_t>(spec.max_len - spec.min_len + 1)));
    std::vector<int> ref = model.sample_sequence(len, ref_rng);
    Rng chan_rng(derive_seed(spec.seed, hash_string("channel"), static_cast<uint64_t>(i)));
    CtcPosterior post = simulate_channel(ref, vocab.size(), spec.frames_per_token,
                                         spec.noise, spec.blank_mass, chan_rng);
    refs_out << utt_id << ' ' << vocab.decode(ref) << '\n';
    post.save(dir + "/posteriors/" + utt_id + ".post");
    bench.utt_ids.push_back(std::move(utt_id));
    bench.refs.push_back(std::move(ref));
    bench.posteriors.push_back(std::move(post));
  }
  refs_out.close();

  vocab.save(dir + "/vocab.txt");
  model.save(dir + "/model.txt");
  write_manifest(dir, bench.spec, vocab);
  return bench;
}

Benchmark load_benchmark(const std::string& dir) {
  std::ifstream min(dir + "/manifest.json");
  if (!min) throw std::runtime_error("eval: cannot open manifest in " + dir);
  nlohmann::json m = nlohmann::json::parse(min);

  BenchmarkSpec spec;
  spec.seed = m.at("seed").get<uint64_t>();
  spec.n_utts = m.at("n_utts").get<int>();
  spec.min_len = m.at("min_len").get<int>();
  spec.max_len = m.at("max_len").get<int>();
  spec.vocab_size = m.at("vocab_size").get<int>();
  spec.frames_per_token = m.at("frames_per_token").get<int>();
  spec.noise = m.at("noise").get<double>();
  spec.blank_mass = m.at("blank_mass").get<double>();
  spec.smoothing = m.at("smoothing").get<double>();
  std::string corpus = m.at("corpus").get<std::string>();
  if (corpus != "synthetic") spec.corpus_path = corpus;

  Vocabulary vocab = Vocabulary::load(dir + "/vocab.txt");
  if (hex64(vocab.content_hash()) != m.at("vocab_hash").get<std::string>()) {
    throw std::runtime_error("eval: vocabulary hash disagrees with manifest in " + dir);
  }
  BigramModel model = BigramModel::load(dir + "/model.txt");

  Benchmark bench{std::move(vocab), std::move(model), {}, {}, {}, spec};
  for (const auto& line : read_lines(dir + "/refs.txt")) {
    if (line.empty()) continue;
    auto space = line.find(' ');
    if (space == std::string::npos) {
      throw std::runtime_error("eval: bad refs line: " + line);
    }
    bench.utt_ids.push_back(line.substr(0, space));
    bench.refs.push_back(bench.vocab.encode(line.substr(space + 1)));
  }
  if (static_cast<int>(bench.utt_ids.size()) != spec.n_utts) {
    throw std::runtime_error("eval: refs count disagrees with manifest in " + dir);
  }
  bench.posteriors.reserve(bench.utt_ids.size());
  for (const auto& utt_id : bench.utt_ids) {
    bench.posteriors.push_back(CtcPosterior::load(dir + "/posteriors/" + utt_id + ".post"));
  }
  return bench;
}

std::vector<NBestList> compute_nbest_lists(const Benchmark& bench, int beam, int n,
                                           int workers) {
  std::vector<NBestList> lists(bench.posteriors.size());
  parallel_for(static_cast<int>(bench.posteriors.size()), workers, [&](int i) {
    lists[i] = prefix_beam_nbest(bench.posteriors[i], beam, n);
  });
  return lists;
}

double nbest_baseline_wer(const Benchmark& bench, const std::vector<NBestList>& lists) {
  std::vector<EvalPair> pairs(bench.refs.size());
  for (size_t i = 0; i < bench.refs.size(); ++i) {
    pairs[i].utt_id = bench.utt_ids[i];
    pairs[i].reference = bench.refs[i];
    if (!lists[i].entries.empty()) pairs[i].hypothesis = lists[i].entries.front().ids;
  }
  return wer_percent(pairs);
}

SweepMode parse_sweep_mode(const std::string& name) {
  if (name == "rescore") return SweepMode::rescore;
  if (name == "joint") return SweepMode::joint;
  throw std::runtime_error("eval: unknown sweep mode: " + name);
}

namespace {

std::string format_double(const char* fmt, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, x);
  return buf;
}

double sweep_wer_rescore(const Benchmark& bench, const std::vector<NBestList>& lists,
                         const LabelPrior& prior, EstimatorKind kind, int k_samples,
                         const RescoreWeights& w, double t_fixed, uint64_t seed,
                         const Denoiser& d, int workers) {
  NoiseSchedule sched;
  EstimatorConfig cfg;
  cfg.kind = kind;
  cfg.samples = k_samples;
  cfg.t_fixed = t_fixed;
  cfg.seed = seed;
  std::vector<EvalPair> pairs(bench.refs.size());
  parallel_for(static_cast<int>(bench.refs.size()), workers, [&](int i) {
    pairs[i].utt_id = bench.utt_ids[i];
    pairs[i].reference = bench.refs[i];
    if (lists[i].entries.empty()) return;
    RescoredList rescored = rescore_nbest(lists[i], cfg, w, d, prior, sched,
                                          utterance_seed(seed, bench.utt_ids[i]));
    pairs[i].hypothesis = rescored.entries.front().ids;
  });
  return wer_percent(pairs);
}

double sweep_wer_joint(const Benchmark& bench, double t_start, int steps,
                       const RescoreWeights& w, FinalRule rule, uint64_t seed,
                       const Denoiser& d, int workers) {
  NoiseSchedule sched;
  std::vector<EvalPair> pairs(bench.refs.size());
  parallel_for(static_cast<int>(bench.refs.size()), workers, [&](int i) {
    pairs[i].utt_id = bench.utt_ids[i];
    pairs[i].reference = bench.refs[i];
    JointConfig cfg;
    cfg.t_start = t_start;
    cfg.steps = steps;
    cfg.weights = w;
    cfg.final_rule = rule;
    cfg.seed = utterance_seed(seed, bench.utt_ids[i]);
    pairs[i].hypothesis = joint_decode(bench.posteriors[i], cfg, d, sched);
  });
  return wer_percent(pairs);
}

ResultRow summarize_row(std::string config, const std::vector<double>& wers,
                        double elapsed_s, bool measure_time) {
  ResultRow row;
  row.config = std::move(config);
  row.wer = mean(wers);
  row.stddev = wers.size() > 1 ? std::sqrt(variance(wers)) : 0.0;
  row.wall_time_s = measure_time ? elapsed_s : 0.0;
  return row;
}

}  // namespace

std::vector<ResultRow> run_sweep(const SweepSpec& spec) {
  if (spec.seeds.empty()) throw std::runtime_error("eval: sweep needs seeds");
  if (spec.lambda_values.empty()) throw std::runtime_error("eval: sweep needs a lambda grid");
  if (spec.mode == SweepMode::rescore && (spec.kinds.empty() || spec.k_values.empty())) {
    throw std::runtime_error("eval: rescore sweep needs kinds and K values");
  }
  if (spec.mode == SweepMode::joint &&
      (spec.t_start_values.empty() || spec.step_values.empty())) {
    throw std::runtime_error("eval: joint sweep needs t_start and step grids");
  }

  Benchmark bench = load_benchmark(spec.bench_dir);
  NoiseSchedule sched;
  ExactPosteriorDenoiser denoiser(bench.model, sched, bench.vocab.mask_id());

  std::vector<ResultRow> rows;
  using clock = std::chrono::steady_clock;
  if (spec.mode == SweepMode::rescore) {
    std::vector<NBestList> lists = compute_nbest_lists(bench, spec.beam, spec.nbest,
                                                       spec.workers);
    LabelPrior prior = estimate_prior(bench.posteriors);
    for (EstimatorKind kind : spec.kinds) {
      for (int k_samples : spec.k_values) {
        for (double lambda : spec.lambda_values) {
          RescoreWeights w{spec.lambda_ctc, lambda, spec.lambda_prior};
          auto start = clock::now();
          std::vector<double> wers;
          wers.reserve(spec.seeds.size());
          for (uint64_t seed : spec.seeds) {
            wers.push_back(sweep_wer_rescore(bench, lists, prior, kind, k_samples, w,
                                             spec.t_fixed, seed, denoiser, spec.workers));
          }
          double elapsed = std::chrono::duration<double>(clock::now() - start).count();
          std::string config = "rescore:kind=" + estimator_kind_name(kind) +
                               ",K=" + std::to_string(k_samples) +
                               ",lambda=" + format_double("%.3f", lambda);
          rows.push_back(summarize_row(config, wers, elapsed, spec.measure_time));
        }
      }
    }
    return rows;
  }

  for (double t_start : spec.t_start_values) {
    for (int steps : spec.step_values) {
      for (double lambda : spec.lambda_values) {
        RescoreWeights w{spec.lambda_ctc, lambda, spec.lambda_prior};
        auto start = clock::now();
        std::vector<double> wers;
        wers.reserve(spec.seeds.size());
        for (uint64_t seed : spec.seeds) {
          wers.push_back(sweep_wer_joint(bench, t_start, steps, w, spec.final_rule, seed,
                                         denoiser, spec.workers));
        }
        double elapsed = std::chrono::duration<double>(clock::now() - start).count();
        std::string config = "joint:t_start=" + format_double("%.2f", t_start) +
                             ",L=" + std::to_string(steps) +
                             ",lambda=" + format_double("%.3f", lambda);
        rows.push_back(summarize_row(config, wers, elapsed, spec.measure_time));
      }
    }
  }
  return rows;
}

void emit_report(const std::vector<ResultRow>& rows, const std::string& path) {
  if (rows.empty()) throw std::runtime_error("eval: no result rows");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("eval: cannot write report: " + path);
  out << "config,wer,stddev,wall_time_s\n";
  for (const auto& row : rows) {
    out << row.config << ',' << format_double("%.4f", row.wer) << ','
        << format_double("%.4f", row.stddev) << ','
        << format_double("%.3f", row.wall_time_s) << '\n';
  }
}

}  // namespace difflm
