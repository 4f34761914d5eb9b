#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "difflm/eval.hpp"
#include "difflm/parallel.hpp"
#include "difflm/runconfig.hpp"

namespace fs = std::filesystem;
using namespace difflm;

namespace {

constexpr const char* kUsage =
    "usage: difflm <command> [--config <file>] [--key <value>]...\n"
    "commands: gen-data nbest rescore joint eval sweep ppl\n";

BenchmarkSpec benchmark_spec_from(const RunConfig& cfg) {
  BenchmarkSpec spec;
  spec.n_utts = cfg.get_int("n-utts", spec.n_utts);
  spec.min_len = cfg.get_int("min-len", spec.min_len);
  spec.max_len = cfg.get_int("max-len", spec.max_len);
  spec.vocab_size = cfg.get_int("vocab-size", spec.vocab_size);
  spec.frames_per_token = cfg.get_int("frames-per-token", spec.frames_per_token);
  spec.noise = cfg.get_double("noise", spec.noise);
  spec.blank_mass = cfg.get_double("blank-mass", spec.blank_mass);
  spec.smoothing = cfg.get_double("smoothing", spec.smoothing);
  spec.seed = cfg.get_seed("seed", 1);
  spec.corpus_path = cfg.get_string("corpus", "");
  return spec;
}

RescoreWeights weights_from(const RunConfig& cfg) {
  RescoreWeights w;
  w.lambda_ctc = cfg.get_double("lambda-ctc", w.lambda_ctc);
  w.lambda_difflm = cfg.get_double("lambda-difflm", w.lambda_difflm);
  w.lambda_prior = cfg.get_double("lambda-prior", w.lambda_prior);
  return w;
}

int run_gen_data(const RunConfig& cfg) {
  std::string out = cfg.require_path("out");
  BenchmarkSpec spec = benchmark_spec_from(cfg);
  Benchmark bench = generate_benchmark(out, spec);
  cfg.save_echo(out + "/config.json");
  std::printf("gen-data: wrote %zu utterances to %s\n", bench.utt_ids.size(), out.c_str());
  return 0;
}

int run_nbest(const RunConfig& cfg) {
  std::string dir = cfg.require_path("bench");
  int beam = cfg.get_int("beam", 16);
  int n = cfg.get_int("n", 16);
  int workers = cfg.get_int("workers", 1);
  Benchmark bench = load_benchmark(dir);
  std::vector<NBestList> lists = compute_nbest_lists(bench, beam, n, workers);
  fs::create_directories(dir + "/nbest");
  for (size_t i = 0; i < lists.size(); ++i) {
    save_nbest(dir + "/nbest/" + bench.utt_ids[i] + ".nbest", bench.utt_ids[i], lists[i]);
  }
  cfg.save_echo(dir + "/nbest/config.json");
  std::printf("nbest: wrote %zu lists to %s/nbest\n", lists.size(), dir.c_str());
  return 0;
}

int run_rescore(const RunConfig& cfg) {
  std::string dir = cfg.require_path("bench");
  std::string out = cfg.require_path("out");
  int workers = cfg.get_int("workers", 1);
  EstimatorConfig est;
  est.kind = parse_estimator_kind(cfg.get_string("kind", "sample_mask"));
  est.samples = cfg.get_int("K", 16);
  est.t_fixed = cfg.get_double("t-fixed", 0.5);
  est.seed = cfg.get_seed("seed", 1);
  est.share_masks = cfg.get_bool("share-masks", false);
  RescoreWeights w = weights_from(cfg);

  Benchmark bench = load_benchmark(dir);
  NoiseSchedule sched;
  ExactPosteriorDenoiser denoiser(bench.model, sched, bench.vocab.mask_id());
  LabelPrior prior = estimate_prior(bench.posteriors);

  int n_utts = static_cast<int>(bench.utt_ids.size());
  std::vector<RescoredList> rescored(n_utts);
  parallel_for(n_utts, workers, [&](int i) {
    auto [utt_id, list] = load_nbest(dir + "/nbest/" + bench.utt_ids[i] + ".nbest");
    rescored[i] = rescore_nbest(list, est, w, denoiser, prior, sched,
                                utterance_seed(est.seed, utt_id));
  });
  fs::create_directories(out);
  for (int i = 0; i < n_utts; ++i) {
    save_rescored(out + "/" + bench.utt_ids[i] + ".nbest", bench.utt_ids[i], rescored[i]);
  }
  cfg.save_echo(out + "/config.json");
  std::printf("rescore: wrote %d lists to %s\n", n_utts, out.c_str());
  return 0;
}

int run_joint(const RunConfig& cfg) {
  std::string dir = cfg.require_path("bench");
  std::string out = cfg.require_path("out");
  std::string trace_path = cfg.get_string("trace", "");
  int workers = cfg.get_int("workers", 1);
  JointConfig joint;
  joint.t_start = cfg.get_double("t-start", 0.3);
  joint.steps = cfg.get_int("L", 16);
  joint.weights = weights_from(cfg);
  joint.final_rule = parse_final_rule(cfg.get_string("final-rule", "argmax"));
  uint64_t seed = cfg.get_seed("seed", 1);

  Benchmark bench = load_benchmark(dir);
  NoiseSchedule sched;
  ExactPosteriorDenoiser denoiser(bench.model, sched, bench.vocab.mask_id());

  int n_utts = static_cast<int>(bench.utt_ids.size());
  std::vector<std::vector<int>> decodes(n_utts);
  std::vector<std::vector<DecodeTraceStep>> traces(n_utts);
  bool tracing = !trace_path.empty();
  parallel_for(n_utts, workers, [&](int i) {
    JointConfig utt_cfg = joint;
    utt_cfg.seed = utterance_seed(seed, bench.utt_ids[i]);
    decodes[i] = joint_decode(bench.posteriors[i], utt_cfg, denoiser, sched,
                              tracing ? &traces[i] : nullptr);
  });
  save_decodes(out, bench.utt_ids, decodes);
  if (tracing) {
    std::ofstream tf(trace_path);
    if (!tf) throw std::runtime_error("cli: cannot write trace file: " + trace_path);
    char buf[32];
    for (int i = 0; i < n_utts; ++i) {
      for (const auto& step : traces[i]) {
        std::snprintf(buf, sizeof(buf), "%.6f", step.t);
        tf << bench.utt_ids[i] << ' ' << step.step << ' ' << buf;
        for (int id : step.z) tf << ' ' << id;
        tf << '\n';
      }
    }
  }
  cfg.save_echo(out + ".config.json");
  std::printf("joint: wrote %d decodes to %s\n", n_utts, out.c_str());
  return 0;
}

int run_eval(const RunConfig& cfg) {
  std::string dir = cfg.require_path("bench");
  std::string hyp_path = cfg.get_string("hyp", "");
  std::string rescored_dir = cfg.get_string("rescored", "");
  if (!hyp_path.empty() && !rescored_dir.empty()) {
    throw std::runtime_error("cli: pass either hyp or rescored, not both");
  }
  Benchmark bench = load_benchmark(dir);

  std::vector<EvalPair> pairs(bench.utt_ids.size());
  std::string source;
  if (!hyp_path.empty()) {
    source = "hyp=" + fs::path(hyp_path).filename().string();
    std::map<std::string, std::vector<int>> decoded;
    for (auto& [utt_id, ids] : load_decodes(hyp_path)) decoded[utt_id] = std::move(ids);
    for (size_t i = 0; i < bench.utt_ids.size(); ++i) {
      auto it = decoded.find(bench.utt_ids[i]);
      if (it == decoded.end()) {
        throw std::runtime_error("cli: no hypothesis for utterance " + bench.utt_ids[i]);
      }
      pairs[i] = EvalPair{bench.refs[i], it->second, bench.utt_ids[i]};
    }
  } else if (!rescored_dir.empty()) {
    source = "rescored=" + fs::path(rescored_dir).filename().string();
    for (size_t i = 0; i < bench.utt_ids.size(); ++i) {
      auto [utt_id, list] =
          load_rescored(rescored_dir + "/" + bench.utt_ids[i] + ".nbest");
      std::vector<int> hyp;
      if (!list.entries.empty()) hyp = list.entries.front().ids;
      pairs[i] = EvalPair{bench.refs[i], std::move(hyp), bench.utt_ids[i]};
    }
  } else {
    source = "baseline";
    for (size_t i = 0; i < bench.utt_ids.size(); ++i) {
      auto [utt_id, list] = load_nbest(dir + "/nbest/" + bench.utt_ids[i] + ".nbest");
      std::vector<int> hyp;
      if (!list.entries.empty()) hyp = list.entries.front().ids;
      pairs[i] = EvalPair{bench.refs[i], std::move(hyp), bench.utt_ids[i]};
    }
  }

  double wer = wer_percent(pairs);
  std::printf("wer %.4f\n", wer);
  std::string out = cfg.get_string("out", "");
  if (!out.empty()) {
    emit_report({ResultRow{"eval:" + source, wer, 0.0, 0.0}}, out);
    cfg.save_echo(out + ".config.json");
  }
  return 0;
}

int run_sweep_cmd(const RunConfig& cfg) {
  SweepSpec spec;
  spec.bench_dir = cfg.require_path("bench");
  std::string out = cfg.require_path("out");
  spec.mode = parse_sweep_mode(cfg.get_string("mode", "rescore"));
  std::vector<std::string> kind_names = cfg.get_string_list("kinds", {"sample_mask"});
  spec.kinds.clear();
  for (const auto& name : kind_names) spec.kinds.push_back(parse_estimator_kind(name));
  spec.k_values = cfg.get_int_list("K-grid", spec.k_values);
  spec.lambda_values = cfg.get_double_list("lambda-grid", spec.lambda_values);
  spec.t_start_values = cfg.get_double_list("t-start-grid", spec.t_start_values);
  spec.step_values = cfg.get_int_list("L-grid", spec.step_values);
  spec.seeds = cfg.get_seed_list("seeds", spec.seeds);
  spec.lambda_ctc = cfg.get_double("lambda-ctc", spec.lambda_ctc);
  spec.lambda_prior = cfg.get_double("lambda-prior", spec.lambda_prior);
  spec.t_fixed = cfg.get_double("t-fixed", spec.t_fixed);
  spec.beam = cfg.get_int("beam", spec.beam);
  spec.nbest = cfg.get_int("n", spec.nbest);
  spec.final_rule = parse_final_rule(cfg.get_string("final-rule", "argmax"));
  spec.workers = cfg.get_int("workers", spec.workers);
  spec.measure_time = cfg.get_bool("measure-time", spec.measure_time);

  std::vector<ResultRow> rows = run_sweep(spec);
  emit_report(rows, out);
  cfg.save_echo(out + ".config.json");
  std::printf("sweep: wrote %zu rows to %s\n", rows.size(), out.c_str());
  return 0;
}

int run_ppl(const RunConfig& cfg) {
  std::string dir = cfg.require_path("bench");
  CorruptionKind kind = parse_corruption_kind(cfg.get_string("process", "mdlm"));
  int samples = cfg.get_int("K", 16);
  int n_heldout = cfg.get_int("n-heldout", 64);
  int grid = cfg.get_int("grid", 32);
  int workers = cfg.get_int("workers", 1);
  uint64_t seed = cfg.get_seed("seed", 1);
  int min_len = cfg.get_int("min-len", 6);
  int max_len = cfg.get_int("max-len", 12);
  if (n_heldout < 1) throw std::runtime_error("cli: n-heldout must be >= 1");
  if (min_len < 1 || max_len < min_len) throw std::runtime_error("cli: bad length range");

  Benchmark bench = load_benchmark(dir);
  NoiseSchedule sched;
  ExactPosteriorDenoiser denoiser(bench.model, sched, bench.vocab.mask_id());

  // Held-out text drawn from the benchmark's own chain, on a seed branch
  // separate from the references.
  std::vector<std::vector<int>> corpus(n_heldout);
  for (int i = 0; i < n_heldout; ++i) {
    Rng rng(derive_seed(seed, hash_string("heldout"), static_cast<uint64_t>(i)));
    int len = min_len +
              static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_len - min_len + 1)));
    corpus[i] = bench.model.sample_sequence(len, rng);
  }

  PplResult r = ppl_upper_bound(corpus, denoiser, sched, kind, samples,
                                derive_seed(seed, hash_string("ppl")), workers, grid);
  double exact = bench.model.corpus_perplexity(corpus);
  std::printf("ppl %.6f nll_per_token %.6f std_error %.6f tokens %lld chain_ppl %.6f\n",
              r.ppl, r.nll_per_token, r.nll_std_error, r.tokens, exact);
  std::string out = cfg.get_string("out", "");
  if (!out.empty()) {
    std::ofstream csv(out);
    if (!csv) throw std::runtime_error("cli: cannot write report: " + out);
    char line[256];
    std::snprintf(line, sizeof(line), "config,ppl,nll_per_token,std_error,tokens\n"
                                      "ppl:process=%s;K=%d,%.6f,%.6f,%.6f,%lld\n",
                  corruption_kind_name(kind).c_str(), samples, r.ppl, r.nll_per_token,
                  r.nll_std_error, r.tokens);
    csv << line;
    cfg.save_echo(out + ".config.json");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    std::fputs(kUsage, args.empty() ? stderr : stdout);
    return args.empty() ? 1 : 0;
  }
  try {
    RunConfig cfg = RunConfig::from_args(args);
    const std::string& command = cfg.command();
    if (command == "gen-data") return run_gen_data(cfg);
    if (command == "nbest") return run_nbest(cfg);
    if (command == "rescore") return run_rescore(cfg);
    if (command == "joint") return run_joint(cfg);
    if (command == "eval") return run_eval(cfg);
    if (command == "sweep") return run_sweep_cmd(cfg);
    if (command == "ppl") return run_ppl(cfg);
    throw std::runtime_error("cli: unknown command: " + command);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "difflm: %s\n", err.what());
    return 1;
  }
}
