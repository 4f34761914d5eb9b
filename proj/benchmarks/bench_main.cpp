#include <benchmark/benchmark.h>

#include <vector>

#include "difflm/ctc.hpp"
#include "difflm/denoiser.hpp"
#include "difflm/joint.hpp"
#include "difflm/logmath.hpp"
#include "difflm/rescorer.hpp"
#include "difflm/rng.hpp"
#include "difflm/schedule.hpp"

namespace {

using namespace difflm;

CtcPosterior make_posterior(int frames, int vocab_size, uint64_t seed) {
  Rng rng(seed);
  CtcPosterior p;
  p.vocab_size = vocab_size;
  for (int t = 0; t < frames; ++t) {
    std::vector<double> probs(vocab_size + 1);
    for (auto& x : probs) x = 0.05 + rng.uniform();
    p.log_probs.push_back(CatDist::from_probs(probs).log_probs);
  }
  return p;
}

BigramModel make_chain(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> init(n);
  std::vector<std::vector<double>> trans(n, std::vector<double>(n));
  double itot = 0.0;
  for (auto& x : init) {
    x = 0.1 + rng.uniform();
    itot += x;
  }
  for (auto& x : init) x /= itot;
  for (auto& row : trans) {
    double tot = 0.0;
    for (auto& x : row) {
      x = 0.1 + rng.uniform();
      tot += x;
    }
    for (auto& x : row) x /= tot;
  }
  return BigramModel::from_probs(init, trans);
}

void BM_CtcForwardScore(benchmark::State& state) {
  CtcPosterior p = make_posterior(50, 26, 1);
  Rng rng(2);
  std::vector<int> labels(10);
  for (auto& v : labels) v = static_cast<int>(rng.uniform_int(26));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ctc_forward_score(p, labels));
  }
}
BENCHMARK(BM_CtcForwardScore)->Unit(benchmark::kMicrosecond);

void BM_PrefixBeamNbest(benchmark::State& state) {
  CtcPosterior p = make_posterior(24, 26, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(prefix_beam_nbest(p, 16, 16));
  }
}
BENCHMARK(BM_PrefixBeamNbest)->Unit(benchmark::kMillisecond);

void BM_ExactDenoiseMasked(benchmark::State& state) {
  NoiseSchedule sched;
  BigramModel model = make_chain(26, 4);
  ExactPosteriorDenoiser d(model, sched, 27);
  Rng rng(5);
  std::vector<int> hyp(10);
  for (auto& v : hyp) v = static_cast<int>(rng.uniform_int(26));
  NoisySeq z = mdlm_corrupt(hyp, 0.5, sched, 27, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(d.denoise(z, CorruptionKind::mdlm));
  }
}
BENCHMARK(BM_ExactDenoiseMasked)->Unit(benchmark::kMicrosecond);

void BM_ExactDenoiseUniform(benchmark::State& state) {
  NoiseSchedule sched;
  BigramModel model = make_chain(26, 6);
  ExactPosteriorDenoiser d(model, sched, 27);
  Rng rng(7);
  std::vector<int> hyp(10);
  for (auto& v : hyp) v = static_cast<int>(rng.uniform_int(26));
  NoisySeq z = usdm_corrupt(hyp, 0.5, sched, 26, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(d.denoise(z, CorruptionKind::usdm));
  }
}
BENCHMARK(BM_ExactDenoiseUniform)->Unit(benchmark::kMicrosecond);

void BM_ScoreSampleMask(benchmark::State& state) {
  NoiseSchedule sched;
  BigramModel model = make_chain(26, 8);
  ExactPosteriorDenoiser d(model, sched, 27);
  Rng rng(9);
  std::vector<int> hyp(10);
  for (auto& v : hyp) v = static_cast<int>(rng.uniform_int(26));
  EstimatorConfig cfg;
  cfg.kind = EstimatorKind::sample_mask;
  cfg.samples = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(score_hypothesis(hyp, cfg, d, sched, 11));
  }
}
BENCHMARK(BM_ScoreSampleMask)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_JointDecode(benchmark::State& state) {
  NoiseSchedule sched;
  BigramModel model = make_chain(12, 10);
  ExactPosteriorDenoiser d(model, sched, 13);
  CtcPosterior p = make_posterior(20, 12, 11);
  JointConfig cfg;
  cfg.t_start = 0.5;
  cfg.steps = static_cast<int>(state.range(0));
  cfg.weights = RescoreWeights{1.0, 1.0, 0.0};
  cfg.seed = 13;
  for (auto _ : state) {
    benchmark::DoNotOptimize(joint_decode(p, cfg, d, sched));
  }
}
BENCHMARK(BM_JointDecode)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
