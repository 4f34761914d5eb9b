#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "difflm/ctc.hpp"
#include "difflm/denoiser.hpp"
#include "difflm/logmath.hpp"
#include "difflm/rescorer.hpp"
#include "difflm/rng.hpp"
#include "difflm/schedule.hpp"
#include "doctest.h"

using namespace difflm;

namespace {

// Wraps another denoiser and records every query it receives.
class RecordingDenoiser : public Denoiser {
 public:
  explicit RecordingDenoiser(const Denoiser& inner) : inner_(inner) {}

  DenoiserOutput denoise(const NoisySeq& z, CorruptionKind kind) const override {
    calls_.push_back(z);
    return inner_.denoise(z, kind);
  }
  int vocab_size() const override { return inner_.vocab_size(); }
  int mask_id() const override { return inner_.mask_id(); }

  const std::vector<NoisySeq>& calls() const { return calls_; }
  void clear() { calls_.clear(); }

 private:
  const Denoiser& inner_;
  mutable std::vector<NoisySeq> calls_;
};

// Seed whose first mask draw under the estimator's internal chain masks
// every position of a two-token hypothesis at t = 0.5.
uint64_t seed_masking_both(const std::vector<int>& hyp, int mask_id) {
  NoiseSchedule sched;
  for (uint64_t s = 0; s < 4096; ++s) {
    Rng rng(derive_seed(s, 0));
    NoisySeq z = mdlm_corrupt(hyp, 0.5, sched, mask_id, rng);
    if (z.masked_positions.size() == hyp.size()) return s;
  }
  throw std::runtime_error("no seed found");
}

}  // namespace

TEST_SUITE("rescorer") {
  TEST_CASE("estimator kind names round-trip") {
    for (const char* name : {"seq_norm", "sample_mask", "global_mask", "coupled", "usdm"}) {
      CHECK(estimator_kind_name(parse_estimator_kind(name)) == name);
    }
    CHECK_THROWS_WITH(parse_estimator_kind("mystery"),
                      "rescorer: unknown estimator kind: mystery");
  }

  TEST_CASE("defaults blend a 0.3 model weight over sixteen samples") {
    RescoreWeights w;
    CHECK(w.lambda_ctc == 1.0);
    CHECK(w.lambda_difflm == 0.3);
    CHECK(w.lambda_prior == 0.0);
    EstimatorConfig cfg;
    CHECK(cfg.kind == EstimatorKind::sample_mask);
    CHECK(cfg.samples == 16);
    CHECK(cfg.t_fixed == 0.5);
    CHECK_FALSE(cfg.share_masks);
  }

  TEST_CASE("single fully masked draw gives the hand-computed statistics") {
    FixedDenoiser d(CatDist::from_probs({0.5, 0.25, 0.125, 0.125}));
    NoiseSchedule sched;
    std::vector<int> hyp = {0, 1};
    uint64_t seed = seed_masking_both(hyp, d.mask_id());
    double lp_sum = std::log(0.5) + std::log(0.25);

    EstimatorConfig cfg;
    cfg.samples = 1;
    cfg.t_fixed = 0.5;
    cfg.kind = EstimatorKind::sample_mask;
    CHECK(mdlm_score(hyp, cfg, d, sched, seed).score ==
          doctest::Approx(lp_sum / 2.0).epsilon(1e-12));
    cfg.kind = EstimatorKind::global_mask;
    CHECK(mdlm_score(hyp, cfg, d, sched, seed).score ==
          doctest::Approx(lp_sum / 2.0).epsilon(1e-12));
    // Linear schedule at t = 0.5 weights the sum by -(1/2) * (-2) = 1.
    cfg.kind = EstimatorKind::seq_norm;
    CHECK(mdlm_score(hyp, cfg, d, sched, seed).score ==
          doctest::Approx(lp_sum).epsilon(1e-12));
  }

  TEST_CASE("coupled halves cover the sequence exactly once") {
    FixedDenoiser inner(CatDist::from_probs({0.5, 0.25, 0.125, 0.125}));
    RecordingDenoiser d(inner);
    NoiseSchedule sched;
    std::vector<int> hyp = {0, 1, 2, 0, 1};
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::coupled;
    cfg.samples = 8;
    // Complementary masked sets make the statistic the full-sequence mean
    // regardless of the split, so the estimator is exact here.
    double want = (2 * std::log(0.5) + 2 * std::log(0.25) + std::log(0.125)) / 5.0;
    ScoreResult r = mdlm_score(hyp, cfg, d, sched, 99);
    CHECK(r.score == doctest::Approx(want).epsilon(1e-12));
    CHECK(r.std_error == doctest::Approx(0.0).epsilon(1e-12));

    // Group the recorded queries per sample and verify the partition.
    size_t i = 0;
    for (int k = 0; k < cfg.samples; ++k) {
      REQUIRE(i < d.calls().size());
      std::vector<bool> seen(hyp.size(), false);
      size_t covered = 0;
      auto absorb = [&](const NoisySeq& z) {
        for (int j : z.masked_positions) {
          CHECK_FALSE(seen[j]);
          seen[j] = true;
          ++covered;
        }
      };
      absorb(d.calls()[i++]);
      if (covered < hyp.size()) absorb(d.calls()[i++]);
      CHECK(covered == hyp.size());
    }
    CHECK(i == d.calls().size());
  }

  TEST_CASE("singleton hypotheses are scored exactly by every masked kind") {
    FixedDenoiser d(CatDist::from_probs({0.5, 0.25, 0.125, 0.125}));
    NoiseSchedule sched;
    std::vector<int> hyp = {1};
    double lp = std::log(0.25);
    for (auto kind : {EstimatorKind::seq_norm, EstimatorKind::sample_mask,
                      EstimatorKind::global_mask, EstimatorKind::coupled}) {
      EstimatorConfig cfg;
      cfg.kind = kind;
      cfg.samples = 3;
      cfg.t_fixed = 0.5;
      double want = kind == EstimatorKind::seq_norm ? 2.0 * lp : lp;
      ScoreResult r = mdlm_score(hyp, cfg, d, sched, 5);
      CHECK(r.score == doctest::Approx(want).epsilon(1e-12));
      CHECK(r.std_error == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(exact_expected_score(hyp, kind, 0.5, d, sched) ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }

  TEST_CASE("context-free denoiser collapses every estimator to the token log-prob") {
    FixedDenoiser d(CatDist::from_probs({0.7, 0.1, 0.1, 0.1}));
    NoiseSchedule sched;
    std::vector<int> hyp = {0, 0, 0};
    double lp = std::log(0.7);
    for (auto kind : {EstimatorKind::sample_mask, EstimatorKind::global_mask,
                      EstimatorKind::coupled}) {
      EstimatorConfig cfg;
      cfg.kind = kind;
      cfg.samples = 16;
      ScoreResult r = score_hypothesis(hyp, cfg, d, sched, 321);
      CHECK(r.score == doctest::Approx(lp).epsilon(1e-12));
      CHECK(exact_expected_score(hyp, kind, 0.5, d, sched) ==
            doctest::Approx(lp).epsilon(1e-12));
    }
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::usdm;
    cfg.samples = 4;
    CHECK(usdm_score(hyp, cfg, d, sched, 321).score == doctest::Approx(lp).epsilon(1e-12));
    CHECK(exact_expected_score(hyp, EstimatorKind::usdm, 0.5, d, sched) ==
          doctest::Approx(lp).epsilon(1e-12));
  }

  TEST_CASE("uniform denoiser scores -log vocab for every kind") {
    FixedDenoiser d = FixedDenoiser::uniform(5);
    NoiseSchedule sched;
    std::vector<int> hyp = {4, 0, 2};
    for (auto kind : {EstimatorKind::sample_mask, EstimatorKind::global_mask,
                      EstimatorKind::coupled, EstimatorKind::usdm}) {
      EstimatorConfig cfg;
      cfg.kind = kind;
      cfg.samples = 8;
      CHECK(score_hypothesis(hyp, cfg, d, sched, 9).score ==
            doctest::Approx(-std::log(5.0)).epsilon(1e-12));
    }
  }

  TEST_CASE("monte carlo estimates agree with enumeration within three errors") {
    BigramModel m = BigramModel::from_probs(
        {0.5, 0.3, 0.2}, {{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.3, 0.3, 0.4}});
    NoiseSchedule sched;
    ExactPosteriorDenoiser d(m, sched, 4);
    std::vector<int> hyp = {0, 2, 1};
    for (auto kind : {EstimatorKind::seq_norm, EstimatorKind::sample_mask,
                      EstimatorKind::global_mask, EstimatorKind::coupled,
                      EstimatorKind::usdm}) {
      EstimatorConfig cfg;
      cfg.kind = kind;
      cfg.samples = 20000;
      cfg.t_fixed = 0.5;
      ScoreResult r = score_hypothesis(hyp, cfg, d, sched, 4242);
      double exact = exact_expected_score(hyp, kind, 0.5, d, sched);
      CHECK(std::abs(r.score - exact) < 3.0 * r.std_error + 1e-9);
    }
  }

  TEST_CASE("large-sample seq_norm concentrates on its expectation") {
    BigramModel m = BigramModel::from_probs({0.6, 0.4}, {{0.7, 0.3}, {0.4, 0.6}});
    NoiseSchedule sched;
    ExactPosteriorDenoiser d(m, sched, 3);
    std::vector<int> hyp = {0, 1};
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::seq_norm;
    cfg.samples = 100000;
    cfg.t_fixed = 0.5;
    ScoreResult r = mdlm_score(hyp, cfg, d, sched, 777);
    double exact = exact_expected_score(hyp, EstimatorKind::seq_norm, 0.5, d, sched);
    CHECK(std::abs(r.score - exact) < 3.0 * r.std_error);
    CHECK(r.std_error < 0.02);
  }

  TEST_CASE("lighter uniform corruption scores higher") {
    BigramModel m = BigramModel::from_probs(
        {0.5, 0.3, 0.2}, {{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.3, 0.3, 0.4}});
    NoiseSchedule sched;
    ExactPosteriorDenoiser d(m, sched, 4);
    std::vector<int> hyp = {0, 1, 1, 2};
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::usdm;
    cfg.samples = 64;
    cfg.t_fixed = 0.01;
    double light = usdm_score(hyp, cfg, d, sched, 55).score;
    cfg.t_fixed = 0.5;
    double heavy = usdm_score(hyp, cfg, d, sched, 55).score;
    CHECK(light > heavy);
    // Near-clean input is almost surely reconstructed.
    CHECK(light > std::log(0.9));
  }

  TEST_CASE("scoring is deterministic per seed") {
    BigramModel m = BigramModel::from_probs({0.6, 0.4}, {{0.7, 0.3}, {0.4, 0.6}});
    NoiseSchedule sched;
    ExactPosteriorDenoiser d(m, sched, 3);
    std::vector<int> hyp = {0, 1, 0};
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::sample_mask;
    cfg.samples = 32;
    ScoreResult a = mdlm_score(hyp, cfg, d, sched, 1234);
    ScoreResult b = mdlm_score(hyp, cfg, d, sched, 1234);
    ScoreResult c = mdlm_score(hyp, cfg, d, sched, 1235);
    CHECK(a.score == b.score);
    CHECK(a.std_error == b.std_error);
    CHECK(a.score != c.score);
  }

  TEST_CASE("configuration errors are rejected") {
    FixedDenoiser d = FixedDenoiser::uniform(3);
    NoiseSchedule sched;
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::sample_mask;
    CHECK_THROWS_WITH(mdlm_score({}, cfg, d, sched, 0), "rescorer: empty hypothesis");
    cfg.samples = 0;
    CHECK_THROWS_WITH(mdlm_score({0}, cfg, d, sched, 0), "rescorer: K must be >= 1");
    cfg.samples = 1;
    cfg.t_fixed = 1.0;
    CHECK_THROWS_WITH(mdlm_score({0}, cfg, d, sched, 0), "rescorer: t_fixed outside (0, 1)");
    cfg.t_fixed = 0.5;
    cfg.kind = EstimatorKind::usdm;
    CHECK_THROWS_WITH(mdlm_score({0}, cfg, d, sched, 0),
                      "rescorer: usdm kind scored by usdm_score");
    cfg.kind = EstimatorKind::sample_mask;
    CHECK_THROWS_WITH(usdm_score({0}, cfg, d, sched, 0),
                      "rescorer: masked kinds scored by mdlm_score");
  }

  TEST_CASE("enumeration oracle refuses oversized instances") {
    FixedDenoiser d = FixedDenoiser::uniform(3);
    NoiseSchedule sched;
    std::vector<int> long_hyp(13, 0);
    CHECK_THROWS_WITH(exact_expected_score(long_hyp, EstimatorKind::sample_mask, 0.5, d, sched),
                      "rescorer: enumeration too large");
    std::vector<int> usdm_hyp(7, 0);
    CHECK_THROWS_WITH(exact_expected_score(usdm_hyp, EstimatorKind::usdm, 0.5, d, sched),
                      "rescorer: enumeration too large");
  }

  TEST_CASE("combine_scores applies weights and propagates -inf") {
    RescoreWeights identity{1.0, 0.0, 0.0};
    CHECK(combine_scores(-3.25, 99.0, 42.0, identity) == -3.25);
    CHECK(combine_scores(kNegInf, 99.0, 42.0, identity) == kNegInf);
    CHECK(combine_scores(kNegInf, 0.0, 0.0, RescoreWeights{0.0, 1.0, 0.0}) == kNegInf);
    RescoreWeights mixed{1.0, 0.5, 0.25};
    CHECK(combine_scores(-2.0, -4.0, -1.0, mixed) ==
          doctest::Approx(-2.0 - 2.0 + 0.25).epsilon(1e-12));
    // A zero weight drops its term even when the term is not finite.
    CHECK(combine_scores(-1.0, kNegInf, 0.0, identity) == -1.0);
  }

  TEST_CASE("language model weight can overturn the acoustic ranking") {
    // The denoiser strongly favors token 0; the n-best list puts the
    // 1-heavy hypothesis first by a small acoustic margin.
    FixedDenoiser d(CatDist::from_probs({0.7, 0.1, 0.1, 0.1}));
    NoiseSchedule sched;
    LabelPrior prior{CatDist::uniform(4)};
    NBestList list;
    list.entries.push_back(NBestEntry{{1, 1}, -1.0});
    list.entries.push_back(NBestEntry{{0, 0}, -1.1});
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::sample_mask;
    cfg.samples = 4;

    RescoredList ctc_only = rescore_nbest(list, cfg, RescoreWeights{1.0, 0.0, 0.0}, d,
                                          prior, sched, 10);
    CHECK(ctc_only.entries[0].ids == std::vector<int>{1, 1});
    CHECK(ctc_only.entries[0].combined == -1.0);
    CHECK(ctc_only.entries[1].combined == -1.1);

    RescoredList blended = rescore_nbest(list, cfg, RescoreWeights{1.0, 0.3, 0.0}, d,
                                         prior, sched, 10);
    CHECK(blended.entries[0].ids == std::vector<int>{0, 0});
    CHECK(blended.entries[0].combined ==
          doctest::Approx(-1.1 + 0.3 * std::log(0.7)).epsilon(1e-12));
    CHECK(blended.entries[1].combined ==
          doctest::Approx(-1.0 + 0.3 * std::log(0.1)).epsilon(1e-12));
  }

  TEST_CASE("shared-mask mode reuses one mask stream across hypotheses") {
    FixedDenoiser inner = FixedDenoiser::uniform(4);
    RecordingDenoiser d(inner);
    NoiseSchedule sched;
    LabelPrior prior{CatDist::uniform(4)};
    NBestList list;
    list.entries.push_back(NBestEntry{{0, 1, 2, 3, 0, 1}, -1.0});
    list.entries.push_back(NBestEntry{{3, 2, 1, 0, 3, 2}, -2.0});
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::sample_mask;
    cfg.samples = 4;

    auto patterns = [&]() {
      std::vector<std::vector<int>> out;
      for (const auto& z : d.calls()) out.push_back(z.masked_positions);
      return out;
    };

    cfg.share_masks = true;
    rescore_nbest(list, cfg, RescoreWeights{1.0, 0.3, 0.0}, d, prior, sched, 77);
    auto shared = patterns();
    REQUIRE(shared.size() >= 8);
    size_t half = shared.size() / 2;
    for (size_t k = 0; k < half; ++k) CHECK(shared[k] == shared[half + k]);

    d.clear();
    cfg.share_masks = false;
    rescore_nbest(list, cfg, RescoreWeights{1.0, 0.3, 0.0}, d, prior, sched, 77);
    auto independent = patterns();
    bool any_diff = false;
    for (size_t k = 0; k < independent.size() / 2; ++k) {
      if (independent[k] != independent[independent.size() / 2 + k]) any_diff = true;
    }
    CHECK(any_diff);
  }

  TEST_CASE("empty hypotheses keep a zero model score") {
    FixedDenoiser d = FixedDenoiser::uniform(3);
    NoiseSchedule sched;
    LabelPrior prior{CatDist::uniform(3)};
    NBestList list;
    list.entries.push_back(NBestEntry{{}, -2.0});
    list.entries.push_back(NBestEntry{{0}, -3.0});
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::sample_mask;
    cfg.samples = 2;
    RescoredList r = rescore_nbest(list, cfg, RescoreWeights{1.0, 0.5, 0.0}, d, prior,
                                   sched, 3);
    REQUIRE(r.entries.size() == 2);
    const RescoredEntry* empty_entry = nullptr;
    for (const auto& e : r.entries) {
      if (e.ids.empty()) empty_entry = &e;
    }
    REQUIRE(empty_entry != nullptr);
    CHECK(empty_entry->s_difflm == 0.0);
    CHECK(empty_entry->combined == -2.0);
    CHECK_THROWS_WITH(rescore_nbest(NBestList{}, cfg, RescoreWeights{}, d, prior, sched, 0),
                      "rescorer: empty n-best list");
  }

  TEST_CASE("rescored files round-trip") {
    RescoredList list;
    list.entries.push_back(RescoredEntry{{2, 0, 1}, -3.5, -1.25, -3.875});
    list.entries.push_back(RescoredEntry{{}, -9.0, 0.0, -9.0});
    std::string path =
        (std::filesystem::temp_directory_path() / "difflm_test_rescored.txt").string();
    save_rescored(path, "utt-3", list);
    auto [utt, loaded] = load_rescored(path);
    CHECK(utt == "utt-3");
    REQUIRE(loaded.entries.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
      CHECK(loaded.entries[i].ids == list.entries[i].ids);
      CHECK(loaded.entries[i].ctc_logprob == list.entries[i].ctc_logprob);
      CHECK(loaded.entries[i].s_difflm == list.entries[i].s_difflm);
      CHECK(loaded.entries[i].combined == list.entries[i].combined);
    }
    std::filesystem::remove(path);
  }
}
