#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "difflm/ctc.hpp"
#include "difflm/logmath.hpp"
#include "difflm/rng.hpp"
#include "difflm/vocab.hpp"
#include "doctest.h"

using namespace difflm;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

CtcPosterior random_posterior(int frames, int vocab_size, Rng& rng) {
  CtcPosterior p;
  p.vocab_size = vocab_size;
  for (int t = 0; t < frames; ++t) {
    std::vector<double> probs(vocab_size + 1);
    for (auto& x : probs) x = 0.05 + rng.uniform();
    p.log_probs.push_back(CatDist::from_probs(probs).log_probs);
  }
  return p;
}

// Collapse of one frame path: merge repeats, then drop blanks.
std::vector<int> collapse_path(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != blank && s != prev) out.push_back(s);
    prev = s;
  }
  return out;
}

// Sums the probability of every frame path that collapses to labels.
double enumerate_label_score(const CtcPosterior& p, const std::vector<int>& labels) {
  int frames = p.frames();
  int symbols = p.vocab_size + 1;
  double acc = kNegInf;
  std::vector<int> path(frames, 0);
  while (true) {
    if (collapse_path(path, p.blank_col()) == labels) {
      double lp = 0.0;
      for (int t = 0; t < frames; ++t) lp += p.log_probs[t][path[t]];
      acc = log_sum_exp(acc, lp);
    }
    int pos = frames - 1;
    while (pos >= 0 && ++path[pos] == symbols) {
      path[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return acc;
}

// Every label sequence short enough to fit in the frame budget.
std::vector<std::vector<int>> all_label_seqs(int vocab_size, int max_len) {
  std::vector<std::vector<int>> out = {{}};
  std::vector<std::vector<int>> frontier = {{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<int>> grown;
    for (const auto& seq : frontier) {
      for (int v = 0; v < vocab_size; ++v) {
        std::vector<int> next = seq;
        next.push_back(v);
        grown.push_back(std::move(next));
      }
    }
    out.insert(out.end(), grown.begin(), grown.end());
    frontier = std::move(grown);
  }
  return out;
}

}  // namespace

TEST_SUITE("ctc") {
  TEST_CASE("forward score of a single label over one frame") {
    CtcPosterior p;
    p.vocab_size = 2;
    p.log_probs.push_back(CatDist::from_probs({0.6, 0.3, 0.1}).log_probs);
    CHECK(ctc_forward_score(p, {0}) == doctest::Approx(std::log(0.6)).epsilon(1e-12));
    CHECK(ctc_forward_score(p, {1}) == doctest::Approx(std::log(0.3)).epsilon(1e-12));
  }

  TEST_CASE("forward score sums the three two-frame alignments") {
    // Label (a) over 2 frames: paths aa, a-, -a.
    CtcPosterior p;
    p.vocab_size = 2;
    p.log_probs.push_back(CatDist::from_probs({0.5, 0.2, 0.3}).log_probs);
    p.log_probs.push_back(CatDist::from_probs({0.4, 0.4, 0.2}).log_probs);
    double want = 0.5 * 0.4 + 0.5 * 0.2 + 0.3 * 0.4;
    CHECK(ctc_forward_score(p, {0}) == doctest::Approx(std::log(want)).epsilon(1e-12));
  }

  TEST_CASE("empty label sequence scores the all-blank path") {
    Rng rng(11);
    CtcPosterior p = random_posterior(4, 3, rng);
    double want = 0.0;
    for (int t = 0; t < 4; ++t) want += p.log_probs[t][p.blank_col()];
    CHECK(ctc_forward_score(p, {}) == doctest::Approx(want).epsilon(1e-12));
  }

  TEST_CASE("impossible sequences score -inf") {
    Rng rng(12);
    CtcPosterior p = random_posterior(2, 2, rng);
    // Three labels cannot fit in two frames.
    CHECK(ctc_forward_score(p, {0, 1, 0}) == kNegInf);
    // A repeated label needs a separating blank frame: minimum three frames.
    CHECK(ctc_forward_score(p, {0, 0}) == kNegInf);
    CHECK_THROWS_WITH(ctc_forward_score(p, {2}), "ctc: label outside vocabulary: 2");
  }

  TEST_CASE("forward score matches path enumeration") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
      int frames = 1 + static_cast<int>(rng.uniform_int(5));
      int vocab = 2 + static_cast<int>(rng.uniform_int(2));
      CtcPosterior p = random_posterior(frames, vocab, rng);
      for (const auto& labels : all_label_seqs(vocab, std::min(frames, 3))) {
        double fast = ctc_forward_score(p, labels);
        double slow = enumerate_label_score(p, labels);
        if (slow == kNegInf) {
          CHECK(fast == kNegInf);
        } else {
          CHECK(fast == doctest::Approx(slow).epsilon(1e-9));
        }
      }
    }
  }

  TEST_CASE("label sequence probabilities sum to one") {
    Rng rng(31);
    for (int trial = 0; trial < 8; ++trial) {
      int frames = 1 + static_cast<int>(rng.uniform_int(4));
      int vocab = 2 + static_cast<int>(rng.uniform_int(2));
      CtcPosterior p = random_posterior(frames, vocab, rng);
      double total = 0.0;
      for (const auto& labels : all_label_seqs(vocab, frames)) {
        double lp = ctc_forward_score(p, labels);
        if (lp != kNegInf) total += std::exp(lp);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
    }
  }

  TEST_CASE("saturating beam reproduces the exhaustive ranking") {
    Rng rng(59);
    for (int trial = 0; trial < 6; ++trial) {
      CtcPosterior p = random_posterior(3, 2, rng);
      std::vector<NBestEntry> want;
      for (const auto& labels : all_label_seqs(2, 3)) {
        double lp = ctc_forward_score(p, labels);
        if (lp != kNegInf) want.push_back(NBestEntry{labels, lp});
      }
      std::sort(want.begin(), want.end(), [](const NBestEntry& a, const NBestEntry& b) {
        if (a.ctc_logprob != b.ctc_logprob) return a.ctc_logprob > b.ctc_logprob;
        return a.ids < b.ids;
      });
      NBestList got = prefix_beam_nbest(p, 64, 64);
      REQUIRE(got.entries.size() == want.size());
      for (size_t i = 0; i < want.size(); ++i) {
        CHECK(got.entries[i].ids == want[i].ids);
        CHECK(got.entries[i].ctc_logprob == want[i].ctc_logprob);
      }
    }
  }

  TEST_CASE("beam search rejects bad sizes") {
    Rng rng(3);
    CtcPosterior p = random_posterior(2, 2, rng);
    CHECK_THROWS_WITH(prefix_beam_nbest(p, 0, 0), "ctc: need beam >= n >= 1");
    CHECK_THROWS_WITH(prefix_beam_nbest(p, 2, 4), "ctc: need beam >= n >= 1");
  }

  TEST_CASE("noiseless channel is decoded exactly") {
    Rng rng(101);
    std::vector<int> ref = {3, 1, 4, 1, 5};
    CtcPosterior p = simulate_channel(ref, 6, 2, 0.0, 0.3, rng);
    CHECK(p.frames() == static_cast<int>(ref.size()) * 3);
    AlignedGreedy g = greedy_collapse(p);
    CHECK(g.tokens == ref);
    NBestList list = prefix_beam_nbest(p, 8, 4);
    REQUIRE(!list.entries.empty());
    CHECK(list.entries[0].ids == ref);
    // Width-one beam agrees with greedy when the channel is clean.
    NBestList tight = prefix_beam_nbest(p, 1, 1);
    REQUIRE(tight.entries.size() == 1);
    CHECK(tight.entries[0].ids == ref);
  }

  TEST_CASE("blank-dominated channel collapses to nothing") {
    Rng rng(7);
    CtcPosterior p = simulate_channel({0, 1}, 3, 1, 0.1, 0.97, rng);
    CHECK(greedy_collapse(p).tokens.empty());
  }

  TEST_CASE("channel frames carry the configured blank mass") {
    Rng rng(13);
    CtcPosterior p = simulate_channel({2}, 4, 3, 0.2, 0.25, rng);
    REQUIRE(p.frames() == 4);
    for (int t = 0; t < 3; ++t) {
      CHECK(std::exp(p.log_probs[t][p.blank_col()]) == doctest::Approx(0.25).epsilon(1e-12));
    }
    // Separator frame puts at least 0.9 on blank.
    CHECK(std::exp(p.log_probs[3][p.blank_col()]) >= 0.9 - 1e-12);
  }

  TEST_CASE("channel validates its arguments") {
    Rng rng(1);
    CHECK_THROWS_WITH(simulate_channel({}, 3, 1, 0.1, 0.3, rng), "ctc: empty reference");
    CHECK_THROWS_WITH(simulate_channel({0}, 3, 1, 1.0, 0.3, rng), "ctc: noise outside [0, 1)");
    CHECK_THROWS_WITH(simulate_channel({0}, 3, 1, 0.1, 1.0, rng),
                      "ctc: blank_mass outside [0, 1)");
    CHECK_THROWS_WITH(simulate_channel({0}, 3, 0, 0.1, 0.3, rng),
                      "ctc: frames_per_token must be >= 1");
    CHECK_THROWS_WITH(simulate_channel({0}, 1, 1, 0.1, 0.3, rng),
                      "ctc: vocabulary too small for a confuser");
    CHECK_THROWS_WITH(simulate_channel({5}, 3, 1, 0.1, 0.3, rng),
                      "ctc: reference token outside vocabulary");
  }

  TEST_CASE("greedy collapse merges runs and records first frames") {
    CtcPosterior p;
    p.vocab_size = 2;
    auto frame_for = [&](int symbol) {
      std::vector<double> probs(3, 0.1);
      probs[symbol] = 0.8;
      return CatDist::from_probs(probs).log_probs;
    };
    // Frames argmax: a a blank a b b -> tokens a a b at frames 0 3 4.
    for (int s : {0, 0, 2, 0, 1, 1}) p.log_probs.push_back(frame_for(s));
    AlignedGreedy g = greedy_collapse(p);
    CHECK(g.tokens == std::vector<int>{0, 0, 1});
    CHECK(g.tau == std::vector<int>{0, 3, 4});
  }

  TEST_CASE("renorm_nonblank drops the blank column") {
    CtcPosterior p;
    p.vocab_size = 2;
    p.log_probs.push_back(CatDist::from_probs({0.5, 0.25, 0.25}).log_probs);
    CatDist d = renorm_nonblank(p, 0);
    REQUIRE(d.size() == 2);
    CHECK(std::exp(d.log_probs[0]) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(std::exp(d.log_probs[1]) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_WITH(renorm_nonblank(p, 1), "ctc: frame index out of range: 1");
  }

  TEST_CASE("prior estimate averages frames and drops blank") {
    CtcPosterior a;
    a.vocab_size = 2;
    a.log_probs.push_back(CatDist::from_probs({0.2, 0.3, 0.5}).log_probs);
    CtcPosterior b;
    b.vocab_size = 2;
    b.log_probs.push_back(CatDist::from_probs({0.6, 0.2, 0.2}).log_probs);
    LabelPrior prior = estimate_prior({a, b});
    // Mean token mass (0.4, 0.25) renormalized: (8/13, 5/13).
    CHECK(std::exp(prior.log_probs.log_probs[0]) == doctest::Approx(8.0 / 13.0).epsilon(1e-12));
    CHECK(std::exp(prior.log_probs.log_probs[1]) == doctest::Approx(5.0 / 13.0).epsilon(1e-12));
    double lp = prior.sequence_log_prob({0, 1, 0});
    CHECK(lp == doctest::Approx(2 * prior.log_probs.log_probs[0] +
                                prior.log_probs.log_probs[1])
                    .epsilon(1e-12));
    CHECK(prior.sequence_log_prob({}) == 0.0);
    CHECK_THROWS_WITH(estimate_prior({}), "ctc: no posteriors for prior estimate");
  }

  TEST_CASE("posterior files round-trip including -inf entries") {
    CtcPosterior p;
    p.vocab_size = 2;
    p.log_probs.push_back(CatDist::point_mass(0, 3).log_probs);
    p.log_probs.push_back(CatDist::from_probs({0.3, 0.3, 0.4}).log_probs);
    std::string path = temp_path("difflm_test_post.txt");
    p.save(path);
    CtcPosterior r = CtcPosterior::load(path);
    REQUIRE(r.vocab_size == 2);
    REQUIRE(r.frames() == 2);
    for (int t = 0; t < 2; ++t) {
      for (int v = 0; v < 3; ++v) CHECK(r.log_probs[t][v] == p.log_probs[t][v]);
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("posterior load rejects malformed rows") {
    std::string path = temp_path("difflm_test_post_bad.txt");
    write_lines(path, {"CTC-POST 1 1 3 2", "0.1 0.2"});
    CHECK_THROWS_WITH(CtcPosterior::load(path), "ctc: posterior row has wrong width");
    write_lines(path, {"CTC-POST 2 1 3 2"});
    CHECK_THROWS_WITH(CtcPosterior::load(path),
                      "ctc: bad posterior header: CTC-POST 2 1 3 2");
    std::filesystem::remove(path);
  }

  TEST_CASE("prior files round-trip") {
    LabelPrior prior{CatDist::from_probs({0.7, 0.2, 0.1})};
    std::string path = temp_path("difflm_test_prior.txt");
    prior.save(path);
    LabelPrior r = LabelPrior::load(path);
    REQUIRE(r.log_probs.size() == 3);
    for (int v = 0; v < 3; ++v) {
      CHECK(r.log_probs.log_probs[v] == prior.log_probs.log_probs[v]);
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("n-best files round-trip and validate structure") {
    NBestList list;
    list.entries.push_back(NBestEntry{{2, 0, 1}, -3.5});
    list.entries.push_back(NBestEntry{{2, 0}, -4.25});
    list.entries.push_back(NBestEntry{{}, -9.0});
    std::string path = temp_path("difflm_test_nbest.txt");
    save_nbest(path, "utt-7", list);
    auto [utt, loaded] = load_nbest(path);
    CHECK(utt == "utt-7");
    REQUIRE(loaded.entries.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
      CHECK(loaded.entries[i].ids == list.entries[i].ids);
      CHECK(loaded.entries[i].ctc_logprob == list.entries[i].ctc_logprob);
    }
    write_lines(path, {"a 1 -1.0 0", "b 2 -2.0 1"});
    CHECK_THROWS_WITH(load_nbest(path), ("ctc: n-best file mixes utterances: " + path).c_str());
    write_lines(path, {"a 1 -1.0 0", "a 3 -2.0 1"});
    CHECK_THROWS_WITH(load_nbest(path), ("ctc: n-best ranks out of order in " + path).c_str());
    std::filesystem::remove(path);
  }
}
