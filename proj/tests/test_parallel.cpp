#include <atomic>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "difflm/parallel.hpp"
#include "doctest.h"

using namespace difflm;

TEST_SUITE("parallel") {
  TEST_CASE("every index runs exactly once") {
    for (int workers : {1, 2, 4, 7}) {
      std::vector<std::atomic<int>> hits(100);
      parallel_for(100, workers, [&](int i) { hits[i].fetch_add(1); });
      for (const auto& h : hits) CHECK(h.load() == 1);
    }
  }

  TEST_CASE("slot writes make results schedule independent") {
    std::vector<int> serial(256), threaded(256);
    parallel_for(256, 1, [&](int i) { serial[i] = i * i % 97; });
    parallel_for(256, 8, [&](int i) { threaded[i] = i * i % 97; });
    CHECK(serial == threaded);
  }

  TEST_CASE("empty and degenerate ranges are no-ops") {
    int calls = 0;
    parallel_for(0, 4, [&](int) { ++calls; });
    parallel_for(-3, 4, [&](int) { ++calls; });
    CHECK(calls == 0);
    // A worker count below one clamps to serial execution.
    parallel_for(3, 0, [&](int) { ++calls; });
    CHECK(calls == 3);
  }

  TEST_CASE("a task exception reaches the caller") {
    CHECK_THROWS_WITH(parallel_for(16, 4,
                                   [&](int i) {
                                     if (i == 7) throw std::runtime_error("task failed");
                                   }),
                      "task failed");
    CHECK_THROWS_WITH(parallel_for(4, 1,
                                   [&](int i) {
                                     if (i == 2) throw std::runtime_error("serial failure");
                                   }),
                      "serial failure");
  }
}
