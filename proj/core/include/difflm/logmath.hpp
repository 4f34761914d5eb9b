#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace difflm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> xs);

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Categorical distribution in the log domain. The length is |V| or |V|+1
// depending on context; when a special symbol (CTC blank, diffusion mask)
// is part of the support it occupies the last slot.
struct CatDist {
  std::vector<double> log_probs;

  CatDist() = default;
  explicit CatDist(std::vector<double> lp) : log_probs(std::move(lp)) {}

  int size() const { return static_cast<int>(log_probs.size()); }
  double operator[](int i) const { return log_probs[i]; }
  double& operator[](int i) { return log_probs[i]; }

  static CatDist point_mass(int index, int size);
  static CatDist uniform(int size);
  static CatDist from_probs(std::span<const double> probs);
  static CatDist from_probs(std::initializer_list<double> probs) {
    return from_probs(std::span<const double>(probs.begin(), probs.size()));
  }

  // log-sum-exp over all entries; 0 for a normalized distribution.
  double log_norm() const { return log_sum_exp(log_probs); }
  bool is_normalized(double tol = 1e-9) const { return std::fabs(log_norm()) < tol; }
  void renormalize();

  int arg_max() const;
  std::vector<double> probs() const;
};

// In-place softmax of an unnormalized score vector, returned in the log
// domain. All-(-inf) input is rejected.
void log_softmax(std::span<double> scores);

double mean(std::span<const double> xs);
double variance(std::span<const double> xs);  // unbiased (n-1)

}  // namespace difflm
