#include "difflm/logmath.hpp"

#include <algorithm>
#include <stdexcept>

namespace difflm {

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  double m = *std::max_element(xs.begin(), xs.end());
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

CatDist CatDist::point_mass(int index, int size) {
  CatDist d;
  d.log_probs.assign(size, kNegInf);
  d.log_probs[index] = 0.0;
  return d;
}

CatDist CatDist::uniform(int size) {
  CatDist d;
  d.log_probs.assign(size, -std::log(static_cast<double>(size)));
  return d;
}

CatDist CatDist::from_probs(std::span<const double> probs) {
  CatDist d;
  d.log_probs.reserve(probs.size());
  double total = 0.0;
  for (double p : probs) total += p;
  if (!(total > 0.0)) throw std::runtime_error("logmath: distribution has no mass");
  for (double p : probs) d.log_probs.push_back(p > 0.0 ? std::log(p / total) : kNegInf);
  return d;
}

void CatDist::renormalize() {
  double z = log_norm();
  if (z == kNegInf) throw std::runtime_error("logmath: distribution has no mass");
  for (double& lp : log_probs) lp -= z;
}

int CatDist::arg_max() const {
  return static_cast<int>(
      std::max_element(log_probs.begin(), log_probs.end()) - log_probs.begin());
}

std::vector<double> CatDist::probs() const {
  std::vector<double> out(log_probs.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_probs[i]);
  return out;
}

void log_softmax(std::span<double> scores) {
  double z = log_sum_exp(scores);
  if (z == kNegInf) throw std::runtime_error("logmath: softmax of all -inf scores");
  for (double& s : scores) s -= z;
}

double mean(std::span<const double> xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

}  // namespace difflm
