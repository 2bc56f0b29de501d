#pragma once

// Exact one-sided Wilcoxon signed-rank test by enumeration of every sign
// assignment. Zero differences are dropped; tied magnitudes get average ranks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace aif::oracle {

struct SignedRankResult {
  int n = 0;               // non-zero differences
  double w_plus = 0.0;     // rank sum of positive differences
  double p_greater = 1.0;  // P(W+ >= w_plus) under the null
};

inline std::vector<double> average_ranks(const std::vector<double>& magnitudes) {
  const std::size_t n = magnitudes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return magnitudes[a] < magnitudes[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// Tests x > y for paired samples.
inline SignedRankResult wilcoxon_greater(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("paired samples differ in length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) diff.push_back(x[i] - y[i]);
  SignedRankResult out;
  out.n = static_cast<int>(diff.size());
  if (out.n == 0) return out;
  if (out.n > 24) throw std::invalid_argument("exact enumeration limited to 24 pairs");
  std::vector<double> mag;
  for (double d : diff) mag.push_back(std::abs(d));
  const auto ranks = average_ranks(mag);
  for (std::size_t i = 0; i < diff.size(); ++i)
    if (diff[i] > 0.0) out.w_plus += ranks[i];
  const std::uint64_t total = std::uint64_t{1} << out.n;
  std::uint64_t at_least = 0;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (int i = 0; i < out.n; ++i)
      if (mask >> i & 1U) w += ranks[static_cast<std::size_t>(i)];
    if (w >= out.w_plus - 1e-9) ++at_least;
  }
  out.p_greater = static_cast<double>(at_least) / static_cast<double>(total);
  return out;
}

}  // namespace aif::oracle
