#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace morphoeval {

inline double mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of empty range");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Sample standard deviation, denominator n-1.
inline double sample_std(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("sample_std needs at least 2 values");
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

inline double median_sorted(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  if (n == 0) throw std::invalid_argument("median of empty range");
  if (n % 2 == 1) return sorted[n / 2];
  return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return median_sorted(values);
}

// Empirical percentile, sorted-order linear interpolation:
// h = (n-1) * p/100, interpolate between the floor(h)-th and next order statistic.
inline double percentile_linear(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of empty range");
  if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile out of [0,100]");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 1) return values[0];
  const double h = static_cast<double>(n - 1) * (p / 100.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return values[n - 1];
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

// One-sided sign test: probability of >= k positives among n fair coin flips.
// Zero differences are dropped by the caller.
inline double sign_test_pvalue(int n, int k) {
  if (n <= 0) return 1.0;
  if (k < 0) k = 0;
  double p = 0.0;
  for (int i = k; i <= n; ++i) {
    double log_binom = 0.0;
    for (int j = 0; j < i; ++j)
      log_binom += std::log(static_cast<double>(n - j)) - std::log(static_cast<double>(j + 1));
    p += std::exp(log_binom - static_cast<double>(n) * std::log(2.0));
  }
  return std::min(1.0, p);
}

}  // namespace morphoeval
