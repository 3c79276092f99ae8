#pragma once

// Straightforward reference implementations used to cross-check the library.

#include <algorithm>
#include <cmath>
#include <vector>

namespace gdvrl::testing {

/// Subsets of {0..n-1} with at most k elements, as sorted index vectors.
inline std::vector<std::vector<int>> small_subsets(int n, int k) {
  std::vector<std::vector<int>> out{{}};
  for (int size = 1; size <= k; ++size) {
    std::vector<int> idx(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
      out.push_back(idx);
      int i = size - 1;
      while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - size + i) --i;
      if (i < 0) break;
      ++idx[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < size; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return out;
}

/// F1 from precision and recall; two empty sets agree perfectly.
inline double reference_f1(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  double tp = 0;
  for (int p : pred) tp += std::count(gold.begin(), gold.end(), p) > 0 ? 1.0 : 0.0;
  if (tp == 0) return 0.0;
  const double precision = tp / static_cast<double>(pred.size());
  const double recall = tp / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

inline std::vector<double> reference_advantages(const std::vector<double>& r, double delta) {
  double mean = 0;
  for (double x : r) mean += x;
  mean /= static_cast<double>(r.size());
  double var = 0;
  for (double x : r) var += (x - mean) * (x - mean);
  var /= static_cast<double>(r.size());
  std::vector<double> out;
  for (double x : r) out.push_back((x - mean) / (std::sqrt(var) + delta));
  return out;
}

/// Per-sample clipped objective written out case by case.
inline double reference_clipped_term(double ratio, double adv, double lo, double hi) {
  double clipped = ratio;
  if (clipped < 1.0 - lo) clipped = 1.0 - lo;
  if (clipped > 1.0 + hi) clipped = 1.0 + hi;
  const double a = ratio * adv;
  const double b = clipped * adv;
  return a < b ? a : b;
}

}  // namespace gdvrl::testing
