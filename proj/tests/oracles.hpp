#pragma once

// Independent reference implementations used to cross-check the library.
// They are written for clarity, not speed.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix dot_products(const std::vector<std::vector<float>>& q, const std::vector<std::vector<float>>& g) {
  Matrix m(q.size(), std::vector<double>(g.size()));
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      for (std::size_t d = 0; d < q[i].size(); ++d) m[i][j] += static_cast<double>(q[i][d]) * g[j][d];
  return m;
}

// Sort the whole gallery (score descending, index ascending) and look up the
// truth's place in that ordering.
inline double recall_at_k(const Matrix& sim, const std::vector<std::size_t>& truth, int k) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < sim.size(); ++q) {
    std::vector<std::size_t> order(sim[q].size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[q][a] > sim[q][b]; });
    const auto pos = std::find(order.begin(), order.end(), truth[q]) - order.begin();
    if (pos < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sim.size());
}

inline double top1(const Matrix& logits, const std::vector<std::size_t>& truth) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits[i].size(); ++c)
      if (logits[i][c] > logits[i][best]) best = c;
    if (best == truth[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.size());
}

// Two-pass population CV.
inline double cv(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size())) / mean;
}

}  // namespace oracle
