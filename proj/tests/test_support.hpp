#pragma once

// Independent oracles shared by the unit and acceptance suites. These stay
// deliberately separate from the library implementations they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace oracle {

// Full-matrix edit distance, written independently of noiser::levenshtein.
inline std::size_t levenshtein(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t best = d[i - 1][j] + 1;
      best = std::min(best, d[i][j - 1] + 1);
      best = std::min(best, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1));
      d[i][j] = best;
    }
  return d[n][m];
}

// Average ranks of |d|, plain doubles.
inline std::vector<double> average_ranks(const std::vector<double>& absd) {
  std::vector<std::size_t> order(absd.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return absd[x] < absd[y]; });
  std::vector<double> ranks(absd.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && absd[order[j + 1]] == absd[order[i]]) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

struct WilcoxonOracle {
  double w_plus = 0, w_minus = 0, w = 0, p = 1;
  int n = 0;
};

// Exact two-sided Wilcoxon signed-rank by direct enumeration of every sign
// assignment, recursion over indices rather than bitmasks.
inline WilcoxonOracle wilcoxon_exact(const std::vector<double>& x,
                                     const std::vector<double>& y) {
  std::vector<double> absd;
  std::vector<int> sign;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    if (d == 0.0) continue;
    absd.push_back(std::fabs(d));
    sign.push_back(d > 0 ? 1 : -1);
  }
  WilcoxonOracle out;
  out.n = static_cast<int>(absd.size());
  if (out.n == 0) return out;
  std::vector<double> ranks = average_ranks(absd);
  double total = std::accumulate(ranks.begin(), ranks.end(), 0.0);
  for (std::size_t i = 0; i < ranks.size(); ++i)
    if (sign[i] > 0) out.w_plus += ranks[i];
  out.w_minus = total - out.w_plus;
  out.w = std::min(out.w_plus, out.w_minus);

  long long count = 0, total_assignments = 0;
  std::vector<int> assign(ranks.size(), 0);
  std::function<void(std::size_t, double)> rec = [&](std::size_t idx, double wp) {
    if (idx == ranks.size()) {
      ++total_assignments;
      double stat = std::min(wp, total - wp);
      if (stat <= out.w + 1e-9) ++count;
      return;
    }
    rec(idx + 1, wp);
    rec(idx + 1, wp + ranks[idx]);
  };
  rec(0, 0.0);
  out.p = static_cast<double>(count) / static_cast<double>(total_assignments);
  return out;
}

}  // namespace oracle
