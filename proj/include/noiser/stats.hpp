#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "noiser/error.hpp"

namespace noiser {

enum class WilcoxonMethod { exact, normal_approx };

inline const char* to_string(WilcoxonMethod m) {
  return m == WilcoxonMethod::exact ? "exact" : "normal_approx";
}

struct WilcoxonResult {
  int n_effective = 0;
  double w_plus = 0.0;
  double w_minus = 0.0;
  double w = 0.0;
  double p_value = 1.0;
  WilcoxonMethod method = WilcoxonMethod::exact;
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace detail {

// Average ranks of |values|, ascending, ties averaged. Returned doubled so the
// exact path can work in integers (average ranks are multiples of 1/2).
inline std::vector<std::int64_t> doubled_ranks(const std::vector<double>& absd,
                                               std::vector<std::int64_t>& tie_sizes) {
  const std::size_t n = absd.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return absd[a] < absd[b]; });
  std::vector<std::int64_t> ranks2(n, 0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && absd[order[j + 1]] == absd[order[i]]) ++j;
    // positions i..j (0-based) share ranks i+1..j+1; average doubled = (i+j+2)
    std::int64_t avg2 = static_cast<std::int64_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks2[order[k]] = avg2;
    tie_sizes.push_back(static_cast<std::int64_t>(j - i + 1));
    i = j + 1;
  }
  return ranks2;
}

}  // namespace detail

// Paired two-sided Wilcoxon signed-rank test. Zero differences are dropped,
// absolute differences receive average ranks under ties, W = min(W+, W-).
// For n_effective <= exact_cutoff the p-value is computed by enumerating all
// 2^n sign assignments; beyond that a normal approximation with tie and
// continuity corrections is used.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> x,
                                           std::span<const double> y,
                                           int exact_cutoff = 20) {
  if (x.size() != y.size())
    throw Error(ErrorKind::input, "paired samples differ in length");
  if (x.empty()) throw Error(ErrorKind::input, "empty paired sample");

  std::vector<double> absd;
  std::vector<int> sign;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    if (d == 0.0) continue;
    absd.push_back(std::fabs(d));
    sign.push_back(d > 0 ? 1 : -1);
  }
  const int n = static_cast<int>(absd.size());
  if (n == 0)
    throw Error(ErrorKind::degenerate_sample, "all paired differences are zero");

  std::vector<std::int64_t> tie_sizes;
  std::vector<std::int64_t> ranks2 = detail::doubled_ranks(absd, tie_sizes);

  std::int64_t wp2 = 0;
  std::int64_t total2 = 0;
  for (int i = 0; i < n; ++i) {
    total2 += ranks2[static_cast<std::size_t>(i)];
    if (sign[static_cast<std::size_t>(i)] > 0) wp2 += ranks2[static_cast<std::size_t>(i)];
  }
  std::int64_t wm2 = total2 - wp2;
  std::int64_t w2 = std::min(wp2, wm2);

  WilcoxonResult res;
  res.n_effective = n;
  res.w_plus = static_cast<double>(wp2) / 2.0;
  res.w_minus = static_cast<double>(wm2) / 2.0;
  res.w = static_cast<double>(w2) / 2.0;

  if (n <= exact_cutoff) {
    res.method = WilcoxonMethod::exact;
    // Integer arithmetic on doubled ranks keeps the enumeration exact.
    std::uint64_t count = 0;
    const std::uint64_t masks = 1ULL << n;
    for (std::uint64_t mask = 0; mask < masks; ++mask) {
      std::int64_t s = 0;
      std::uint64_t m = mask;
      while (m) {
        s += ranks2[static_cast<std::size_t>(std::countr_zero(m))];
        m &= m - 1;
      }
      std::int64_t stat = std::min(s, total2 - s);
      if (stat <= w2) ++count;
    }
    res.p_value = static_cast<double>(count) / static_cast<double>(masks);
  } else {
    res.method = WilcoxonMethod::normal_approx;
    double dn = static_cast<double>(n);
    double mean = dn * (dn + 1.0) / 4.0;
    double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
    for (std::int64_t t : tie_sizes)
      var -= static_cast<double>(t * t * t - t) / 48.0;
    double dev = res.w_plus - mean;
    double cc = dev > 0 ? -0.5 : (dev < 0 ? 0.5 : 0.0);
    double z = (dev + cc) / std::sqrt(var);
    res.p_value = std::min(1.0, 2.0 * normal_cdf(-std::fabs(z)));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Regularized incomplete gamma, used for chi-square tail probabilities.
// Series expansion below x < a+1, continued fraction above.
// ---------------------------------------------------------------------------

namespace detail {

inline double gamma_p_series(double a, double x) {
  double sum = 1.0 / a;
  double term = sum;
  for (int k = 1; k < 500; ++k) {
    term *= x / (a + k);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k < 500; ++k) {
    double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

// P(X > x) for X ~ chi-square with df degrees of freedom.
inline double chi_square_sf(double x, int df) {
  if (df <= 0) throw Error(ErrorKind::input, "degrees of freedom must be positive");
  if (x <= 0.0) return 1.0;
  double a = df / 2.0;
  double half = x / 2.0;
  if (half < a + 1.0) return 1.0 - detail::gamma_p_series(a, half);
  return detail::gamma_q_contfrac(a, half);
}

// Pearson statistic for observed counts against uniform expectation.
inline double chi_square_uniform_stat(std::span<const std::int64_t> counts) {
  if (counts.empty()) throw Error(ErrorKind::input, "no counts");
  double total = 0;
  for (auto c : counts) total += static_cast<double>(c);
  double expected = total / static_cast<double>(counts.size());
  if (expected <= 0.0) throw Error(ErrorKind::input, "empty sample");
  double stat = 0.0;
  for (auto c : counts) {
    double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return stat;
}

}  // namespace noiser
