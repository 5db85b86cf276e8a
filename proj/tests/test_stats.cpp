#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "noiser/rng.hpp"
#include "noiser/stats.hpp"
#include "test_support.hpp"

using namespace noiser;

TEST_CASE("wilcoxon worked example") {
  std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y{2, 3, 4, 5, 7};
  WilcoxonResult r = wilcoxon_signed_rank(x, y);
  CHECK(r.n_effective == 5);
  CHECK(r.w_plus == 0.0);
  CHECK(r.w_minus == 15.0);
  CHECK(r.w == 0.0);
  CHECK(r.method == WilcoxonMethod::exact);
  CHECK(r.p_value == Catch::Approx(0.0625).margin(1e-15));
}

TEST_CASE("identical samples are degenerate") {
  std::vector<double> x{1, 2, 3};
  try {
    wilcoxon_signed_rank(x, x);
    FAIL("expected degenerate-sample error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_sample);
  }
}

TEST_CASE("rank-sum identity holds for random samples") {
  Rng rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + static_cast<int>(rng.below(15));
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.below(10));
      y[i] = static_cast<double>(rng.below(10));
    }
    WilcoxonResult r;
    try {
      r = wilcoxon_signed_rank(x, y);
    } catch (const Error&) {
      continue;  // all differences zero
    }
    double ne = r.n_effective;
    CHECK(r.w_plus + r.w_minus == Catch::Approx(ne * (ne + 1) / 2).margin(1e-9));
    CHECK(r.w == std::min(r.w_plus, r.w_minus));
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value <= 1.0);
  }
}

TEST_CASE("exact p matches the enumeration oracle on random pairs") {
  Rng rng(777);
  for (int trial = 0; trial < 300; ++trial) {
    int n = 2 + static_cast<int>(rng.below(9));  // n in [2, 10]
    std::vector<double> x(n), y(n);
    bool nonzero = false;
    for (int i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.below(8));
      y[i] = static_cast<double>(rng.below(8));
      if (x[i] != y[i]) nonzero = true;
    }
    if (!nonzero) x[0] += 1;
    WilcoxonResult r = wilcoxon_signed_rank(x, y);
    auto o = oracle::wilcoxon_exact(x, y);
    CHECK(r.w_plus == Catch::Approx(o.w_plus).margin(1e-12));
    CHECK(r.w_minus == Catch::Approx(o.w_minus).margin(1e-12));
    CHECK(r.p_value == Catch::Approx(o.p).margin(1e-12));
  }
}

TEST_CASE("every sign pattern over magnitudes 1..n matches the oracle") {
  for (int n = 2; n <= 8; ++n) {
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
      std::vector<double> x(n), y(n, 0.0);
      for (int i = 0; i < n; ++i) x[i] = (mask >> i) & 1 ? (i + 1.0) : -(i + 1.0);
      WilcoxonResult r = wilcoxon_signed_rank(x, y);
      auto o = oracle::wilcoxon_exact(x, y);
      REQUIRE(r.p_value == Catch::Approx(o.p).margin(1e-12));
    }
  }
}

TEST_CASE("tied magnitudes get average ranks") {
  // |D| = {1,1,2,2,3}: ranks 1.5 1.5 3.5 3.5 5
  std::vector<double> x{1, -1, 2, 2, 3};
  std::vector<double> y(5, 0.0);
  WilcoxonResult r = wilcoxon_signed_rank(x, y);
  CHECK(r.w_plus == Catch::Approx(1.5 + 3.5 + 3.5 + 5.0));
  CHECK(r.w_minus == Catch::Approx(1.5));
  auto o = oracle::wilcoxon_exact(x, y);
  CHECK(r.p_value == Catch::Approx(o.p).margin(1e-12));

  Rng rng(31337);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 3 + static_cast<int>(rng.below(7));
    std::vector<double> xs(n), ys(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double mag = 1.0 + static_cast<double>(rng.below(3));  // heavy ties
      xs[i] = rng.bernoulli(0.5) ? mag : -mag;
    }
    WilcoxonResult got = wilcoxon_signed_rank(xs, ys);
    auto want = oracle::wilcoxon_exact(xs, ys);
    REQUIRE(got.p_value == Catch::Approx(want.p).margin(1e-12));
  }
}

TEST_CASE("scale invariance of W and exact p") {
  std::vector<double> x{0.5, -1.25, 2.0, 3.5, -0.75, 4.0};
  std::vector<double> y(6, 0.0);
  WilcoxonResult base = wilcoxon_signed_rank(x, y);
  for (double c : {0.1, 3.0, 1e6}) {
    std::vector<double> xs(x);
    for (auto& v : xs) v *= c;
    WilcoxonResult scaled = wilcoxon_signed_rank(xs, y);
    CHECK(scaled.w == base.w);
    CHECK(scaled.p_value == Catch::Approx(base.p_value).margin(1e-15));
  }
}

TEST_CASE("normal approximation matches the reference values") {
  // frozen against an independent statistics package (tie-corrected variance,
  // continuity correction, two-sided)
  std::vector<double> d{1, -2, 3,  4,  5,  -1, 2, 2,  -3, 4,  6,  7, -2,
                        8, 9,  10, -4, 11, 3,  5, 12, -6, 2,  4,  13};
  std::vector<double> zeros(d.size(), 0.0);
  WilcoxonResult r = wilcoxon_signed_rank(d, zeros);
  CHECK(r.method == WilcoxonMethod::normal_approx);
  CHECK(r.n_effective == 25);
  CHECK(r.w == Catch::Approx(50.5).margin(1e-12));
  CHECK(r.p_value == Catch::Approx(0.0026544454860385905).margin(1e-12));

  std::vector<double> d2{3,    -1,   4,   -1.5, 5,    9,    -2.6, 5.3,  5.8, -9.7,
                         9.3,  -2.3, 8.4, 6.2,  -6.4, 3.3,  8.3,  2.7,  -9.5, 0.2,
                         8.8,  -4.1, 7.1, -6.6, 5.5,  -3.9, 2.2,  7.7,  -5.8, 1.9};
  for (std::size_t i = 0; i < d2.size(); ++i) d2[i] += static_cast<double>(i) * 1e-6;
  std::vector<double> zeros2(d2.size(), 0.0);
  WilcoxonResult r2 = wilcoxon_signed_rank(d2, zeros2);
  CHECK(r2.method == WilcoxonMethod::normal_approx);
  CHECK(r2.w == Catch::Approx(159.0).margin(1e-9));
  CHECK(r2.p_value == Catch::Approx(0.1332291883875936).margin(1e-12));
}

TEST_CASE("exact cutoff is configurable") {
  std::vector<double> x(21), y(21, 0.0);
  for (int i = 0; i < 21; ++i) x[i] = i % 3 == 0 ? -(i + 1.0) : (i + 1.0);
  CHECK(wilcoxon_signed_rank(x, y).method == WilcoxonMethod::normal_approx);
  CHECK(wilcoxon_signed_rank(x, y, 21).method == WilcoxonMethod::exact);
}

TEST_CASE("chi-square survival function matches reference values") {
  CHECK(chi_square_sf(7.0, 3) == Catch::Approx(0.07189777249646509).margin(1e-12));
  CHECK(chi_square_sf(2.5, 2) == Catch::Approx(0.2865047968601901).margin(1e-12));
  CHECK(chi_square_sf(25.0, 10) == Catch::Approx(0.005345505487134069).margin(1e-12));
  CHECK(chi_square_sf(11.344866730144368, 3) == Catch::Approx(0.01).margin(1e-9));
  CHECK(chi_square_sf(0.0, 4) == 1.0);
}

TEST_CASE("uniform chi-square statistic") {
  std::vector<std::int64_t> counts{2500, 2500, 2500, 2500};
  CHECK(chi_square_uniform_stat(counts) == 0.0);
  // expected 2500, deviations (1500,-500,-500,-500) -> (2250000+3*250000)/2500 = 1200
  std::vector<std::int64_t> skewed{4000, 2000, 2000, 2000};
  CHECK(chi_square_uniform_stat(skewed) == Catch::Approx(1200.0));
}
