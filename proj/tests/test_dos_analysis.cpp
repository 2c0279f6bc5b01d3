#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "qvelab/dos_analysis.hpp"

using namespace qvelab;

TEST_CASE("semicircle density values") {
  const auto p = presets::semicircle(10);
  const auto dos = density_of_states(p, {-3.0, 0.0, 3.0}, 1e-4);
  CHECK(dos.rho[1] == doctest::Approx(1.0 / M_PI).epsilon(1e-3));
  CHECK(dos.rho[2] <= 1e-3);
  CHECK(dos.rho[0] == doctest::Approx(dos.rho[2]).epsilon(1e-8));
  CHECK(dos.eta_used == 1e-4);

  const auto ex = density_of_states(p, {0.0, 1.0}, 1e-3, true);
  CHECK(ex.eta_used == 0.0);
  CHECK(ex.rho[1] == doctest::Approx(std::sqrt(3.0) / (2.0 * M_PI)).epsilon(1e-6));
  CHECK_THROWS_AS(density_of_states(p, {1.0, 0.0}, 1e-3), InvalidInput);
  CHECK_THROWS_AS(density_of_states(p, {0.0, 1.0}, 0.0), InvalidInput);
}

TEST_CASE("normalization, cdf and quantiles of the semicircle curve") {
  const auto p = presets::semicircle(4);
  const auto dos = density_of_states(p, uniform_grid(-2.5, 2.5, 5001), 1e-7);
  CHECK(dos.integral() == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(dos.cdf(0.0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(dos.cdf(10.0) == 1.0);
  CHECK(dos.quantile(0.5) == doctest::Approx(0.0).epsilon(1e-9));
  for (double u : {0.1, 0.37, 0.9}) CHECK(dos.cdf(dos.quantile(u)) == doctest::Approx(u).epsilon(1e-10));
  std::ostringstream os;
  dos.to_csv(os);
  CHECK(os.str().rfind("tau,rho\n", 0) == 0);
}

TEST_CASE("harmonic extension against closed forms and direct solves") {
  const auto p = presets::semicircle(4);
  const auto dos = density_of_states(p, uniform_grid(-2.2, 2.2, 4401), 1e-8);
  CHECK(harmonic_extension(dos, {0.0, 1.0}) == doctest::Approx((std::sqrt(5.0) - 1.0) / (2.0 * M_PI)).epsilon(1e-4));
  const double big = 1e4;
  CHECK(harmonic_extension(dos, {0.0, big}) * M_PI * big == doctest::Approx(1.0).epsilon(1e-3));
  CHECK_THROWS_AS(harmonic_extension(dos, {0.0, 1e-4}), InvalidInput);

  const auto g = presets::gap_profile(100);
  const auto gd = density_of_states(g, uniform_grid(-1.6, 1.6, 6401), 1e-7);
  for (double tau : {0.4, 0.0, 1.0}) {
    const double direct = solve_robust(g, {tau, 1e-2}, {}).density();
    CHECK(harmonic_extension(gd, {tau, 1e-2}) == doctest::Approx(direct).epsilon(1e-4));
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ut(-1.5, 1.5), ue(-2.0, 0.0);
  for (int k = 0; k < 10; ++k) {
    const SpectralPoint z{ut(rng), std::pow(10.0, ue(rng))};
    CHECK(std::abs(harmonic_extension(gd, z) - solve_robust(g, z, {}).density()) < 1e-3);
  }
}

TEST_CASE("support of the semicircle and of the gap profile") {
  const auto p = presets::semicircle(4);
  const auto dos = density_of_states(p, uniform_grid(-2.5, 2.5, 2501), 1e-7);
  const auto s = detect_support(dos);
  REQUIRE(s.intervals.size() == 1);
  CHECK(std::abs(s.intervals[0].lo + 2.0) <= dos.max_spacing());
  CHECK(std::abs(s.intervals[0].hi - 2.0) <= dos.max_spacing());
  REQUIRE(s.minima.size() == 2);
  CHECK(s.minima[0].kind == MinimumKind::extreme_edge);
  const auto refined = refine_edges(p, s);
  CHECK(refined.intervals[0].lo == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(refined.intervals[0].hi == doctest::Approx(2.0).epsilon(1e-9));

  const auto g = presets::gap_profile(100);
  const auto gd = density_of_states(g, uniform_grid(-1.6, 1.6, 3201), 1e-7);
  const auto gs = detect_support(gd);
  REQUIRE(gs.intervals.size() == 3);
  REQUIRE(gs.gaps().size() == 2);
  const oracle::TwoClass o{0.0, 1.0, 0.02, 0.15};
  const double b1 = o.edge(0.4, 0.2), a2 = o.edge(0.4, 0.6), b2 = o.edge(1.5, 1.2);
  CHECK(std::abs(gs.intervals[1].hi - b1) <= 2.0 * gd.max_spacing());
  CHECK(std::abs(gs.intervals[2].lo - a2) <= 2.0 * gd.max_spacing());
  const auto gr = refine_edges(g, gs);
  CHECK(std::abs(gr.intervals[1].hi - b1) <= 1e-8);
  CHECK(std::abs(gr.intervals[2].lo - a2) <= 1e-8);
  CHECK(std::abs(gr.intervals[2].hi - b2) <= 1e-8);
  CHECK(std::abs(gr.intervals[0].lo + b2) <= 1e-8);
  CHECK(gr.minima.size() == 6);
  CHECK(gr.minima[1].kind == MinimumKind::internal_edge);
  CHECK(gr.minima[1].inward == -1);
  CHECK(gr.distance({0.4, 0.0}) == doctest::Approx(std::min(0.4 - b1, a2 - 0.4)));

  DosCurve flat{{-1.0, 1.0}, {0.0, 0.0}, 1e-3, 1e-3, {}};
  CHECK_THROWS_AS(detect_support(flat), InvalidInput);
}

TEST_CASE("local gap size") {
  SupportStructure s;
  s.intervals = {{-1.0, -0.1}, {0.1, 1.0}};
  CHECK(local_gap_size(s, -1.5, 0.01) == 1.0);
  CHECK(local_gap_size(s, 0.0, 0.01) == doctest::Approx(0.2));
  CHECK(local_gap_size(s, -0.5, 0.01) == 0.0);
  CHECK(local_gap_size(s, 0.105, 0.01) == doctest::Approx(0.2));
  CHECK(local_gap_size(s, 0.995, 0.01) == 1.0);
}

TEST_CASE("kappa branches") {
  SupportStructure s;
  s.intervals = {{-2.0, 2.0}};
  const auto bulk = kappa(s, {0.0, 1e-3}, 0.3, 1000, 0.1, 0.01);
  CHECK_FALSE(bulk.improved);
  CHECK(bulk.value == doctest::Approx(1.0 / 0.3));

  // Delta = 1 near the extreme edge; eta = 1 puts z at distance 1 from the support.
  const int n = 1000;
  const double rho = 1e-3;
  const SpectralPoint z{1.995, 1.0};
  const auto far = kappa(s, z, rho, n, 0.1, 0.01);
  CHECK(far.improved);
  const double a = 1.0 + rho;
  const double expected = 0.5 * (1.0 / a + 1.0 / (n * std::sqrt(a)));
  CHECK(far.value == doctest::Approx(expected).epsilon(1e-12));
  CHECK(far.value <= far.default_value);

  // An (artificially) large rho with N eta = 1: the condition holds but the
  // 1/(N eta) term pushes the improved value above the default.
  const auto tiny = kappa(s, {3.0, 1e-3}, 10.0, n, 0.1, 0.01);
  CHECK(tiny.improved_rejected);
  CHECK(tiny.value == tiny.default_value);

  // At the edge itself dist = eta: a small eta makes the condition fail.
  const auto edge = kappa(s, {2.0, 1e-5}, 1e-3, n, 0.1, 0.01);
  CHECK_FALSE(edge.improved);
}

TEST_CASE("shape exponents") {
  const auto p = presets::semicircle(4);
  const auto dos = density_of_states(p, uniform_grid(-2.2, 2.2, 8801), 1e-8);
  const auto s = detect_support(dos);
  const auto fits = fit_edge_shapes(dos, s);
  REQUIRE(fits.size() == 2);
  for (const auto& f : fits) {
    CHECK(f.reliable);
    CHECK(f.exponent == doctest::Approx(0.5).epsilon(0.1));
    CHECK(f.side == f.minimum.inward);
  }
}

TEST_CASE("envelope cubic") {
  // pi2 = 0, pi1 = 1, rho = 1, N eta = 1e4, technical factor 1.
  const double e = envelope_root({1.0, 1.0, 0.0}, 1e4, 1.0);
  CHECK(e == doctest::Approx(1.0002e-4).epsilon(1e-4));
  CHECK(std::abs(e - oracle::cubic_root(0.0, 1.0, 1.0, 1e4, 1.0)) <= 1e-10 * e);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int k = 0; k < 200; ++k) {
    const double p2 = u(rng), p1 = u(rng) * u(rng), r = u(rng), ne = std::pow(10.0, 2.0 * u(rng)), t = 1.0 + u(rng);
    const double root = envelope_root({r, p1, p2}, ne, t);
    CHECK(std::abs(root - oracle::cubic_root(p2, p1, r, ne, t)) <= 1e-10 * root);
  }
  // Large N eta drives the root to zero.
  CHECK(envelope_root({1.0, 1.0, 1.0}, 1e12, 1.0) < 1e-11);
  CHECK_THROWS_AS(envelope_root({-1.0, 1.0, 1.0}, 10.0, 1.0), InvalidInput);
}

TEST_CASE("envelope coefficients and monotonicity") {
  SupportStructure s;
  s.intervals = {{-1.0, -0.1}, {0.1, 1.0}};
  s.minima = {{-1.0, MinimumKind::extreme_edge, +1, 0},
              {-0.1, MinimumKind::internal_edge, -1, 0},
              {0.0, MinimumKind::internal_minimum, 0, 0},
              {0.1, MinimumKind::internal_edge, +1, 1},
              {1.0, MinimumKind::extreme_edge, -1, 1}};
  DosCurve dos{{-2.0, 2.0}, {0.01, 0.01}, 1e-6, 1e-6, {}};
  const int n = 1000;
  EnvelopeOptions opt;
  const auto env = error_envelope(s, dos, 0.1, n, opt);
  CHECK(env.theta() == -1);
  CHECK(env.delta_gap() == doctest::Approx(0.2));
  CHECK(env.eps_tilde() == doctest::Approx(0.005));
  const auto c = env.coefficients(0.03, 1e-3);  // omega in [0, c* Delta]
  CHECK(c.rho_t == doctest::Approx(1e-3 / (std::pow(0.201, 1.0 / 6.0) * std::sqrt(0.031))));
  CHECK(c.pi1 == doctest::Approx(std::sqrt(0.031) * std::pow(0.201, 1.0 / 6.0)));
  CHECK(c.pi2 == doctest::Approx(std::cbrt(0.201)));
  const auto c2 = env.coefficients(0.08, 1e-3);
  CHECK(c2.pi1 == doctest::Approx(std::pow(0.201, 2.0 / 3.0)));
  CHECK_THROWS_AS((void)env.coefficients(0.11, 1e-3), InvalidInput);
  CHECK_THROWS_AS(error_envelope(s, dos, 0.05, n, opt), InvalidInput);
  CHECK(error_envelope(s, dos, 1.0, n, opt).theta() == 1);
  CHECK(error_envelope(s, dos, 1.0, n, opt).delta_gap() == 1.0);
  opt.eps_tilde = 0.1;
  CHECK_THROWS_AS(error_envelope(s, dos, 0.1, n, opt), InvalidInput);

  for (double tau0 : {-1.0, -0.1, 0.0, 0.1, 1.0}) {
    const auto e = error_envelope(s, dos, tau0, n, {});
    const auto [lo, hi] = e.omega_range();
    for (double omega : {lo, 0.5 * lo, 0.0, 0.25 * hi, 0.5 * hi, hi}) {
      double prev = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 100; ++k) {
        const double eta = 1e-3 * std::pow(50.0, k / 99.0);
        const double v = e(omega, eta);
        CHECK(v > 0.0);
        CHECK(v <= prev);
        prev = v;
      }
    }
  }
}
