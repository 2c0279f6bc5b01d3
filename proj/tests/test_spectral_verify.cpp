#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "qvelab/spectral_verify.hpp"

using namespace qvelab;

namespace {

QveSolution constant_solution(int n, SpectralPoint z, Complex value) {
  QveSolution s;
  s.point = z;
  s.m = CVector::Constant(n, value);
  s.converged = true;
  return s;
}

// Exact semicircle distribution function on [-2, 2].
double semicircle_cdf(double x) {
  if (x <= -2.0) return 0.0;
  if (x >= 2.0) return 1.0;
  return 0.5 + x * std::sqrt(4.0 - x * x) / (4.0 * M_PI) + std::asin(x / 2.0) / M_PI;
}

}  // namespace

TEST_CASE("resolvent of diag(1, -1) at z = i") {
  RMatrix h(2, 2);
  h << 1.0, 0.0, 0.0, -1.0;
  const MatrixSample s(h, 0, EntryLaw::gaussian);
  const SpectralPoint z{0.0, 1.0};
  const auto m = constant_solution(2, z, Complex(0.0, 1.0));
  const auto r = resolvent(s, z, m, {RVector::Ones(2)}, {true, true});
  CHECK(std::abs(r.g(0) - Complex(0.5, 0.5)) < 1e-15);
  CHECK(std::abs(r.g(1) - Complex(-0.5, 0.5)) < 1e-15);
  CHECK(*r.err_o < 1e-15);
  CHECK(*r.ward_max_rel < 1e-15);
  // g - m = (0.5 - 0.5i, -0.5 - 0.5i): max modulus 1/sqrt(2), average -0.5i.
  CHECK(r.err_d == doctest::Approx(std::sqrt(0.5)));
  CHECK(r.avg_err[0] == doctest::Approx(0.5));
}

TEST_CASE("resolvent input checks") {
  const auto s = sample_gaussian_reference(10, SymmetryClass::real_symmetric, 1);
  const auto m = constant_solution(10, {0.0, 1.0}, Complex(0.0, 1.0));
  CHECK_THROWS_AS((void)resolvent(s, {0.0, 1e-15}, m, {}), InvalidInput);
  CHECK_THROWS_AS((void)resolvent(s, {0.0, 1.0}, constant_solution(9, {0.0, 1.0}, 1.0), {}), InvalidInput);
  CHECK_THROWS_AS((void)resolvent(s, {0.0, 1.0}, m, {RVector::Constant(10, 1.5)}), InvalidInput);
  CHECK_THROWS_AS((void)resolvent_direct(s, {0.0, 0.0}), InvalidInput);
}

TEST_CASE("spectral and direct resolvents agree") {
  const auto p = presets::gap_profile(150);
  for (auto cls : {SymmetryClass::real_symmetric, SymmetryClass::complex_hermitian}) {
    const auto s = sample(p, cls, EntryLaw::gaussian, 4);
    for (SpectralPoint z : {SpectralPoint{0.1, 0.01}, SpectralPoint{-1.2, 0.5}, SpectralPoint{0.4, 1e-4}}) {
      const auto m = constant_solution(150, z, 0.0);
      const auto r = resolvent(s, z, m, {}, {true, true});
      const CMatrix direct = resolvent_direct(s, z);
      const double scale = direct.cwiseAbs().maxCoeff();
      CHECK((*r.matrix - direct).cwiseAbs().maxCoeff() / scale < 1e-8);
      CHECK(*r.ward_max_rel < 1e-10);
      const auto diag_only = resolvent(s, z, m, {}, {false, false});
      CHECK((diag_only.g - direct.diagonal()).cwiseAbs().maxCoeff() / scale < 1e-8);
      CHECK_FALSE(diag_only.err_o.has_value());
      CHECK_FALSE(diag_only.ward_max_rel.has_value());
    }
  }
}

TEST_CASE("weight panel") {
  const auto w = default_weight_panel(7, 3);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == RVector::Ones(7));
  CHECK(w[1](0) == 1.0);
  CHECK(w[1](1) == -1.0);
  CHECK(w[2].cwiseAbs() == RVector::Ones(7));
  CHECK(default_weight_panel(7, 3)[2] == w[2]);
}

TEST_CASE("local law bounds") {
  const auto b = local_law_bound(0.3, 2.0, 1000, 0.01);
  // N eta = 10: sqrt(0.03) + 0.1 + min(1/sqrt(10), 0.2).
  CHECK(b.entrywise == doctest::Approx(std::sqrt(0.03) + 0.1 + 0.2));
  CHECK(b.averaged == doctest::Approx(0.2));
  const auto c = local_law_bound(0.3, 20.0, 1000, 0.01);
  CHECK(c.averaged == doctest::Approx(1.0 / std::sqrt(10.0)));
  const auto bulk = bulk_local_law_bound(1000, 0.01);
  CHECK(bulk.entrywise == doctest::Approx(1.0 / std::sqrt(10.0)));
  CHECK(bulk.averaged == doctest::Approx(0.1));
  CHECK(perturbation_bound(0.25, 100, 0.04) == doctest::Approx(0.25 + 0.1));
}

TEST_CASE("perturbation vector of the zero matrix") {
  const auto p = presets::gap_profile(20);
  const MatrixSample zero(RMatrix(RMatrix::Zero(20, 20)), 0, EntryLaw::gaussian);
  const SpectralPoint z{0.0, 1.0};
  const auto r = resolvent(zero, z, constant_solution(20, z, 0.0), {}, {true, true});
  std::vector<int> all(20);
  for (int k = 0; k < 20; ++k) all[static_cast<std::size_t>(k)] = k;
  const auto d = perturbation_d(zero, r, p, all);
  for (int i = 0; i < 20; ++i) {
    const double row = p.s().row(i).sum();
    CHECK(std::abs(d.d(i) - Complex(0.0, -row)) < 1e-14);
  }
  CHECK(d.max_rel_discrepancy < 1e-12);
  CHECK(d.cross_checked.size() == 20);
}

TEST_CASE("both routes to d agree") {
  const auto sc = presets::semicircle(50);
  const auto goe = sample_gaussian_reference(50, SymmetryClass::real_symmetric, 12);
  const SpectralPoint z{0.3, 0.1};
  std::vector<int> all(50);
  for (int k = 0; k < 50; ++k) all[static_cast<std::size_t>(k)] = k;
  const auto r = resolvent(goe, z, constant_solution(50, z, 0.0), {}, {true, true});
  const auto d = perturbation_d(goe, r, sc, all);
  CHECK(d.max_rel_discrepancy < 1e-9);
  CHECK(d.sup_norm > 0.0);

  const auto gp = presets::gap_profile(50);
  const auto herm = sample(gp, SymmetryClass::complex_hermitian, EntryLaw::bounded_uniform, 3);
  const auto rh = resolvent(herm, {0.9, 0.05}, constant_solution(50, {0.9, 0.05}, 0.0), {}, {true, true});
  CHECK(perturbation_d(herm, rh, gp, all).max_rel_discrepancy < 1e-9);

  const auto no_matrix = resolvent(goe, z, constant_solution(50, z, 0.0), {}, {true, false});
  CHECK_THROWS_AS((void)perturbation_d(goe, no_matrix, sc, {0}), InvalidInput);
}

TEST_CASE("counting discrepancy") {
  const auto p = presets::semicircle(400);
  const auto dos = density_of_states(p, uniform_grid(-2.5, 2.5, 1001), 1e-6, true);
  const auto sup = detect_support(dos);
  std::vector<RVector> spectra;
  for (std::uint64_t s = 0; s < 3; ++s)
    spectra.push_back(sample_gaussian_reference(400, SymmetryClass::real_symmetric, s).eigenvalues());
  const auto rep = counting_discrepancy(spectra, dos, sup, {-10.0, -1.0, 0.0, 0.5, 10.0});
  for (const auto& row : rep.rows) {
    if (row.tau == 10.0) {
      CHECK(row.count == 400);
      CHECK(row.discrepancy == 0.0);
    }
    if (row.tau == -10.0) CHECK(row.discrepancy == 0.0);
    if (row.tau == 0.0) CHECK(row.expected == doctest::Approx(200.0).epsilon(1e-6));
    // N^{1/5} cap with C = 10 outside the support.
    if (row.tau == 10.0) CHECK(row.bound == doctest::Approx(10.0 * 1.0 / (1.0 + 0.0)));
  }
  CHECK(rep.check.ok());
}

TEST_CASE("rigidity plan") {
  SUBCASE("index at the symmetric center") {
    const auto p = presets::semicircle(1000);
    const auto dos = density_of_states(p, uniform_grid(-2.5, 2.5, 2001), 1e-6, true);
    const auto sup = detect_support(dos);
    const auto plan = plan_rigidity(dos, sup, {0.0, 1.0, 1.999, 2.0, 3.0}, 1000, 0.1);
    CHECK(plan.targets[0].i_tau == 500);
    CHECK(plan.targets[0].region == TauRegion::bulk);
    // Bulk bound: 10 * min{1/(rho^2 N), N^{-3/5}} with rho(0) = 1/pi.
    const double rho0 = 1.0 / M_PI;
    CHECK(plan.targets[0].bound ==
          doctest::Approx(10.0 * std::min(1.0 / (rho0 * rho0 * 1000), std::pow(1000.0, -0.6))).epsilon(1e-3));
    CHECK(plan.targets[1].i_tau == static_cast<long>(std::ceil(1000 * semicircle_cdf(1.0) - 1e-6)));
    CHECK(plan.targets[2].region == TauRegion::extreme_edge);
    CHECK(plan.targets[2].bound == doctest::Approx(10.0 * std::pow(1000.0, -2.0 / 3.0)));
    CHECK(plan.targets[4].region == TauRegion::outside);
    REQUIRE(plan.gaps.size() == 2);
    CHECK(plan.gaps[0].outer);
    CHECK(plan.gaps[1].lo == doctest::Approx(sup.intervals[0].hi + std::pow(1000.0, 0.1 - 2.0 / 3.0)));
  }
  SUBCASE("gap widths on the gap profile") {
    const int n = 4000;
    const auto p = presets::gap_profile(n);
    const auto dos = density_of_states(p, uniform_grid(-2.2, 2.2, 4401), 1e-6, true);
    const auto sup = refine_edges(p, detect_support(dos));
    REQUIRE(sup.intervals.size() == 3);
    const auto plan = plan_rigidity(dos, sup, {}, n, 0.1);
    REQUIRE(plan.gaps.size() == 4);
    const double len = sup.intervals[1].lo - sup.intervals[0].hi;
    const double expected = std::pow(n, 0.1) / (std::cbrt(len) * std::pow(n, 2.0 / 3.0));
    CHECK(plan.gaps[1].delta == doctest::Approx(expected));
    CHECK_FALSE(plan.gaps[1].outer);
    CHECK(plan.gaps[3].outer);
    // Internal edge target near the first gap.
    const auto edge = plan_rigidity(dos, sup, {sup.intervals[0].hi - 1e-4}, n, 0.1);
    CHECK(edge.targets[0].region == TauRegion::internal_edge);
    CHECK(edge.targets[0].allowed.size() == 2);
  }
}

TEST_CASE("rigidity records and gap counts") {
  RigidityPlan plan;
  plan.n = 4;
  plan.targets.push_back({0.0, TauRegion::bulk, 2, 0.1, {}, ""});
  plan.targets.push_back({5.0, TauRegion::outside, 0, 0.0, {}, "skip"});
  plan.gaps.push_back({0, -std::numeric_limits<double>::infinity(), -2.0, 0.0, true});
  plan.gaps.push_back({1, 0.5, 0.9, 0.0, false});
  RVector ev(4);
  ev << -1.0, 0.05, 0.7, 1.5;
  RVector ev2(4);
  ev2 << -3.0, -0.2, 1.0, 1.5;
  const auto rep = rigidity_check({ev, ev2}, plan);
  REQUIRE(rep.records.size() == 2);
  CHECK(rep.records[0].lambda_observed == 0.05);
  CHECK(rep.records[0].pass);
  CHECK_FALSE(rep.records[1].pass);
  CHECK(rep.fraction(TauRegion::bulk, 0.5).fraction() == 0.5);
  // Sample 0 has 0.7 inside (0.5, 0.9); sample 1 has -3 below -2.
  CHECK(rep.empty_gap_samples(false) == 1);
  CHECK(rep.empty_gap_samples(true) == 0);
  CHECK(rep.samples() == 2);
}

TEST_CASE("delocalization and its negative control") {
  const int n = 300;
  const MatrixSample diag(RMatrix(RVector::LinSpaced(n, -1.0, 1.0).asDiagonal()), 0, EntryLaw::gaussian);
  const auto control = delocalization_sample(diag, 5, 1, 3.0);
  CHECK(control.max_scaled == doctest::Approx(std::sqrt(static_cast<double>(n))));
  CHECK(control.exceeds);
  const auto goe = sample_gaussian_reference(n, SymmetryClass::real_symmetric, 8);
  const auto rec = delocalization_sample(goe, 5, 1, 3.0);
  CHECK_FALSE(rec.exceeds);
  const auto gue = sample_gaussian_reference(n, SymmetryClass::complex_hermitian, 8);
  CHECK_FALSE(delocalization_sample(gue, 5, 1, 3.0).exceeds);
  // Probing with the eigenvectors themselves gives inner product 1.
  const CMatrix u = goe.eigenvectors();
  CHECK(delocalization_statistic(u, u.leftCols(3)) == doctest::Approx(std::sqrt(static_cast<double>(n))));
  const auto rep = summarize_delocalization({control, rec}, n, 3.0, 0.99);
  CHECK(rep.check.passed == 1);
  CHECK(rep.threshold == doctest::Approx(3.0 * std::log(300.0)));
}

TEST_CASE("anisotropic probes") {
  const int n = 120;
  const auto p = presets::gap_profile(n);
  const auto s = sample(p, SymmetryClass::complex_hermitian, EntryLaw::gaussian, 5);
  const SpectralPoint z{0.8, 0.05};
  const CMatrix g = resolvent_direct(s, z);
  const auto pairs = random_orthogonal_pairs(n, 4, 9);
  for (const auto& pr : pairs) {
    CHECK(std::abs(pr.w.norm() - 1.0) < 1e-12);
    CHECK(std::abs(pr.w.dot(pr.v)) < 1e-12);
    const Complex direct = pr.w.dot(g * pr.v);
    CHECK(std::abs(generalized_resolvent_entry(s, z, pr.w, pr.v) - direct) < 1e-9);
  }
  // Basis probe reduces to |G_kk - m_k|.
  const auto m = solve_robust(p, z, {});
  CVector e = CVector::Zero(n);
  e(7) = 1.0;
  const auto rec = anisotropic_sample(s, m, {{e, e}}, 1.0);
  CHECK(rec[0].error == doctest::Approx(std::abs(g(7, 7) - m.m(7))).epsilon(1e-9));
  const auto lb = local_law_bound(m.density(), 1.0, n, z.eta);
  CHECK(rec[0].bound == doctest::Approx(10.0 * lb.entrywise));
  CHECK_THROWS_AS((void)anisotropic_sample(s, m, {{2.0 * e, e}}, 1.0), InvalidInput);
}

TEST_CASE("two-sample KS distance") {
  CHECK(ks_distance({1.0, 2.0, 3.0}, {2.5}) == doctest::Approx(2.0 / 3.0));
  CHECK(ks_distance({2.5}, {1.0, 2.0, 3.0}) == doctest::Approx(2.0 / 3.0));
  std::vector<double> a{0.3, 1.2, 0.7, 2.2, 0.9};
  CHECK(ks_distance(a, a) == 0.0);
  std::vector<double> shuffled{2.2, 0.9, 0.3, 0.7, 1.2};
  CHECK(ks_distance(a, shuffled) == 0.0);
  CHECK(ks_distance({0.0, 0.0, 1.0}, {0.0, 1.0, 1.0}) == doctest::Approx(1.0 / 3.0));
  CHECK(ks_distance({1.0}, {2.0}) == 1.0);
}

TEST_CASE("bumps and semicircle density") {
  for (const auto& f : default_bumps()) {
    CHECK(f(f.center) == doctest::Approx(1.0));
    CHECK(f(f.center + f.width) == 0.0);
    CHECK(f(f.center - 2.0 * f.width) == 0.0);
  }
  CHECK(semicircle_density(0.0) == doctest::Approx(1.0 / M_PI));
  CHECK(semicircle_density(2.5) == 0.0);
}

TEST_CASE("rescaled GOE gaps have unit mean") {
  double total = 0.0;
  std::size_t count = 0;
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto ev = sample_gaussian_reference(500, SymmetryClass::real_symmetric, s).eigenvalues();
    const auto gaps = rescaled_gaps(ev, semicircle_density, {-1.0, 1.0}, 0.05);
    for (double g : gaps) total += g;
    count += gaps.size();
  }
  CHECK(count > 2000);
  CHECK(total / static_cast<double>(count) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("gap statistics of identical pools") {
  const auto p = presets::semicircle(300);
  const auto dos = density_of_states(p, uniform_grid(-2.5, 2.5, 1001), 1e-6, true);
  std::vector<RVector> spectra;
  for (std::uint64_t s = 0; s < 4; ++s)
    spectra.push_back(sample_gaussian_reference(300, SymmetryClass::real_symmetric, s).eigenvalues());
  GapStatisticsOptions opt;
  opt.window = {-1.0, 1.0};
  opt.min_pool = 100;
  const auto st = gap_statistics(spectra, spectra, dos, opt);
  CHECK_FALSE(st.inconclusive);
  // Same spectra; the DOS curve and the closed-form semicircle differ only
  // by discretization, so the pools nearly coincide.
  CHECK(st.ks_distance < 0.01);
  for (const auto& b : st.bumps) CHECK(b.z_score() < 1.0);
  std::ostringstream os;
  st.cdf_table(os, 5);
  CHECK(os.str().rfind("gap,cdf_model,cdf_reference\n", 0) == 0);
  opt.min_pool = 1000000;
  CHECK(gap_statistics(spectra, spectra, dos, opt).inconclusive);
}

TEST_CASE("measure distance bound with identical measures") {
  const int n = 1000;
  // nu2: atoms at the semicircle quantiles.
  RVector atoms(n);
  for (int i = 0; i < n; ++i) {
    const double u = (i + 0.5) / n;
    double lo = -2.0, hi = 2.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (semicircle_cdf(mid) < u ? lo : hi) = mid;
    }
    atoms(i) = 0.5 * (lo + hi);
  }
  const auto m1 = [](Complex z) { return oracle::m_sc(z); };
  const auto mass = [](double a, double b) { return semicircle_cdf(b) - semicircle_cdf(a); };
  const double eta = 0.03;
  const auto md = stieltjes_measure_distance(atoms, m1, mass, {-0.7, 0.4}, eta, eta, eta);
  CHECK(md.left <= 1.0 / n);
  CHECK(md.right() >= md.left);
  // Boundary masses are about 2 eta rho.
  CHECK(md.boundary == doctest::Approx(mass(-0.7 - eta, -0.7) + mass(0.4, 0.4 + eta)));
  CHECK(md.j1 > 0.0);
  const auto coarse = stieltjes_measure_distance(atoms, m1, mass, {-1.5, 1.5}, 1.0, 1.0, 1.0);
  CHECK(std::isfinite(coarse.right()));
  CHECK(coarse.right() < 10.0);
  CHECK_THROWS_AS((void)stieltjes_measure_distance(atoms, m1, mass, {0.4, -0.7}, eta, eta, eta), InvalidInput);
  CHECK_THROWS_AS((void)stieltjes_measure_distance(atoms, m1, mass, {-0.7, 0.4}, eta, eta, eta / 2), InvalidInput);
  CHECK_THROWS_AS((void)stieltjes_measure_distance(atoms, m1, mass, {-0.7, 0.4}, 2.0, eta, 2.0), InvalidInput);
}

TEST_CASE("measure distance quadrature against a closed form") {
  // One atom at 0 against itself shifted: m_diff is explicit, and J3 for
  // nu1 = delta_0, nu2 = delta_0 vanishes identically.
  RVector one(1);
  one << 0.0;
  const auto m_atom = [](Complex z) { return 1.0 / (0.0 - z); };
  const auto mass = [](double a, double b) { return (a <= 0.0 && 0.0 <= b) ? 1.0 : 0.0; };
  const auto md = stieltjes_measure_distance(one, m_atom, mass, {1.0, 2.0}, 0.5, 0.5, 0.5);
  CHECK(md.j3 < 1e-14);
  CHECK(md.left == 0.0);
  // J1 = int_{0.5}^{1} Im 1/(-w - 0.5i) dw = int 0.5/(w^2 + 0.25) dw = atan(2) - atan(1).
  CHECK(md.j1 == doctest::Approx(std::atan(2.0) - std::atan(1.0)).epsilon(1e-12));
}
