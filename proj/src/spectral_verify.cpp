#include "qvelab/spectral_verify.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>

namespace qvelab {

namespace {

constexpr std::uint64_t kStreamWeights = 0x3C6EF372FE94F82BULL;
constexpr std::uint64_t kStreamProbes = 0xA54FF53A5F1D36F1ULL;
constexpr double kInf = std::numeric_limits<double>::infinity();

CVector spectral_factors(const RVector& lambda, SpectralPoint z) {
  const Complex zz = z.z();
  CVector d(lambda.size());
  for (Eigen::Index k = 0; k < lambda.size(); ++k) d(k) = 1.0 / (lambda(k) - zz);
  return d;
}

CVector real_times(const RMatrix& a, const CVector& x) {
  const RVector re = a * x.real();
  const RVector im = a * x.imag();
  CVector out(re.size());
  for (Eigen::Index i = 0; i < re.size(); ++i) out(i) = Complex(re(i), im(i));
  return out;
}

RVector gaussian_vector(int n, std::uint64_t seed, std::uint64_t column) {
  const CounterRng rng{seed, kStreamProbes};
  RVector v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal(static_cast<std::uint64_t>(i), column, 0);
  return v;
}

// Composite 10-point Gauss-Legendre.
template <typename F>
double integrate(F&& f, double a, double b, int panels) {
  if (!(b > a)) return 0.0;
  panels = std::clamp(panels, 1, 4000);
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p)
    total += boost::math::quadrature::gauss<double, 10>::integrate(f, a + p * h, a + (p + 1) * h);
  return total;
}

// int_{lo}^{hi} f(eta) d eta on a logarithmic scale.
template <typename F>
double integrate_log(F&& f, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  const double ratio = std::log(hi / lo);
  const int panels = std::max(1, static_cast<int>(std::ceil(ratio / std::log(4.0))));
  return integrate([&](double t) {
    const double eta = lo * std::exp(t);
    return f(eta) * eta;
  }, 0.0, ratio, panels);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<RVector> default_weight_panel(int n, std::uint64_t seed) {
  std::vector<RVector> panel;
  panel.push_back(RVector::Ones(n));
  RVector alt(n);
  for (int i = 0; i < n; ++i) alt(i) = (i % 2 == 0) ? 1.0 : -1.0;
  panel.push_back(alt);
  const CounterRng rng{seed, kStreamWeights};
  RVector rnd(n);
  for (int i = 0; i < n; ++i) rnd(i) = (rng.bits(static_cast<std::uint64_t>(i), 0, 0) >> 63) ? 1.0 : -1.0;
  panel.push_back(rnd);
  return panel;
}

ResolventData resolvent(const MatrixSample& sample, SpectralPoint z, const QveSolution& m,
                        const std::vector<RVector>& weights, const ResolventOptions& options) {
  if (!(z.eta >= 1e-14)) throw InvalidInput("resolvent: eta below 1e-14 is rejected");
  const int n = sample.n();
  if (m.m.size() != n) throw InvalidInput("resolvent: QVE solution size differs from the sample");
  for (const auto& w : weights) {
    if (w.size() != n) throw InvalidInput("resolvent: weight vector has the wrong length");
    if (w.cwiseAbs().maxCoeff() > 1.0) throw InvalidInput("resolvent: weight vector with sup-norm above 1");
  }
  ResolventData out;
  out.z = z;
  const RVector& lambda = sample.eigenvalues();
  const bool need_full = options.full || options.keep_matrix;

  if (sample.is_real()) {
    const RMatrix& u = sample.real_eigenvectors();
    const CVector dk = spectral_factors(sample.eigenvalues(), z);
    if (need_full) {
      const RMatrix gr = (u * dk.real().asDiagonal()) * u.transpose();
      const RMatrix gi = (u * dk.imag().asDiagonal()) * u.transpose();
      out.g.resize(n);
      for (int i = 0; i < n; ++i) out.g(i) = Complex(gr(i, i), gi(i, i));
      if (options.full) {
        const RVector rows = gr.rowwise().squaredNorm() + gi.rowwise().squaredNorm();
        double ward = 0.0, off = 0.0;
        for (int i = 0; i < n; ++i) {
          const double rhs = gi(i, i) / z.eta;
          ward = std::max(ward, std::abs(rows(i) - rhs) / rhs);
        }
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i)
            if (i != j) off = std::max(off, std::hypot(gr(i, j), gi(i, j)));
        out.ward_max_rel = ward;
        out.err_o = off;
      }
      if (options.keep_matrix) {
        CMatrix g(n, n);
        g.real() = gr;
        g.imag() = gi;
        out.matrix = std::move(g);
      }
    } else {
      out.g = real_times(u.array().square().matrix(), dk);
    }
  } else {
    const CMatrix& u = sample.complex_eigenvectors();
    const CVector dk = spectral_factors(lambda, z);
    if (need_full) {
      CMatrix g = (u * dk.asDiagonal()) * u.adjoint();
      out.g = g.diagonal();
      if (options.full) {
        const RVector rows = g.rowwise().squaredNorm();
        double ward = 0.0, off = 0.0;
        for (int i = 0; i < n; ++i) {
          const double rhs = g(i, i).imag() / z.eta;
          ward = std::max(ward, std::abs(rows(i) - rhs) / rhs);
        }
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i)
            if (i != j) off = std::max(off, std::abs(g(i, j)));
        out.ward_max_rel = ward;
        out.err_o = off;
      }
      if (options.keep_matrix) out.matrix = std::move(g);
    } else {
      out.g = real_times(u.cwiseAbs2(), dk);
    }
  }

  const CVector diff = out.g - m.m;
  out.err_d = diff.cwiseAbs().maxCoeff();
  for (const auto& w : weights) out.avg_err.push_back(std::abs(w.cast<Complex>().dot(diff)) / n);
  return out;
}

CMatrix resolvent_direct(const MatrixSample& sample, SpectralPoint z) {
  if (!(z.eta >= 1e-14)) throw InvalidInput("resolvent_direct: eta below 1e-14 is rejected");
  CMatrix a = sample.as_complex();
  a.diagonal().array() -= z.z();
  return a.partialPivLu().inverse();
}

LocalLawBound local_law_bound(double rho, double kappa, int n, double eta) {
  const double ne = n * eta;
  const double tail = std::min(1.0 / std::sqrt(ne), kappa / ne);
  return {std::sqrt(std::max(rho, 0.0) / ne) + 1.0 / ne + tail, tail};
}

LocalLawBound bulk_local_law_bound(int n, double eta) {
  const double ne = n * eta;
  return {1.0 / std::sqrt(ne), 1.0 / ne};
}

// ---------------------------------------------------------------------------

PerturbationVector perturbation_d(const MatrixSample& sample, const ResolventData& res,
                                  const VarianceProfile& profile, const std::vector<int>& cross_check) {
  const int n = sample.n();
  if (profile.n() != n || res.g.size() != n) throw InvalidInput("perturbation_d: dimension mismatch");
  for (int i = 0; i < n; ++i)
    if (res.g(i) == Complex(0.0, 0.0)) throw NumericalFailure("perturbation_d: vanishing resolvent diagonal");
  const Complex z = res.z.z();
  const RMatrix& s = profile.s();
  PerturbationVector out;
  out.z = res.z;
  const CVector sg = real_times(s, res.g);
  out.d.resize(n);
  for (int i = 0; i < n; ++i) out.d(i) = -1.0 / res.g(i) - z - sg(i);
  out.sup_norm = out.d.cwiseAbs().maxCoeff();
  out.lemma_bound = std::sqrt(std::max(res.g.mean().imag(), 0.0) / (n * res.z.eta)) + 1.0 / std::sqrt(n);

  if (cross_check.empty()) return out;
  if (!res.matrix) throw InvalidInput("perturbation_d: the minor route needs the full resolvent");
  const CMatrix& g = *res.matrix;
  const CMatrix h = sample.as_complex();
  const double scale = std::max(out.sup_norm, 1e-300);
  for (int k : cross_check) {
    if (k < 0 || k >= n) throw InvalidInput("perturbation_d: cross-check index out of range");
    const Complex gkk = g(k, k);
    CVector x = h.row(k).transpose();  // x_i = h_ki
    CVector y = h.col(k);              // y_j = h_jk
    x(k) = 0.0;
    y(k) = 0.0;
    const CVector gy = g * y;
    Complex t1 = x.transpose() * gy;
    const Complex xc = x.transpose() * g.col(k);
    const Complex ry = g.row(k) * y;
    t1 -= xc * ry / gkk;
    Complex t2 = 0.0, t3 = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i == k) continue;
      const Complex minor_ii = g(i, i) - g(i, k) * g(k, i) / gkk;
      t1 -= x(i) * y(i) * minor_ii;
      t2 += (std::norm(h(k, i)) - s(k, i)) * minor_ii;
      t3 += s(k, i) * g(i, k) * g(k, i) / gkk;
    }
    const Complex dk = t1 + t2 - t3 - h(k, k) - s(k, k) * gkk;
    out.cross_checked.push_back(k);
    out.max_rel_discrepancy = std::max(out.max_rel_discrepancy, std::abs(dk - out.d(k)) / scale);
  }
  return out;
}

double perturbation_bound(double rho, int n, double eta) {
  return std::sqrt(std::max(rho, 0.0) / (n * eta)) + 1.0 / std::sqrt(n);
}

// ---------------------------------------------------------------------------

CountingReport counting_discrepancy(const std::vector<RVector>& spectra, const DosCurve& dos,
                                    const SupportStructure& support, const std::vector<double>& tau_grid,
                                    const CheckPolicy& policy, double delta) {
  CountingReport rep;
  rep.check.required = 1.0 - policy.alpha;
  for (std::size_t s = 0; s < spectra.size(); ++s) {
    const RVector& ev = spectra[s];
    const int n = static_cast<int>(ev.size());
    std::vector<double> sorted(ev.data(), ev.data() + n);
    std::sort(sorted.begin(), sorted.end());
    for (double tau : tau_grid) {
      CountingRow row;
      row.sample = s;
      row.tau = tau;
      row.count = std::upper_bound(sorted.begin(), sorted.end(), tau) - sorted.begin();
      row.expected = n * dos.cdf(tau);
      row.discrepancy = std::abs(static_cast<double>(row.count) - row.expected);
      const double gap = local_gap_size(support, tau, delta);
      const double denom = std::cbrt(gap) + dos.at(tau);
      const double cap = std::pow(static_cast<double>(n), 0.2);
      row.bound = policy.c * (denom > 0.0 ? std::min(1.0 / denom, cap) : cap);
      row.pass = row.discrepancy <= row.bound;
      ++rep.check.trials;
      if (row.pass) ++rep.check.passed;
      rep.rows.push_back(row);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::string to_string(TauRegion region) {
  switch (region) {
    case TauRegion::bulk: return "bulk";
    case TauRegion::extreme_edge: return "extreme-edge";
    case TauRegion::internal_edge: return "internal-edge";
    case TauRegion::outside: return "outside";
  }
  return "unknown";
}

RigidityPlan plan_rigidity(const DosCurve& dos, const SupportStructure& support, const std::vector<double>& tau_set,
                           int n, double gamma, const CheckPolicy& policy, double delta) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("plan_rigidity: gamma must lie in (0, 1)");
  if (support.intervals.empty()) throw InvalidInput("plan_rigidity: empty support");
  RigidityPlan plan;
  plan.n = n;
  plan.gamma = gamma;
  const auto& iv = support.intervals;
  const std::size_t kk = iv.size();
  const double nd = n;
  const double ng = std::pow(nd, gamma);
  const double outer = std::pow(nd, gamma - 2.0 / 3.0);
  // eps[k], delta[k] for k = 0..K (k indexes the gap after interval k).
  std::vector<double> eps(kk + 1, outer), dlt(kk + 1, outer);
  for (std::size_t k = 1; k < kk; ++k) {
    const double len = iv[k].lo - iv[k - 1].hi;
    eps[k] = ng * std::min(std::pow(nd, -0.6), 1.0 / (std::pow(len, 1.0 / 9.0) * std::pow(nd, 2.0 / 3.0)));
    dlt[k] = ng / (std::cbrt(len) * std::pow(nd, 2.0 / 3.0));
  }

  for (std::size_t k = 0; k <= kk; ++k) {
    GapWindow gw;
    gw.index = k;
    gw.delta = dlt[k];
    gw.outer = (k == 0 || k == kk);
    gw.lo = k == 0 ? -kInf : iv[k - 1].hi + dlt[k];
    gw.hi = k == kk ? kInf : iv[k].lo - dlt[k];
    plan.gaps.push_back(gw);
  }

  for (double tau : tau_set) {
    RigidityTarget t;
    t.tau = tau;
    const double x = nd * dos.cdf(tau);
    const double nearest = std::round(x);
    t.i_tau = static_cast<long>(std::abs(x - nearest) <= 1e-9 * nd ? nearest : std::ceil(x));
    bool placed = false;
    for (std::size_t k = 0; k < kk && !placed; ++k) {
      if (tau >= iv[k].lo + eps[k] && tau <= iv[k].hi - eps[k + 1]) {
        t.region = TauRegion::bulk;
        const double rho = dos.at(tau);
        const double gap = local_gap_size(support, tau, delta);
        const double cap = std::pow(nd, -0.6);
        const double denom = (std::cbrt(gap) + rho) * rho * nd;
        t.bound = policy.c * (denom > 0.0 ? std::min(1.0 / denom, cap) : cap);
        placed = true;
      }
    }
    if (!placed && ((tau > iv.front().lo && tau < iv.front().lo + eps[0]) ||
                    (tau > iv.back().hi - eps[kk] && tau <= iv.back().hi))) {
      t.region = TauRegion::extreme_edge;
      t.bound = policy.c * std::pow(nd, -2.0 / 3.0);
      placed = true;
    }
    for (std::size_t k = 1; k < kk && !placed; ++k) {
      const double beta = iv[k - 1].hi, alpha = iv[k].lo;
      if (tau > beta - eps[k] && tau < alpha + eps[k]) {
        t.region = TauRegion::internal_edge;
        t.allowed = {{beta - 2.0 * eps[k], beta + dlt[k]}, {alpha - dlt[k], alpha + 2.0 * eps[k]}};
        placed = true;
      }
    }
    if (!placed) {
      t.region = TauRegion::outside;
      t.note = "outside the admissible region; skipped";
    } else if (t.i_tau < 1 || t.i_tau > n) {
      t.region = TauRegion::outside;
      t.note = "i(tau) outside 1..N; skipped";
    }
    plan.targets.push_back(t);
  }
  return plan;
}

void rigidity_sample(const RigidityPlan& plan, const RVector& eigenvalues, std::size_t sample_index,
                     RigidityReport& report) {
  if (eigenvalues.size() != plan.n) throw InvalidInput("rigidity_sample: spectrum size differs from the plan");
  std::vector<double> ev(eigenvalues.data(), eigenvalues.data() + eigenvalues.size());
  std::sort(ev.begin(), ev.end());
  for (const auto& t : plan.targets) {
    if (t.region == TauRegion::outside) continue;
    RigidityRecord r;
    r.sample = sample_index;
    r.tau = t.tau;
    r.region = t.region;
    r.i_tau = t.i_tau;
    r.lambda_observed = ev[static_cast<std::size_t>(t.i_tau - 1)];
    r.deviation = std::abs(r.lambda_observed - t.tau);
    r.bound = t.bound;
    if (t.region == TauRegion::internal_edge) {
      r.pass = std::any_of(t.allowed.begin(), t.allowed.end(), [&](const Interval& a) {
        return r.lambda_observed >= a.lo && r.lambda_observed <= a.hi;
      });
    } else {
      r.pass = r.deviation <= r.bound;
    }
    report.records.push_back(r);
  }
  for (const auto& gw : plan.gaps) {
    GapRecord g;
    g.sample = sample_index;
    g.gap = gw.index;
    g.outer = gw.outer;
    if (gw.hi > gw.lo) {
      const auto lo = std::upper_bound(ev.begin(), ev.end(), gw.lo);
      const auto hi = std::lower_bound(ev.begin(), ev.end(), gw.hi);
      g.count = std::max<long>(0, hi - lo);
    }
    report.gap_records.push_back(g);
  }
}

RigidityReport rigidity_check(const std::vector<RVector>& spectra, const RigidityPlan& plan) {
  RigidityReport rep;
  rep.plan = plan;
  for (std::size_t s = 0; s < spectra.size(); ++s) rigidity_sample(plan, spectra[s], s, rep);
  return rep;
}

FractionCheck RigidityReport::fraction(TauRegion region, double required) const {
  FractionCheck f;
  f.required = required;
  for (const auto& r : records) {
    if (r.region != region) continue;
    ++f.trials;
    if (r.pass) ++f.passed;
  }
  return f;
}

std::size_t RigidityReport::empty_gap_samples(bool include_outer) const {
  std::map<std::size_t, bool> empty;
  for (const auto& g : gap_records) {
    auto [it, inserted] = empty.emplace(g.sample, true);
    if (g.count > 0 && (include_outer || !g.outer)) it->second = false;
  }
  return static_cast<std::size_t>(std::count_if(empty.begin(), empty.end(), [](const auto& p) { return p.second; }));
}

std::size_t RigidityReport::samples() const {
  std::set<std::size_t> s;
  for (const auto& g : gap_records) s.insert(g.sample);
  for (const auto& r : records) s.insert(r.sample);
  return s.size();
}

// ---------------------------------------------------------------------------

double delocalization_statistic(const CMatrix& eigenvectors, const CMatrix& probes) {
  const double n = static_cast<double>(eigenvectors.rows());
  double best = eigenvectors.cwiseAbs().maxCoeff();
  if (probes.cols() > 0) best = std::max(best, (probes.adjoint() * eigenvectors).cwiseAbs().maxCoeff());
  return std::sqrt(n) * best;
}

DelocalizationRecord delocalization_sample(const MatrixSample& sample, int random_probes, std::uint64_t probe_seed,
                                           double c_log, std::size_t sample_index) {
  const int n = sample.n();
  RMatrix probes(n, std::max(random_probes, 0));
  for (int c = 0; c < random_probes; ++c) {
    const RVector v = gaussian_vector(n, probe_seed, static_cast<std::uint64_t>(c));
    probes.col(c) = v / v.norm();
  }
  DelocalizationRecord r;
  r.sample = sample_index;
  if (sample.is_real()) {
    const RMatrix& u = sample.real_eigenvectors();
    double best = u.cwiseAbs().maxCoeff();
    if (random_probes > 0) best = std::max(best, (probes.transpose() * u).cwiseAbs().maxCoeff());
    r.max_scaled = std::sqrt(static_cast<double>(n)) * best;
  } else {
    r.max_scaled = delocalization_statistic(sample.complex_eigenvectors(), probes.cast<Complex>());
  }
  r.exceeds = r.max_scaled > c_log * std::log(static_cast<double>(n));
  return r;
}

DelocalizationReport summarize_delocalization(std::vector<DelocalizationRecord> records, int n, double c_log,
                                              double required) {
  DelocalizationReport rep;
  rep.threshold = c_log * std::log(static_cast<double>(n));
  rep.check.required = required;
  for (auto& r : records) {
    r.exceeds = r.max_scaled > rep.threshold;
    ++rep.check.trials;
    if (!r.exceeds) ++rep.check.passed;
  }
  rep.records = std::move(records);
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<ProbePair> random_orthogonal_pairs(int n, int count, std::uint64_t seed) {
  std::vector<ProbePair> pairs;
  for (int c = 0; c < count; ++c) {
    RVector w = gaussian_vector(n, seed, static_cast<std::uint64_t>(2 * c));
    RVector v = gaussian_vector(n, seed, static_cast<std::uint64_t>(2 * c + 1));
    w /= w.norm();
    v -= w.dot(v) * w;
    v /= v.norm();
    pairs.push_back({w.cast<Complex>(), v.cast<Complex>()});
  }
  return pairs;
}

Complex generalized_resolvent_entry(const MatrixSample& sample, SpectralPoint z, const CVector& w, const CVector& v) {
  const CVector dk = spectral_factors(sample.eigenvalues(), z);
  CVector a, b;
  if (sample.is_real()) {
    const RMatrix ut = sample.real_eigenvectors().transpose();
    a = real_times(ut, w);
    b = real_times(ut, v);
  } else {
    const CMatrix& u = sample.complex_eigenvectors();
    a = u.adjoint() * w;
    b = u.adjoint() * v;
  }
  Complex total = 0.0;
  for (Eigen::Index k = 0; k < dk.size(); ++k) total += std::conj(a(k)) * b(k) * dk(k);
  return total;
}

std::vector<AnisotropicRecord> anisotropic_sample(const MatrixSample& sample, const QveSolution& m,
                                                  const std::vector<ProbePair>& pairs, double kappa,
                                                  const CheckPolicy& policy, std::size_t sample_index) {
  const int n = sample.n();
  const SpectralPoint z = m.point;
  const LocalLawBound b = local_law_bound(m.density(), kappa, n, z.eta);
  std::vector<AnisotropicRecord> out;
  for (const auto& p : pairs) {
    if (p.w.size() != n || p.v.size() != n) throw InvalidInput("anisotropic_sample: probe length mismatch");
    if (std::abs(p.w.norm() - 1.0) > 1e-10 || std::abs(p.v.norm() - 1.0) > 1e-10)
      throw InvalidInput("anisotropic_sample: probes must be unit vectors");
    AnisotropicRecord r;
    r.sample = sample_index;
    r.z = z;
    Complex det = 0.0;
    for (int i = 0; i < n; ++i) det += m.m(i) * std::conj(p.w(i)) * p.v(i);
    r.error = std::abs(generalized_resolvent_entry(sample, z, p.w, p.v) - det);
    r.bound = policy.c * b.entrywise;
    r.pass = r.error <= r.bound;
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------

double BumpObservable::operator()(double s) const {
  const double u = (s - center) / width;
  if (std::abs(u) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

std::vector<BumpObservable> default_bumps() { return {{0.5, 0.5}, {1.0, 0.5}, {1.5, 0.5}}; }

double BumpComparison::pooled_se() const { return std::hypot(se_model, se_reference); }

double BumpComparison::z_score() const {
  const double se = pooled_se();
  return se > 0.0 ? std::abs(mean_model - mean_reference) / se : kInf;
}

double semicircle_density(double x) { return std::abs(x) >= 2.0 ? 0.0 : std::sqrt(4.0 - x * x) / (2.0 * M_PI); }

std::vector<double> rescaled_gaps(const RVector& eigenvalues, const std::function<double(double)>& rho,
                                  const Interval& window, double min_rho) {
  std::vector<double> ev(eigenvalues.data(), eigenvalues.data() + eigenvalues.size());
  std::sort(ev.begin(), ev.end());
  const double n = static_cast<double>(ev.size());
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    if (ev[i] < window.lo || ev[i] > window.hi) continue;
    const double r = rho(ev[i]);
    if (r < min_rho) continue;
    out.push_back(n * r * (ev[i + 1] - ev[i]));
  }
  return out;
}

namespace {

double two_sample_ks(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return 1.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

struct Pool {
  std::vector<double> all;
  std::vector<std::vector<double>> batches;
};

std::pair<double, double> batch_mean(const Pool& pool, const BumpObservable& f) {
  double total = 0.0;
  std::vector<double> means;
  for (const auto& b : pool.batches) {
    if (b.empty()) continue;
    double s = 0.0;
    for (double x : b) s += f(x);
    total += s;
    means.push_back(s / static_cast<double>(b.size()));
  }
  const double mean = pool.all.empty() ? 0.0 : total / static_cast<double>(pool.all.size());
  if (means.size() < 2) return {mean, kInf};
  double mm = 0.0;
  for (double x : means) mm += x;
  mm /= static_cast<double>(means.size());
  double var = 0.0;
  for (double x : means) var += (x - mm) * (x - mm);
  var /= static_cast<double>(means.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(means.size()))};
}

}  // namespace

double ks_distance(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> x = a, y = b;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  return two_sample_ks(x, y);
}

GapStatistics gap_statistics(const std::vector<RVector>& model_spectra, const std::vector<RVector>& reference_spectra,
                             const DosCurve& dos, const GapStatisticsOptions& options) {
  const Interval ref_window = options.reference_window.value_or(options.window);
  if (!(options.window.hi > options.window.lo) || !(ref_window.hi > ref_window.lo))
    throw InvalidInput("gap_statistics: empty window");
  Pool model, reference;
  for (const auto& ev : model_spectra) {
    model.batches.push_back(rescaled_gaps(ev, [&](double t) { return dos.at(t); }, options.window, options.min_rho));
    model.all.insert(model.all.end(), model.batches.back().begin(), model.batches.back().end());
  }
  for (const auto& ev : reference_spectra) {
    reference.batches.push_back(rescaled_gaps(ev, semicircle_density, ref_window, options.min_rho));
    reference.all.insert(reference.all.end(), reference.batches.back().begin(), reference.batches.back().end());
  }
  GapStatistics out;
  out.model_samples = model_spectra.size();
  out.reference_samples = reference_spectra.size();
  for (const auto& f : default_bumps()) {
    BumpComparison c;
    c.bump = f;
    std::tie(c.mean_model, c.se_model) = batch_mean(model, f);
    std::tie(c.mean_reference, c.se_reference) = batch_mean(reference, f);
    out.bumps.push_back(c);
  }
  out.model_gaps = std::move(model.all);
  out.reference_gaps = std::move(reference.all);
  std::sort(out.model_gaps.begin(), out.model_gaps.end());
  std::sort(out.reference_gaps.begin(), out.reference_gaps.end());
  out.ks_distance = two_sample_ks(out.model_gaps, out.reference_gaps);
  if (out.model_gaps.size() < options.min_pool || out.reference_gaps.size() < options.min_pool) {
    out.inconclusive = true;
    out.note = "pool smaller than the configured minimum";
  }
  return out;
}

void GapStatistics::cdf_table(std::ostream& os, std::size_t points) const {
  os << "gap,cdf_model,cdf_reference\n";
  if (model_gaps.empty() && reference_gaps.empty()) return;
  double hi = 0.0;
  if (!model_gaps.empty()) hi = std::max(hi, model_gaps.back());
  if (!reference_gaps.empty()) hi = std::max(hi, reference_gaps.back());
  const auto cdf = [](const std::vector<double>& v, double x) {
    if (v.empty()) return 0.0;
    return static_cast<double>(std::upper_bound(v.begin(), v.end(), x) - v.begin()) / static_cast<double>(v.size());
  };
  points = std::max<std::size_t>(points, 2);
  for (std::size_t k = 0; k < points; ++k) {
    const double x = hi * static_cast<double>(k) / static_cast<double>(points - 1);
    os << x << ',' << cdf(model_gaps, x) << ',' << cdf(reference_gaps, x) << '\n';
  }
}

// ---------------------------------------------------------------------------

MeasureDistance stieltjes_measure_distance(const RVector& eigenvalues,
                                           const std::function<Complex(Complex)>& m_nu1,
                                           const std::function<double(double, double)>& nu1_mass,
                                           const Interval& interval, double eta1, double eta2, double eps,
                                           int panels_per_scale) {
  const double t1 = interval.lo, t2 = interval.hi;
  if (!(t1 < t2)) throw InvalidInput("stieltjes_measure_distance: interval endpoints reversed");
  for (double v : {eta1, eta2, eps})
    if (!(v > 0.0 && v <= 1.0)) throw InvalidInput("stieltjes_measure_distance: eta1, eta2, eps must lie in (0, 1]");
  if (eps < std::max(eta1, eta2)) throw InvalidInput("stieltjes_measure_distance: eps below max(eta1, eta2)");
  const int n = static_cast<int>(eigenvalues.size());
  if (n == 0) throw InvalidInput("stieltjes_measure_distance: empty spectrum");
  panels_per_scale = std::max(panels_per_scale, 1);

  const auto m2 = [&](Complex z) {
    Complex s = 0.0;
    for (int i = 0; i < n; ++i) s += 1.0 / (eigenvalues(i) - z);
    return s / static_cast<double>(n);
  };
  const auto diff = [&](double w, double eta) {
    const Complex z(w, eta);
    return std::abs(m_nu1(z) - m2(z));
  };

  MeasureDistance out;
  long inside = 0;
  for (int i = 0; i < n; ++i)
    if (eigenvalues(i) >= t1 && eigenvalues(i) <= t2) ++inside;
  out.left = std::abs(nu1_mass(t1, t2) - static_cast<double>(inside) / n);
  out.boundary = nu1_mass(t1 - eta1, t1) + nu1_mass(t2, t2 + eta2);

  const auto side = [&](double lo, double eta) {
    return integrate([&](double w) {
      const Complex z(w, eta);
      const Complex a = m_nu1(z);
      return a.imag() + std::abs(a - m2(z)) + integrate_log([&](double e) { return diff(w, e); }, eta, 2.0 * eps) / eta;
    }, lo, lo + eta, panels_per_scale);
  };
  out.j1 = side(t1 - eta1, eta1);
  out.j2 = side(t2, eta2);
  const double a = t1 - eta1, b = t2 + eta2;
  const int panels = panels_per_scale * static_cast<int>(std::ceil((b - a) / eps));
  out.j3 = integrate([&](double w) {
    return integrate([&](double e) { return diff(w, e); }, eps, 2.0 * eps, 1);
  }, a, b, panels) / eps;
  return out;
}

MeasureDistance stieltjes_measure_distance(const RVector& eigenvalues, const VarianceProfile& profile,
                                           const DosCurve& dos, const Interval& interval, double eta1, double eta2,
                                           double eps, int panels_per_scale, const SolverConfig& config) {
  std::map<std::pair<double, double>, Complex> cache;
  const auto m1 = [&](Complex z) {
    const auto key = std::make_pair(z.real(), z.imag());
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    const Complex v = solve_robust(profile, SpectralPoint{z.real(), z.imag()}, config).average();
    cache.emplace(key, v);
    return v;
  };
  const double total = dos.integral();
  const auto mass = [&](double lo, double hi) { return (dos.mass_below(hi) - dos.mass_below(lo)) / total; };
  return stieltjes_measure_distance(eigenvalues, m1, mass, interval, eta1, eta2, eps, panels_per_scale);
}

}  // namespace qvelab
