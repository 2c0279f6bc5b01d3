#include "qvelab/dos_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace qvelab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_complete(const DosCurve& dos, const char* who) {
  if (dos.size() < 2) throw InvalidInput(std::string(who) + ": curve needs at least two grid points");
  if (!dos.complete()) throw InvalidInput(std::string(who) + ": curve has unresolved grid points");
}

// Index k with tau[k] <= t < tau[k+1]; assumes tau.front() <= t < tau.back().
std::size_t segment(const std::vector<double>& tau, double t) {
  const auto it = std::upper_bound(tau.begin(), tau.end(), t);
  return static_cast<std::size_t>(std::distance(tau.begin(), it)) - 1;
}

double solve_density(const VarianceProfile& profile, SpectralPoint z, std::optional<CVector>& warm,
                     const SolverConfig& config) {
  QveSolution sol = solve_point(profile, z, config, warm);
  if (!sol.converged) sol = solve_robust(profile, z, config);
  warm = sol.m;
  return sol.density();
}

}  // namespace

double DosCurve::max_spacing() const {
  double h = 0.0;
  for (std::size_t k = 1; k < tau.size(); ++k) h = std::max(h, tau[k] - tau[k - 1]);
  return h;
}

double DosCurve::min_spacing() const {
  double h = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < tau.size(); ++k) h = std::min(h, tau[k] - tau[k - 1]);
  return h;
}

double DosCurve::integral() const {
  require_complete(*this, "integral");
  double s = 0.0;
  for (std::size_t k = 1; k < tau.size(); ++k) s += 0.5 * (rho[k] + rho[k - 1]) * (tau[k] - tau[k - 1]);
  return s;
}

double DosCurve::at(double t) const {
  if (tau.empty() || t < tau.front() || t > tau.back()) return 0.0;
  if (t == tau.back()) return rho.back();
  const std::size_t k = segment(tau, t);
  const double w = (t - tau[k]) / (tau[k + 1] - tau[k]);
  return (1.0 - w) * rho[k] + w * rho[k + 1];
}

double DosCurve::mass_below(double t) const {
  require_complete(*this, "mass_below");
  if (t <= tau.front()) return 0.0;
  if (t >= tau.back()) return integral();
  const std::size_t k = segment(tau, t);
  double s = 0.0;
  for (std::size_t j = 1; j <= k; ++j) s += 0.5 * (rho[j] + rho[j - 1]) * (tau[j] - tau[j - 1]);
  return s + 0.5 * (rho[k] + at(t)) * (t - tau[k]);
}

double DosCurve::cdf(double t) const {
  const double total = integral();
  if (!(total > 0.0)) throw InvalidInput("cdf: curve has zero mass");
  if (t >= tau.back()) return 1.0;
  return std::min(1.0, mass_below(t) / total);
}

double DosCurve::quantile(double u) const {
  require_complete(*this, "quantile");
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidInput("quantile: level must lie in [0, 1]");
  const double target = u * integral();
  double acc = 0.0;
  for (std::size_t k = 1; k < tau.size(); ++k) {
    const double h = tau[k] - tau[k - 1];
    const double seg = 0.5 * (rho[k] + rho[k - 1]) * h;
    if (acc + seg >= target && seg > 0.0) {
      // Mass on [tau_{k-1}, tau_{k-1} + x] is r0 x + slope x^2 / 2.
      const double need = target - acc;
      const double r0 = rho[k - 1];
      const double slope = (rho[k] - rho[k - 1]) / h;
      double x;
      if (std::abs(slope) < 1e-300) {
        x = need / r0;
      } else {
        const double disc = std::max(0.0, r0 * r0 + 2.0 * slope * need);
        x = 2.0 * need / (r0 + std::sqrt(disc));
      }
      return tau[k - 1] + std::clamp(x, 0.0, h);
    }
    acc += seg;
  }
  return tau.back();
}

void DosCurve::to_csv(std::ostream& os) const {
  os << "tau,rho\n";
  os.precision(17);
  for (std::size_t k = 0; k < tau.size(); ++k) os << tau[k] << ',' << rho[k] << '\n';
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  if (points < 2 || !(hi > lo)) throw InvalidInput("uniform_grid: need hi > lo and at least two points");
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k)
    g[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  return g;
}

DosCurve density_of_states(const VarianceProfile& profile, const std::vector<double>& tau_grid, double eta,
                           bool extrapolate, const SolverConfig& config) {
  if (!(eta > 0.0)) throw InvalidInput("density_of_states: eta must be positive");
  if (tau_grid.size() < 2) throw InvalidInput("density_of_states: grid needs at least two points");
  if (!std::is_sorted(tau_grid.begin(), tau_grid.end()) ||
      std::adjacent_find(tau_grid.begin(), tau_grid.end()) != tau_grid.end())
    throw InvalidInput("density_of_states: grid must be strictly increasing");

  DosCurve out;
  out.tau = tau_grid;
  out.rho.resize(tau_grid.size());
  out.eta_used = extrapolate ? 0.0 : eta;
  out.eta_solved = eta;
  std::optional<CVector> warm, warm_half;
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    try {
      const double r = solve_density(profile, {tau_grid[k], eta}, warm, config);
      if (extrapolate) {
        const double r_half = solve_density(profile, {tau_grid[k], 0.5 * eta}, warm_half, config);
        out.rho[k] = std::max(0.0, 2.0 * r_half - r);
      } else {
        out.rho[k] = r;
      }
    } catch (const NumericalFailure&) {
      out.rho[k] = kNaN;
      out.holes.push_back(k);
      warm.reset();
      warm_half.reset();
    }
  }
  return out;
}

double harmonic_extension(const DosCurve& dos, SpectralPoint z) {
  require_complete(dos, "harmonic_extension");
  if (!(z.eta > 0.0)) throw InvalidInput("harmonic_extension: eta must be positive");
  if (dos.max_spacing() > z.eta)
    throw InvalidInput("harmonic_extension: grid spacing " + std::to_string(dos.max_spacing()) +
                       " is coarser than eta = " + std::to_string(z.eta));
  const double eta = z.eta;
  double total = 0.0;
  for (std::size_t k = 1; k < dos.size(); ++k) {
    const double ua = (dos.tau[k - 1] - z.tau) / eta;
    const double ub = (dos.tau[k] - z.tau) / eta;
    const double h = dos.tau[k] - dos.tau[k - 1];
    // rho(sigma) = a + b u on the segment, u = (sigma - tau)/eta.
    const double b = (dos.rho[k] - dos.rho[k - 1]) / h * eta;
    const double a = dos.rho[k - 1] - b * ua;
    const double d_atan = std::atan2(ub - ua, 1.0 + ua * ub);
    const double d_log = std::log((ub * ub + 1.0) / (ua * ua + 1.0));
    total += a * d_atan + 0.5 * b * d_log;
  }
  return total / M_PI;
}

std::string to_string(MinimumKind kind) {
  switch (kind) {
    case MinimumKind::extreme_edge: return "extreme-edge";
    case MinimumKind::internal_edge: return "internal-edge";
    case MinimumKind::internal_minimum: return "internal-minimum";
  }
  return "unknown";
}

std::vector<Interval> SupportStructure::gaps() const {
  std::vector<Interval> g;
  for (std::size_t k = 1; k < intervals.size(); ++k) g.push_back({intervals[k - 1].hi, intervals[k].lo});
  return g;
}

bool SupportStructure::contains(double tau) const {
  return std::any_of(intervals.begin(), intervals.end(), [&](const Interval& iv) { return iv.lo <= tau && tau <= iv.hi; });
}

double SupportStructure::distance(SpectralPoint z) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& iv : intervals) {
    const double dx = z.tau < iv.lo ? iv.lo - z.tau : (z.tau > iv.hi ? z.tau - iv.hi : 0.0);
    d = std::min(d, std::hypot(dx, z.eta));
  }
  return d;
}

std::vector<std::size_t> SupportStructure::short_intervals() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < intervals.size(); ++k)
    if (intervals[k].length() < 2.0 * delta_star) out.push_back(k);
  return out;
}

std::vector<MinimumPoint> SupportStructure::edges() const {
  std::vector<MinimumPoint> out;
  std::copy_if(minima.begin(), minima.end(), std::back_inserter(out),
               [](const MinimumPoint& m) { return m.kind != MinimumKind::internal_minimum; });
  return out;
}

namespace {

void rebuild_edge_minima(SupportStructure& s, std::vector<MinimumPoint> internal) {
  std::vector<MinimumPoint> all;
  const std::size_t k_last = s.intervals.size() - 1;
  for (std::size_t k = 0; k < s.intervals.size(); ++k) {
    all.push_back({s.intervals[k].lo, k == 0 ? MinimumKind::extreme_edge : MinimumKind::internal_edge, +1, k});
    all.push_back({s.intervals[k].hi, k == k_last ? MinimumKind::extreme_edge : MinimumKind::internal_edge, -1, k});
  }
  all.insert(all.end(), internal.begin(), internal.end());
  std::sort(all.begin(), all.end(), [](const MinimumPoint& a, const MinimumPoint& b) { return a.tau < b.tau; });
  s.minima = std::move(all);
}

}  // namespace

SupportStructure detect_support(const DosCurve& dos, const SupportOptions& options) {
  require_complete(dos, "detect_support");
  const double eta = dos.eta_used > 0.0 ? dos.eta_used : dos.eta_solved;
  SupportStructure s;
  s.threshold = options.threshold.value_or(std::max(10.0 * eta, 1e-4));
  s.delta_star = options.delta_star;
  s.resolution = dos.max_spacing();
  if (!(s.threshold > 0.0)) throw InvalidInput("detect_support: threshold must be positive");

  const auto& t = dos.tau;
  const auto& r = dos.rho;
  const std::size_t n = t.size();
  const double thr = s.threshold;
  auto crossing = [&](std::size_t a, std::size_t b) {
    return t[a] + (thr - r[a]) / (r[b] - r[a]) * (t[b] - t[a]);
  };

  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t k = 0; k < n;) {
    if (r[k] < thr) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e + 1 < n && r[e + 1] >= thr) ++e;
    runs.emplace_back(k, e);
    k = e + 1;
  }
  if (runs.empty()) throw InvalidInput("detect_support: no grid point reaches the threshold (empty support)");

  std::vector<MinimumPoint> internal;
  const int w = std::max(1, options.smoothing_window);
  for (std::size_t idx = 0; idx < runs.size(); ++idx) {
    const auto [a, b] = runs[idx];
    Interval iv;
    if (a == 0) {
      iv.lo = t.front();
      s.warnings.push_back("support reaches the left end of the grid");
    } else {
      iv.lo = crossing(a - 1, a);
    }
    if (b == n - 1) {
      iv.hi = t.back();
      s.warnings.push_back("support reaches the right end of the grid");
    } else {
      iv.hi = crossing(b, b + 1);
    }
    s.intervals.push_back(iv);

    const auto lo_i = static_cast<std::ptrdiff_t>(a), hi_i = static_cast<std::ptrdiff_t>(b);
    std::ptrdiff_t last_found = -1;
    for (std::ptrdiff_t k = lo_i + w; k <= hi_i - w; ++k) {
      bool is_min = true;
      for (std::ptrdiff_t j = k - w; j <= k + w && is_min; ++j) is_min = r[static_cast<std::size_t>(j)] >= r[static_cast<std::size_t>(k)];
      if (!is_min) continue;
      if (last_found >= 0 && k - last_found <= w) continue;
      double left = 0.0, right = 0.0;
      for (std::ptrdiff_t j = k; j >= lo_i && t[static_cast<std::size_t>(k)] - t[static_cast<std::size_t>(j)] <= options.delta_star; --j)
        left = std::max(left, r[static_cast<std::size_t>(j)]);
      for (std::ptrdiff_t j = k; j <= hi_i && t[static_cast<std::size_t>(j)] - t[static_cast<std::size_t>(k)] <= options.delta_star; ++j)
        right = std::max(right, r[static_cast<std::size_t>(j)]);
      const double rk = r[static_cast<std::size_t>(k)];
      if (rk > (1.0 - options.minimum_prominence) * std::min(left, right)) continue;
      last_found = k;
      internal.push_back({t[static_cast<std::size_t>(k)], MinimumKind::internal_minimum, 0, idx});
      if (rk < 2.0 * thr)
        s.warnings.push_back("minimum at tau = " + std::to_string(t[static_cast<std::size_t>(k)]) +
                             " is close to the threshold; a gap may be unresolved");
    }
  }
  for (std::size_t k : s.short_intervals())
    s.warnings.push_back("interval " + std::to_string(k) + " is shorter than 2 delta_star");
  rebuild_edge_minima(s, std::move(internal));
  return s;
}

SupportStructure refine_edges(const VarianceProfile& profile, const SupportStructure& support,
                              const EdgeRefinement& options, const SolverConfig& config) {
  if (!(options.eta > 0.0 && options.threshold > 0.0 && options.tolerance > 0.0))
    throw InvalidInput("refine_edges: eta, threshold and tolerance must be positive");
  SupportStructure out = support;
  auto inside = [&](double tau) {
    return solve_robust(profile, {tau, options.eta}, config).density() >= options.threshold;
  };
  const double step0 = std::max(2.0 * support.resolution, 10.0 * options.tolerance);

  // Refine one edge; `inward` = +1 if the support lies to the right.
  auto refine = [&](double edge, int inward, double limit_out, double limit_in) {
    double out_pt = edge - inward * step0, in_pt = edge + inward * step0;
    for (double step = step0; inside(out_pt);) {
      step *= 2.0;
      out_pt = edge - inward * step;
      if (inward * (out_pt - limit_out) <= 0.0) {
        out_pt = limit_out;
        break;
      }
    }
    for (double step = step0; !inside(in_pt);) {
      step *= 2.0;
      in_pt = edge + inward * step;
      if (inward * (in_pt - limit_in) >= 0.0) {
        in_pt = limit_in;
        break;
      }
    }
    while (std::abs(in_pt - out_pt) > options.tolerance) {
      const double mid = 0.5 * (in_pt + out_pt);
      (inside(mid) ? in_pt : out_pt) = mid;
    }
    return 0.5 * (in_pt + out_pt);
  };

  const auto& iv = support.intervals;
  for (std::size_t k = 0; k < iv.size(); ++k) {
    const double mid = 0.5 * (iv[k].lo + iv[k].hi);
    const double left_lim = k == 0 ? iv[k].lo - 1.0 : 0.5 * (iv[k - 1].hi + iv[k].lo);
    const double right_lim = k + 1 == iv.size() ? iv[k].hi + 1.0 : 0.5 * (iv[k].hi + iv[k + 1].lo);
    out.intervals[k].lo = refine(iv[k].lo, +1, left_lim, mid);
    out.intervals[k].hi = refine(iv[k].hi, -1, right_lim, mid);
  }
  // Internal minima: golden-section search on rho(tau + i eta) within two grid
  // spacings of the grid minimum.
  auto rho_at = [&](double tau) { return solve_robust(profile, {tau, options.eta}, config).density(); };
  std::vector<MinimumPoint> internal;
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  for (MinimumPoint m : support.minima) {
    if (m.kind != MinimumKind::internal_minimum) continue;
    double a = m.tau - 2.0 * support.resolution, b = m.tau + 2.0 * support.resolution;
    double x1 = b - golden * (b - a), x2 = a + golden * (b - a);
    double f1 = rho_at(x1), f2 = rho_at(x2);
    while (b - a > options.tolerance) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - golden * (b - a);
        f1 = rho_at(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + golden * (b - a);
        f2 = rho_at(x2);
      }
    }
    m.tau = 0.5 * (a + b);
    internal.push_back(m);
  }
  rebuild_edge_minima(out, std::move(internal));
  out.resolution = options.tolerance;
  return out;
}

double local_gap_size(const SupportStructure& support, double tau, double delta) {
  const auto& iv = support.intervals;
  if (iv.empty()) throw InvalidInput("local_gap_size: empty support");
  for (std::size_t k = 0; k + 1 < iv.size(); ++k) {
    if (iv[k].hi - delta <= tau && tau <= iv[k + 1].lo + delta) return iv[k + 1].lo - iv[k].hi;
  }
  if (tau <= iv.front().lo + delta || tau >= iv.back().hi - delta) return 1.0;
  return 0.0;
}

KappaValue kappa(const SupportStructure& support, SpectralPoint z, double rho_z, int n, double gamma, double delta) {
  if (!(z.eta > 0.0)) throw InvalidInput("kappa: eta must be positive");
  const double gap = local_gap_size(support, z.tau, delta);
  const double a = std::cbrt(gap) + rho_z;
  const double dist = support.distance(z);
  const double n_eta = n * z.eta;
  KappaValue k;
  k.default_value = 1.0 / a;
  k.value = k.default_value;
  if (a * dist >= std::pow(static_cast<double>(n), gamma) / (n_eta * n_eta)) {
    const double improved = 0.5 * (z.eta / (dist * a) + 1.0 / (n_eta * std::sqrt(dist) * std::sqrt(a)));
    if (improved <= k.default_value) {
      k.value = improved;
      k.improved = true;
    } else {
      k.improved_rejected = true;
    }
  }
  return k;
}

std::vector<ShapeFit> fit_edge_shapes(const DosCurve& dos, const SupportStructure& support,
                                      const ShapeFitOptions& options) {
  require_complete(dos, "fit_edge_shapes");
  const double h = dos.max_spacing();
  const double w_min = options.omega_min.value_or(10.0 * h);
  std::vector<ShapeFit> fits;

  auto fit_side = [&](const MinimumPoint& m, int side, double base, double w_max) {
    ShapeFit f;
    f.minimum = m;
    f.side = side;
    f.regime = to_string(m.kind);
    std::vector<double> xs, ys;
    if (w_max > w_min && options.samples >= 2) {
      for (int k = 0; k < options.samples; ++k) {
        const double w = w_min * std::pow(w_max / w_min, static_cast<double>(k) / (options.samples - 1));
        // side 0: symmetric average of both sides.
        const double r = side == 0 ? 0.5 * (dos.at(m.tau + w) + dos.at(m.tau - w)) : dos.at(m.tau + side * w);
        const double y = r - base;
        if (y > 0.0) {
          xs.push_back(std::log(w));
          ys.push_back(std::log(y));
        }
      }
    }
    f.points = static_cast<int>(xs.size());
    if (f.points >= 8) {
      Eigen::MatrixXd a(f.points, 2);
      Eigen::VectorXd b(f.points);
      for (int k = 0; k < f.points; ++k) {
        a(k, 0) = 1.0;
        a(k, 1) = xs[static_cast<std::size_t>(k)];
        b(k) = ys[static_cast<std::size_t>(k)];
      }
      const Eigen::Vector2d c = a.colPivHouseholderQr().solve(b);
      f.prefactor = std::exp(c(0));
      f.exponent = c(1);
      f.residual = std::sqrt((a * c - b).squaredNorm() / f.points);
      f.reliable = true;
    }
    fits.push_back(f);
  };

  for (const auto& m : support.minima) {
    const Interval& iv = support.intervals[m.interval];
    const double cap = options.omega_max.value_or(support.delta_star);
    if (m.kind == MinimumKind::internal_minimum) {
      const double base = options.minimum_base.value_or(0.0);
      fit_side(m, -1, base, std::min(cap, m.tau - iv.lo));
      fit_side(m, +1, base, std::min(cap, iv.hi - m.tau));
      fit_side(m, 0, base, std::min({cap, m.tau - iv.lo, iv.hi - m.tau}));
    } else {
      fit_side(m, m.inward, 0.0, std::min(cap, 0.5 * iv.length()));
    }
  }
  return fits;
}

double envelope_root(const CubicCoefficients& c, double n_eta, double tech) {
  if (!(n_eta > 0.0) || !(tech >= 0.0)) throw InvalidInput("envelope_root: N eta must be positive");
  if (!(c.rho_t >= 0.0 && c.pi1 >= 0.0 && c.pi2 >= 0.0) || !std::isfinite(c.rho_t + c.pi1 + c.pi2))
    throw InvalidInput("envelope_root: coefficients must be finite and nonnegative");
  const double a2 = c.pi2;
  const double a1 = c.pi1 - tech / n_eta;
  const double a0 = -(c.rho_t / n_eta + 1.0 / (n_eta * n_eta));
  auto f = [&](double e) { return ((e + a2) * e + a1) * e + a0; };
  auto df = [&](double e) { return (3.0 * e + 2.0 * a2) * e + a1; };

  // Descartes: leading +, a2 >= 0, a0 < 0 give exactly one sign change.
  int changes = 0;
  double prev = 1.0;
  for (double coef : {a2, a1, a0}) {
    if (coef == 0.0) continue;
    if ((coef > 0.0) != (prev > 0.0)) ++changes;
    prev = coef;
  }
  double lo = 0.0;
  double hi = 1.0 + std::max({std::abs(a2), std::abs(a1), std::abs(a0)});
  if (changes != 1 || !(f(lo) < 0.0) || !(f(hi) > 0.0))
    throw NumericalFailure("envelope_root: bracket does not isolate a single positive root");

  double e = std::cbrt(-a0);
  if (!(e > lo && e < hi)) e = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const double fe = f(e);
    if (fe == 0.0) return e;
    (fe < 0.0 ? lo : hi) = e;
    if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * hi) break;
    const double d = df(e);
    double next = d > 0.0 ? e - fe / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == e) break;
    e = next;
  }
  return e;
}

ErrorEnvelope::ErrorEnvelope(const MinimumPoint& anchor, double delta_gap, double rho_at_min, int n,
                             const EnvelopeOptions& options)
    : anchor_(anchor), delta_(delta_gap), rho0_(rho_at_min), n_(n), options_(options) {
  if (!(options.gamma > 0.0 && options.gamma < 1.0)) throw InvalidInput("error_envelope: gamma must lie in (0, 1)");
  eps_ = options.eps_tilde.value_or(options.gamma / 20.0);
  if (!(eps_ > 0.0 && eps_ < options.gamma / 16.0))
    throw InvalidInput("error_envelope: eps_tilde must lie in (0, gamma/16)");
  if (n < 1) throw InvalidInput("error_envelope: N must be positive");
  if (!(options.delta_star > 0.0) || !(options.c_star > 0.0 && options.c_star < 0.5))
    throw InvalidInput("error_envelope: need delta_star > 0 and c_star in (0, 1/2)");
  theta_ = anchor.kind == MinimumKind::internal_minimum ? 1 : -anchor.inward;
  if (anchor.kind != MinimumKind::internal_minimum && !(delta_ > 0.0))
    throw InvalidInput("error_envelope: gap size at an edge must be positive");
}

std::pair<double, double> ErrorEnvelope::omega_range() const {
  if (anchor_.kind == MinimumKind::internal_minimum) return {-options_.delta_star, options_.delta_star};
  return {-options_.delta_star, 0.5 * delta_};
}

CubicCoefficients ErrorEnvelope::coefficients(double omega, double eta) const {
  if (!(eta > 0.0)) throw InvalidInput("error_envelope: eta must be positive");
  const auto [lo, hi] = omega_range();
  if (!(omega >= lo && omega <= hi))
    throw InvalidInput("error_envelope: omega = " + std::to_string(omega) + " outside [" + std::to_string(lo) +
                       ", " + std::to_string(hi) + "]");
  CubicCoefficients c;
  const double w = std::abs(omega);
  if (anchor_.kind == MinimumKind::internal_minimum) {
    const double s = std::cbrt(w + eta);
    c.rho_t = rho0_ + s;
    c.pi1 = rho0_ * rho0_ + s * s;
    c.pi2 = rho0_ + s;
    return c;
  }
  const double d = delta_;
  if (omega <= 0.0) {
    c.rho_t = std::sqrt(w + eta) / std::pow(d + w + eta, 1.0 / 6.0);
    c.pi1 = std::sqrt(w + eta) * std::pow(w + eta + d, 1.0 / 6.0);
    c.pi2 = std::cbrt(w + eta + d);
  } else if (omega <= options_.c_star * d) {
    c.rho_t = eta / (std::pow(d + eta, 1.0 / 6.0) * std::sqrt(omega + eta));
    c.pi1 = std::sqrt(omega + eta) * std::pow(d + eta, 1.0 / 6.0);
    c.pi2 = std::cbrt(d + eta);
  } else {
    c.rho_t = eta / std::pow(d + eta, 2.0 / 3.0);
    c.pi1 = std::pow(d + eta, 2.0 / 3.0);
    c.pi2 = std::cbrt(d + eta);
  }
  return c;
}

double ErrorEnvelope::operator()(double omega, double eta) const {
  const double tech = options_.technical_term ? std::pow(static_cast<double>(n_), 8.0 * eps_) : 1.0;
  return envelope_root(coefficients(omega, eta), n_ * eta, tech);
}

ErrorEnvelope error_envelope(const SupportStructure& support, const DosCurve& dos, double tau0, int n,
                             const EnvelopeOptions& options) {
  const MinimumPoint* anchor = nullptr;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& m : support.minima) {
    const double d = std::abs(m.tau - tau0);
    if (d < best) {
      best = d;
      anchor = &m;
    }
  }
  if (anchor == nullptr || best > 1e-9 * std::max(1.0, std::abs(tau0)))
    throw InvalidInput("error_envelope: tau0 = " + std::to_string(tau0) + " is not in the minima set");
  if (anchor->kind == MinimumKind::internal_minimum)
    return ErrorEnvelope(*anchor, 0.0, dos.at(anchor->tau), n, options);
  return ErrorEnvelope(*anchor, local_gap_size(support, anchor->tau, 0.0), 0.0, n, options);
}

}  // namespace qvelab
