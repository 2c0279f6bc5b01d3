#include "qvelab/qve_solver.hpp"

#include <algorithm>
#include <cmath>

#include "qvelab/linalg.hpp"

namespace qvelab {

namespace {

struct Reduced {
  const RMatrix& a;
  Complex z;

  [[nodiscard]] CVector field(const CVector& mu) const {
    // z + A mu, with A real: split to keep the product real-valued.
    CVector w(mu.size());
    const RVector re = a * mu.real();
    const RVector im = a * mu.imag();
    for (Eigen::Index c = 0; c < mu.size(); ++c) w(c) = z + Complex(re(c), im(c));
    return w;
  }

  [[nodiscard]] double residual(const CVector& mu) const {
    const CVector w = field(mu);
    double r = 0.0;
    for (Eigen::Index c = 0; c < mu.size(); ++c) r = std::max(r, std::abs(1.0 / mu(c) + w(c)));
    return std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
  }
};

bool in_upper_half_plane(const CVector& v) {
  return (v.imag().array() > 0.0).all() && v.allFinite();
}

CVector reduce(const VarianceProfile& profile, const CVector& full) {
  CVector mu = CVector::Zero(profile.class_count());
  const auto& cls = profile.row_class();
  for (std::size_t i = 0; i < cls.size(); ++i) mu(cls[i]) += full(static_cast<Eigen::Index>(i));
  for (int c = 0; c < profile.class_count(); ++c) mu(c) /= static_cast<double>(profile.class_sizes()[c]);
  return mu;
}

CVector expand(const VarianceProfile& profile, const CVector& mu) {
  const auto& cls = profile.row_class();
  CVector m(static_cast<Eigen::Index>(cls.size()));
  for (std::size_t i = 0; i < cls.size(); ++i) m(static_cast<Eigen::Index>(i)) = mu(cls[i]);
  return m;
}

struct NewtonOutcome {
  CVector mu;
  double residual;
  int steps;
};

// Newton on F(mu) = mu + 1/(z + A mu), in two phases. First, full steps
// shortened only to stay in the half-plane (a watchdog: the iterate may
// wander uphill, which is what converges near cusps). If that does not
// reach the tolerance, a monotone line search on ||F||_2 restarts from the
// best iterate. The reported residual is the QVE residual of the best iterate.
NewtonOutcome newton(const Reduced& sys, CVector mu, double residual, const SolverConfig& cfg) {
  auto f_of = [&](const CVector& v) -> CVector { return v.array() + sys.field(v).array().inverse(); };
  auto direction = [&](const CVector& v, const CVector& fv) -> CVector {
    const CVector w = sys.field(v);
    CMatrix jac = -(w.array().square().inverse().matrix().asDiagonal() * sys.a.cast<Complex>());
    jac.diagonal().array() += 1.0;
    return jac.partialPivLu().solve(-fv);
  };
  CVector best = mu;
  double best_res = residual;
  int steps = 0;
  auto record = [&](const CVector& v) {
    const double r = sys.residual(v);
    if (r < best_res) {
      best_res = r;
      best = v;
    }
  };

  const double start_merit = f_of(mu).norm();
  for (int k = 0; k < cfg.newton_max_steps / 2 && best_res > cfg.tol; ++k, ++steps) {
    const CVector f = f_of(mu);
    const CVector step = direction(mu, f);
    if (!step.allFinite()) break;
    double t = 1.0;
    while (t > 1e-12 && !in_upper_half_plane(mu + t * step)) t *= 0.5;
    if (t <= 1e-12) break;
    mu += t * step;
    const double merit = f_of(mu).norm();
    if (!std::isfinite(merit) || merit > 1e3 * start_merit) break;
    record(mu);
  }

  mu = best;
  CVector f = f_of(mu);
  double merit = f.norm();
  for (; steps < cfg.newton_max_steps && best_res > cfg.tol; ++steps) {
    const CVector step = direction(mu, f);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 50; ++halving, t *= 0.5) {
      CVector cand = mu + t * step;
      if (!in_upper_half_plane(cand)) continue;
      CVector fc = f_of(cand);
      const double mc = fc.norm();
      if (std::isfinite(mc) && mc < (1.0 - 1e-4 * t) * merit) {
        mu = std::move(cand);
        f = std::move(fc);
        merit = mc;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    record(mu);
  }
  return {std::move(best), best_res, steps};
}

}  // namespace

void validate(const SolverConfig& config) {
  if (!(config.tol > 0.0)) throw InvalidInput("solver config: tol must be positive");
  if (!(config.damping > 0.0 && config.damping <= 1.0)) throw InvalidInput("solver config: damping must lie in (0, 1]");
  if (config.max_iter < 1) throw InvalidInput("solver config: max_iter must be positive");
}

double QveSolution::density() const { return m.imag().mean() / M_PI; }

double qve_residual(const VarianceProfile& profile, Complex z, const CVector& m) {
  const RVector re = profile.s() * m.real();
  const RVector im = profile.s() * m.imag();
  double r = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) r = std::max(r, std::abs(1.0 / m(i) + z + Complex(re(i), im(i))));
  return r;
}

QveSolution solve_point(const VarianceProfile& profile, SpectralPoint z, const SolverConfig& config,
                        const std::optional<CVector>& warm_start) {
  validate(config);
  if (!(z.eta > 0.0)) throw InvalidInput("solve_point: eta must be positive");
  const Reduced sys{profile.reduced(), z.z()};

  CVector mu;
  if (warm_start) {
    if (warm_start->size() != profile.n()) throw InvalidInput("solve_point: warm start has the wrong size");
    if (!in_upper_half_plane(*warm_start)) throw InvalidInput("solve_point: warm start must lie in the upper half-plane");
    mu = reduce(profile, *warm_start);
  } else {
    mu = CVector::Constant(profile.class_count(), Complex(0.0, std::min(1.0, 1.0 / std::abs(z.z()))));
  }

  QveSolution out;
  out.point = z;
  double res = sys.residual(mu);
  double theta = config.damping;
  int decreases = 0;
  double checkpoint = res;
  int since_checkpoint = 0;
  int it = 0;
  bool newton_pending = true;

  while (res > config.tol && it < config.max_iter) {
    if (since_checkpoint >= config.stall_window) {
      const bool stalled = res > 0.1 * checkpoint;
      if (stalled && config.newton_fallback && newton_pending) {
        auto nt = newton(sys, mu, res, config);
        out.used_newton = true;
        if (nt.residual < res) {
          mu = std::move(nt.mu);
          res = nt.residual;
        }
        // Retry Newton only after further fixed-point progress.
        newton_pending = false;
        if (res <= config.tol) break;
      } else if (!stalled) {
        newton_pending = true;
      }
      checkpoint = res;
      since_checkpoint = 0;
    }
    ++it;
    ++since_checkpoint;
    const CVector target = -sys.field(mu).array().inverse();
    CVector cand = (1.0 - theta) * mu + theta * target;
    if (!in_upper_half_plane(cand)) {
      theta *= 0.5;
      if (theta < 1e-14) {
        out.message = "damping underflow: iterate left the upper half-plane";
        break;
      }
      continue;
    }
    const double rc = sys.residual(cand);
    if (rc > res) {
      theta = std::max(theta * 0.5, 1e-6);
      decreases = 0;
    } else if (++decreases >= 5) {
      theta = std::min(1.0, theta * 1.2);
      decreases = 0;
    }
    mu = std::move(cand);
    res = rc;
  }

  if (res > config.tol && config.newton_fallback && out.message.empty()) {
    auto nt = newton(sys, mu, res, config);
    out.used_newton = true;
    if (nt.residual < res) {
      mu = std::move(nt.mu);
      res = nt.residual;
    }
  }

  out.m = expand(profile, mu);
  out.residual = res;
  out.iterations = it;
  out.converged = res <= config.tol && in_upper_half_plane(mu);
  if (!out.converged && out.message.empty()) out.message = "no convergence within the iteration budget";
  return out;
}

SweepResult solve_sweep(const VarianceProfile& profile, double tau, const std::vector<double>& eta_grid,
                        const SolverConfig& config) {
  if (eta_grid.empty()) throw InvalidInput("solve_sweep: empty eta grid");
  for (std::size_t k = 0; k < eta_grid.size(); ++k) {
    if (!(eta_grid[k] > 0.0)) throw InvalidInput("solve_sweep: eta values must be positive");
    if (k > 0 && !(eta_grid[k] < eta_grid[k - 1])) throw InvalidInput("solve_sweep: eta grid must be strictly decreasing");
  }
  SweepResult out;
  std::optional<CVector> warm;
  for (double eta : eta_grid) {
    QveSolution sol = solve_point(profile, {tau, eta}, config, warm);
    if (!sol.converged) {
      out.failed_eta = eta;
      break;
    }
    warm = sol.m;
    out.solutions.push_back(std::move(sol));
  }
  return out;
}

std::vector<double> continuation_ladder(double eta, double eta_start, double ratio) {
  std::vector<double> ladder;
  for (double e = std::max(eta_start, eta); e > eta; e *= ratio) ladder.push_back(e);
  ladder.push_back(eta);
  return ladder;
}

QveSolution solve_robust(const VarianceProfile& profile, SpectralPoint z, const SolverConfig& config,
                         const std::optional<CVector>& warm_start) {
  QveSolution sol = solve_point(profile, z, config, warm_start);
  if (sol.converged) return sol;
  const auto ladder = continuation_ladder(z.eta, std::max(2.0, 2.0 * z.eta));
  SweepResult sweep = solve_sweep(profile, z.tau, ladder, config);
  if (!sweep.complete()) {
    throw NumericalFailure("QVE solver failed at z = " + std::to_string(z.tau) + " + i" + std::to_string(z.eta) +
                           " (continuation stopped at eta = " + std::to_string(*sweep.failed_eta) + ")");
  }
  return std::move(sweep.solutions.back());
}

StabilityOperator stability_operator(const VarianceProfile& profile, const QveSolution& solution,
                                     double singular_floor) {
  if (!solution.converged) throw InvalidInput("stability_operator: solution not converged");
  const auto n = profile.n();
  StabilityOperator op;
  const CVector m2 = solution.m.array().square();
  op.b = -(m2.asDiagonal() * profile.s().cast<Complex>());
  op.b.diagonal().array() += 1.0;
  const RVector sv = linalg::singular_values(op.b);
  op.min_singular_value = sv.minCoeff();
  if (op.min_singular_value > singular_floor) {
    const CMatrix inv = op.b.partialPivLu().solve(CMatrix::Identity(n, n));
    op.inverse_sup_norm = inv.cwiseAbs().rowwise().sum().maxCoeff();
  } else {
    op.near_singular = true;
  }
  return op;
}

BoundedSolutionCheck check_bounded_solution(const VarianceProfile& profile,
                                            const std::vector<SpectralPoint>& grid, double big_p,
                                            const SolverConfig& config) {
  if (grid.empty()) throw InvalidInput("check_bounded_solution: empty grid");
  BoundedSolutionCheck out;
  for (const auto& z : grid) {
    try {
      const QveSolution sol = solve_robust(profile, z, config);
      out.max_abs_m = std::max(out.max_abs_m, sol.m.cwiseAbs().maxCoeff());
    } catch (const NumericalFailure&) {
      out.inconclusive = true;
    }
  }
  out.ok = !out.inconclusive && out.max_abs_m <= big_p;
  return out;
}

}  // namespace qvelab
