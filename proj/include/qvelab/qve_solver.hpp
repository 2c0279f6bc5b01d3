#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qvelab/types.hpp"
#include "qvelab/variance_profile.hpp"

namespace qvelab {

struct SolverConfig {
  double tol = 1e-10;       // sup-norm residual max_i |1/m_i + z + (Sm)_i|
  int max_iter = 20000;     // fixed-point iterations
  double damping = 0.5;     // initial theta in (0, 1]
  bool newton_fallback = true;
  int stall_window = 50;    // iterations without 10x progress before Newton kicks in
  int newton_max_steps = 60;
};

void validate(const SolverConfig& config);

struct QveSolution {
  SpectralPoint point;
  CVector m;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool used_newton = false;
  std::string message;

  [[nodiscard]] Complex average() const { return m.mean(); }
  // rho(z) = Im<m>/pi, the harmonic extension of the density of states at z.
  [[nodiscard]] double density() const;
};

// Residual max_i |1/m_i + z + (Sm)_i| of an arbitrary vector.
double qve_residual(const VarianceProfile& profile, Complex z, const CVector& m);

/// Solve -1/m_i = z + (Sm)_i in the upper half-plane.
///
/// Damped fixed-point iteration m <- (1-theta) m + theta * (-1/(z + Sm)),
/// theta halved on leaving the half-plane or on residual growth and grown by
/// 1.2 after 5 consecutive decreases. When the residual stalls, a damped
/// Newton iteration on F(m) = m + 1/(z + Sm) takes over; its result is kept
/// only if it lowers the residual. Work is done on the row-class reduced
/// system of the profile.
QveSolution solve_point(const VarianceProfile& profile, SpectralPoint z, const SolverConfig& config,
                        const std::optional<CVector>& warm_start = std::nullopt);

struct SweepResult {
  std::vector<QveSolution> solutions;
  std::optional<double> failed_eta;  // set when the sweep stopped early
  [[nodiscard]] bool complete() const { return !failed_eta.has_value(); }
};

// Solve top-down along a strictly decreasing eta grid at fixed tau, warm
// starting each level from the previous one.
SweepResult solve_sweep(const VarianceProfile& profile, double tau, const std::vector<double>& eta_grid,
                        const SolverConfig& config);

// Geometric eta ladder from max(eta_start, z.eta) down to z.eta.
std::vector<double> continuation_ladder(double eta, double eta_start = 2.0, double ratio = 0.25);

// solve_point, falling back to an eta-continuation ladder when the cold (or
// warm) start does not converge. Throws NumericalFailure if both fail.
QveSolution solve_robust(const VarianceProfile& profile, SpectralPoint z, const SolverConfig& config,
                         const std::optional<CVector>& warm_start = std::nullopt);

struct StabilityOperator {
  CMatrix b;                 // Id - diag(m^2) S
  double min_singular_value = 0.0;
  std::optional<double> inverse_sup_norm;  // ||B^{-1}||_{inf->inf}
  bool near_singular = false;
};

StabilityOperator stability_operator(const VarianceProfile& profile, const QveSolution& solution,
                                     double singular_floor = 1e-13);

struct BoundedSolutionCheck {
  bool ok = false;
  bool inconclusive = false;
  double max_abs_m = 0.0;
};

BoundedSolutionCheck check_bounded_solution(const VarianceProfile& profile,
                                            const std::vector<SpectralPoint>& grid, double big_p,
                                            const SolverConfig& config = {});

}  // namespace qvelab
