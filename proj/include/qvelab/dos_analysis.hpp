#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qvelab/qve_solver.hpp"
#include "qvelab/types.hpp"
#include "qvelab/variance_profile.hpp"

namespace qvelab {

/// Density of states sampled on a sorted tau grid.
///
/// rho[k] = Im<m(tau_k + i eta_used)>/pi, or the Richardson value
/// 2 rho(eta/2) - rho(eta) when eta_used == 0. Grid points where the solver
/// failed hold NaN and are listed in `holes`.
struct DosCurve {
  std::vector<double> tau;
  std::vector<double> rho;
  double eta_used = 0.0;
  double eta_solved = 0.0;  // eta actually passed to the solver
  std::vector<std::size_t> holes;

  [[nodiscard]] std::size_t size() const { return tau.size(); }
  [[nodiscard]] bool complete() const { return holes.empty(); }
  [[nodiscard]] double max_spacing() const;
  [[nodiscard]] double min_spacing() const;
  // Trapezoid integral over the whole grid.
  [[nodiscard]] double integral() const;
  // Piecewise-linear interpolant, 0 outside the grid.
  [[nodiscard]] double at(double t) const;
  // Trapezoid mass of the interpolant on (-inf, t].
  [[nodiscard]] double mass_below(double t) const;
  // mass_below(t) / integral(): reaches exactly 1 at the right end of the grid.
  [[nodiscard]] double cdf(double t) const;
  // Smallest t with cdf(t) >= u, u in [0, 1].
  [[nodiscard]] double quantile(double u) const;

  void to_csv(std::ostream& os) const;
};

std::vector<double> uniform_grid(double lo, double hi, std::size_t points);

/// Evaluate the density of states on `tau_grid` at height `eta`, warm starting
/// along the grid. With `extrapolate`, each point is also solved at eta/2 and
/// combined into the two-point Richardson estimate (clamped at 0).
DosCurve density_of_states(const VarianceProfile& profile, const std::vector<double>& tau_grid, double eta,
                           bool extrapolate = false, const SolverConfig& config = {});

/// Poisson-kernel smoothing of the curve at z, integrated exactly against the
/// piecewise-linear interpolant (the curve is taken to vanish off its grid).
/// Throws InvalidInput when the grid spacing exceeds z.eta.
double harmonic_extension(const DosCurve& dos, SpectralPoint z);

enum class MinimumKind { extreme_edge, internal_edge, internal_minimum };
std::string to_string(MinimumKind kind);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  [[nodiscard]] double length() const { return hi - lo; }
};

struct MinimumPoint {
  double tau = 0.0;
  MinimumKind kind = MinimumKind::extreme_edge;
  // Direction from tau into the support: +1 at left edges, -1 at right
  // edges, 0 at internal minima.
  int inward = 0;
  std::size_t interval = 0;
};

struct SupportOptions {
  std::optional<double> threshold;  // default max(10 eta, 1e-4)
  double delta_star = 0.05;
  int smoothing_window = 5;         // grid points on each side for minima
  double minimum_prominence = 0.1;  // relative dip required for an internal minimum
};

struct SupportStructure {
  std::vector<Interval> intervals;
  std::vector<MinimumPoint> minima;
  double delta_star = 0.05;
  double threshold = 0.0;
  double resolution = 0.0;  // grid spacing the edges were located on
  std::vector<std::string> warnings;

  [[nodiscard]] std::vector<Interval> gaps() const;
  [[nodiscard]] bool contains(double tau) const;
  // Euclidean distance from z to the union of the intervals.
  [[nodiscard]] double distance(SpectralPoint z) const;
  // Intervals shorter than 2 delta_star, reported not asserted.
  [[nodiscard]] std::vector<std::size_t> short_intervals() const;
  [[nodiscard]] std::vector<MinimumPoint> edges() const;
};

/// Threshold the curve: intervals are maximal runs with rho >= threshold, edges
/// placed by linear interpolation of the crossing. Local minima inside an
/// interval are found by discrete comparison over the smoothing window.
SupportStructure detect_support(const DosCurve& dos, const SupportOptions& options = {});

struct EdgeRefinement {
  double eta = 1e-12;
  double threshold = 1e-6;
  double tolerance = 1e-10;
};

/// Move every edge to the crossing of rho(tau + i eta) through the threshold,
/// located by bisection with fresh QVE solves. Internal minima are moved to
/// the minimizer of rho(tau + i eta) near their grid position.
SupportStructure refine_edges(const VarianceProfile& profile, const SupportStructure& support,
                              const EdgeRefinement& options = {}, const SolverConfig& config = {});

/// Delta_delta(tau): length of the gap whose delta-neighborhood holds tau, 1
/// beyond the delta-shrunken extreme edges, 0 otherwise.
double local_gap_size(const SupportStructure& support, double tau, double delta);

struct KappaValue {
  double value = 0.0;
  double default_value = 0.0;
  bool improved = false;       // improved branch taken
  bool improved_rejected = false;  // improved branch exceeded the default and was dropped
};

/// Local-law weight kappa(z). The default 1/(Delta^{1/3} + rho) is replaced by
/// half the improved bound when (Delta^{1/3} + rho) dist(z, supp) >=
/// N^gamma/(N eta)^2, unless that value exceeds the default.
KappaValue kappa(const SupportStructure& support, SpectralPoint z, double rho_z, int n, double gamma,
                 double delta);

struct ShapeFit {
  MinimumPoint minimum;
  int side = 1;  // tau = tau0 + side * omega; 0 fits (rho(tau0 + omega) + rho(tau0 - omega))/2
  std::string regime;
  double exponent = 0.0;
  double prefactor = 0.0;
  double residual = 0.0;  // rms of the log-log fit
  int points = 0;
  bool reliable = false;
};

struct ShapeFitOptions {
  std::optional<double> omega_min;  // default 10 grid spacings
  std::optional<double> omega_max;  // default delta_star
  int samples = 40;                 // log-spaced omega values
  // Value subtracted from rho at internal minima before taking logs; the
  // default 0 suits minima with rho(tau0) ~ 0 (cusps). Edges always use 0.
  std::optional<double> minimum_base;
};

/// Log-log least squares of rho(tau0 + side omega) - base against omega
/// for every edge (into the support); internal minima get one fit per side and
/// one of the two-sided average.
std::vector<ShapeFit> fit_edge_shapes(const DosCurve& dos, const SupportStructure& support,
                                      const ShapeFitOptions& options = {});

struct CubicCoefficients {
  double rho_t = 0.0;
  double pi1 = 0.0;
  double pi2 = 0.0;
};

/// Unique positive root E of
///   E^3 + pi2 E^2 + pi1 E = tech E/(N eta) + rho/(N eta) + 1/(N eta)^2
/// with tech = N^{8 eps}. Bracketed safeguarded Newton; throws NumericalFailure
/// if the bracket does not hold exactly one sign change.
double envelope_root(const CubicCoefficients& c, double n_eta, double tech);

struct EnvelopeOptions {
  double gamma = 0.1;
  std::optional<double> eps_tilde;  // default gamma/20, must lie in (0, gamma/16)
  double delta_star = 0.05;
  double c_star = 0.25;
  bool technical_term = true;
};

/// Error envelope anchored at one point of the minima set.
class ErrorEnvelope {
 public:
  ErrorEnvelope(const MinimumPoint& anchor, double delta_gap, double rho_at_min, int n, const EnvelopeOptions& options);

  [[nodiscard]] double tau0() const { return anchor_.tau; }
  // z = tau0 + theta * omega + i eta; omega < 0 points into the support at edges.
  [[nodiscard]] int theta() const { return theta_; }
  [[nodiscard]] double delta_gap() const { return delta_; }
  [[nodiscard]] double rho_at_min() const { return rho0_; }
  [[nodiscard]] double eps_tilde() const { return eps_; }
  [[nodiscard]] const MinimumPoint& anchor() const { return anchor_; }
  [[nodiscard]] std::pair<double, double> omega_range() const;

  [[nodiscard]] CubicCoefficients coefficients(double omega, double eta) const;
  [[nodiscard]] double operator()(double omega, double eta) const;

 private:
  MinimumPoint anchor_;
  int theta_ = 1;
  double delta_ = 1.0;
  double rho0_ = 0.0;
  double eps_ = 0.0;
  int n_ = 0;
  EnvelopeOptions options_;
};

ErrorEnvelope error_envelope(const SupportStructure& support, const DosCurve& dos, double tau0, int n,
                             const EnvelopeOptions& options = {});

}  // namespace qvelab
