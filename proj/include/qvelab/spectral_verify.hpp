#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qvelab/dos_analysis.hpp"
#include "qvelab/ensemble_sampler.hpp"
#include "qvelab/qve_solver.hpp"
#include "qvelab/types.hpp"
#include "qvelab/variance_profile.hpp"

namespace qvelab {

/// A stochastic-domination claim "X < bound" is tested as
/// "X <= c * bound for at least a (1 - alpha) fraction of trials".
struct CheckPolicy {
  double c = 10.0;
  double alpha = 0.05;
};

struct FractionCheck {
  std::size_t trials = 0;
  std::size_t passed = 0;
  double required = 0.95;
  [[nodiscard]] double fraction() const { return trials ? static_cast<double>(passed) / trials : 0.0; }
  [[nodiscard]] bool ok() const { return trials > 0 && fraction() >= required; }
};

// ---------------------------------------------------------------------------
// Resolvent and local law

/// Weight panel for the averaged law: all ones, alternating signs, and one
/// random sign vector drawn from `seed`.
std::vector<RVector> default_weight_panel(int n, std::uint64_t seed);

struct ResolventOptions {
  // Form the full matrix G: needed for err_o, the Ward check and the minor
  // route of d. Without it only the diagonal is computed (O(N^2) per z).
  bool full = true;
  bool keep_matrix = false;
};

struct ResolventData {
  SpectralPoint z;
  CVector g;                      // G_ii
  double err_d = 0.0;             // max_i |G_ii - m_i|
  std::optional<double> err_o;    // max_{i != j} |G_ij|
  std::vector<double> avg_err;    // |(1/N) sum_i conj(w_i)(G_ii - m_i)| per weight vector
  std::optional<double> ward_max_rel;  // max_i |sum_j |G_ij|^2 - Im G_ii/eta| / (Im G_ii/eta)
  std::optional<CMatrix> matrix;  // G, when kept
};

/// G = U diag(1/(lambda - z)) U^* from the sample's cached eigenvectors.
/// Throws InvalidInput for eta < 1e-14, a size mismatch with m, or weights
/// with sup-norm above 1.
ResolventData resolvent(const MatrixSample& sample, SpectralPoint z, const QveSolution& m,
                        const std::vector<RVector>& weights, const ResolventOptions& options = {});

// (H - z)^{-1} by LU; the spot-check route for small n.
CMatrix resolvent_direct(const MatrixSample& sample, SpectralPoint z);

struct LocalLawBound {
  double entrywise = 0.0;
  double averaged = 0.0;
};

// sqrt(rho/(N eta)) + 1/(N eta) + min{1/sqrt(N eta), kappa/(N eta)} and
// min{1/sqrt(N eta), kappa/(N eta)}.
LocalLawBound local_law_bound(double rho, double kappa, int n, double eta);
// Bulk form: 1/sqrt(N eta) and 1/(N eta).
LocalLawBound bulk_local_law_bound(int n, double eta);

// ---------------------------------------------------------------------------
// Perturbation vector d

struct PerturbationVector {
  SpectralPoint z;
  CVector d;                           // -1/g - z - S g
  std::vector<int> cross_checked;      // rows also computed through minors
  double max_rel_discrepancy = 0.0;    // max |d_direct - d_minor| / max(|d|_inf, 1e-300)
  double sup_norm = 0.0;
  double lemma_bound = 0.0;            // sqrt(Im<g>/(N eta)) + 1/sqrt(N)
};

/// d_i = -1/g_i - z - (S g)_i. Rows listed in `cross_check` are recomputed
/// through the Schur-complement expansion with minors
/// G^{(k)}_ij = G_ij - G_ik G_kj / G_kk, which needs the full G kept in
/// `res`. Throws NumericalFailure if some g_i = 0.
PerturbationVector perturbation_d(const MatrixSample& sample, const ResolventData& res,
                                  const VarianceProfile& profile, const std::vector<int>& cross_check = {});

// sqrt(rho/(N eta)) + 1/sqrt(N).
double perturbation_bound(double rho, int n, double eta);

// ---------------------------------------------------------------------------
// Counting function

struct CountingRow {
  std::size_t sample = 0;
  double tau = 0.0;
  long count = 0;             // #{lambda_i <= tau}
  double expected = 0.0;      // N * cdf(tau)
  double discrepancy = 0.0;
  double bound = 0.0;         // C min{1/(Delta^{1/3} + rho), N^{1/5}}
  bool pass = false;
};

struct CountingReport {
  std::vector<CountingRow> rows;
  FractionCheck check;
};

CountingReport counting_discrepancy(const std::vector<RVector>& spectra, const DosCurve& dos,
                                    const SupportStructure& support, const std::vector<double>& tau_grid,
                                    const CheckPolicy& policy = {}, double delta = 0.025);

// ---------------------------------------------------------------------------
// Rigidity and empty gaps

enum class TauRegion { bulk, extreme_edge, internal_edge, outside };
std::string to_string(TauRegion region);

struct RigidityTarget {
  double tau = 0.0;
  TauRegion region = TauRegion::outside;
  long i_tau = 0;               // ceil(N * cdf(tau)), 1-based
  double bound = 0.0;           // C * (bulk or N^{-2/3} scale); 0 for internal edges
  // Internal edges: allowed window [beta - 2 eps, beta + delta] u [alpha - delta, alpha + 2 eps].
  std::vector<Interval> allowed;
  std::string note;
};

struct GapWindow {
  std::size_t index = 0;        // k = 0..K
  double lo = 0.0;              // beta_k + delta_k (-inf for k = 0)
  double hi = 0.0;              // alpha_{k+1} - delta_k (+inf for k = K)
  double delta = 0.0;
  bool outer = false;
};

struct RigidityPlan {
  int n = 0;
  double gamma = 0.1;
  std::vector<RigidityTarget> targets;
  std::vector<GapWindow> gaps;
};

/// Classify every tau (bulk: [alpha_k + eps_{k-1}, beta_k - eps_k]; extreme
/// edge: within eps_0 of alpha_1 or beta_K; internal edge: within eps_k of a
/// gap), assign i(tau) and the bound, and build the delta_k-shrunken gaps.
RigidityPlan plan_rigidity(const DosCurve& dos, const SupportStructure& support, const std::vector<double>& tau_set,
                           int n, double gamma, const CheckPolicy& policy = {}, double delta = 0.025);

struct RigidityRecord {
  std::size_t sample = 0;
  double tau = 0.0;
  TauRegion region = TauRegion::outside;
  long i_tau = 0;
  double lambda_observed = 0.0;
  double deviation = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct GapRecord {
  std::size_t sample = 0;
  std::size_t gap = 0;
  bool outer = false;
  long count = 0;
};

struct RigidityReport {
  RigidityPlan plan;
  std::vector<RigidityRecord> records;
  std::vector<GapRecord> gap_records;
  [[nodiscard]] FractionCheck fraction(TauRegion region, double required) const;
  // Samples with zero eigenvalues in every (internal, or all) shrunken gap.
  [[nodiscard]] std::size_t empty_gap_samples(bool include_outer) const;
  [[nodiscard]] std::size_t samples() const;
};

void rigidity_sample(const RigidityPlan& plan, const RVector& eigenvalues, std::size_t sample_index,
                     RigidityReport& report);
RigidityReport rigidity_check(const std::vector<RVector>& spectra, const RigidityPlan& plan);

// ---------------------------------------------------------------------------
// Delocalization

struct DelocalizationRecord {
  std::size_t sample = 0;
  double max_scaled = 0.0;  // sqrt(N) max_{i,b} |b . u_i|
  bool exceeds = false;     // > C log N
};

/// Probes are the standard basis plus `random_probes` random unit vectors
/// drawn from `probe_seed`.
DelocalizationRecord delocalization_sample(const MatrixSample& sample, int random_probes, std::uint64_t probe_seed,
                                           double c_log, std::size_t sample_index = 0);

// Same statistic for a given eigenvector matrix (the negative control feeds
// the identity).
double delocalization_statistic(const CMatrix& eigenvectors, const CMatrix& probes);

struct DelocalizationReport {
  std::vector<DelocalizationRecord> records;
  double threshold = 0.0;
  FractionCheck check;
};

DelocalizationReport summarize_delocalization(std::vector<DelocalizationRecord> records, int n, double c_log,
                                              double required);

// ---------------------------------------------------------------------------
// Anisotropic law

struct ProbePair {
  CVector w;
  CVector v;
};

// Random orthogonal unit pairs (Gaussian directions, Gram-Schmidt).
std::vector<ProbePair> random_orthogonal_pairs(int n, int count, std::uint64_t seed);

struct AnisotropicRecord {
  std::size_t sample = 0;
  SpectralPoint z;
  double error = 0.0;   // |<w, G v> - sum_i m_i conj(w_i) v_i|
  double bound = 0.0;   // C (sqrt(rho/(N eta)) + 1/(N eta) + min{1/sqrt(N eta), kappa/(N eta)})
  bool pass = false;
};

// <w, G v> from the sample's eigenvectors.
Complex generalized_resolvent_entry(const MatrixSample& sample, SpectralPoint z, const CVector& w, const CVector& v);

std::vector<AnisotropicRecord> anisotropic_sample(const MatrixSample& sample, const QveSolution& m,
                                                  const std::vector<ProbePair>& pairs, double kappa,
                                                  const CheckPolicy& policy = {}, std::size_t sample_index = 0);

// ---------------------------------------------------------------------------
// Gap statistics

struct GapStatisticsOptions {
  Interval window{-0.5, 0.5};
  std::optional<Interval> reference_window;  // default: same window
  double min_rho = 0.05;
  std::size_t min_pool = 1000;
};

struct BumpObservable {
  double center = 1.0;
  double width = 0.5;
  [[nodiscard]] double operator()(double s) const;
};

std::vector<BumpObservable> default_bumps();

struct BumpComparison {
  BumpObservable bump;
  double mean_model = 0.0;
  double se_model = 0.0;
  double mean_reference = 0.0;
  double se_reference = 0.0;
  [[nodiscard]] double pooled_se() const;
  [[nodiscard]] double z_score() const;
};

struct GapStatistics {
  std::vector<double> model_gaps;      // sorted
  std::vector<double> reference_gaps;  // sorted
  std::size_t model_samples = 0;
  std::size_t reference_samples = 0;
  double ks_distance = 0.0;
  bool inconclusive = false;
  std::vector<BumpComparison> bumps;
  std::string note;
  // Empirical CDFs of both pools on a shared grid.
  void cdf_table(std::ostream& os, std::size_t points = 200) const;
};

// Two-sample Kolmogorov-Smirnov distance sup_x |F_a(x) - F_b(x)|.
double ks_distance(const std::vector<double>& a, const std::vector<double>& b);

// Semicircle density sqrt(4 - x^2)/(2 pi).
double semicircle_density(double x);

// Rescaled consecutive gaps N rho(lambda_i)(lambda_{i+1} - lambda_i) with
// lambda_i in the window and rho(lambda_i) >= min_rho.
std::vector<double> rescaled_gaps(const RVector& eigenvalues, const std::function<double(double)>& rho,
                                  const Interval& window, double min_rho);

/// Pool the model gaps (rho from the DOS curve) and the reference gaps (rho
/// from the semicircle), compare with the two-sample KS distance and the
/// batch-means bump expectations (one batch per sample).
GapStatistics gap_statistics(const std::vector<RVector>& model_spectra, const std::vector<RVector>& reference_spectra,
                             const DosCurve& dos, const GapStatisticsOptions& options = {});

// ---------------------------------------------------------------------------
// Measure distance

struct MeasureDistance {
  double left = 0.0;        // |nu1([t1, t2]) - nu2([t1, t2])|
  double boundary = 0.0;    // nu1([t1 - eta1, t1]) + nu1([t2, t2 + eta2])
  double j1 = 0.0;
  double j2 = 0.0;
  double j3 = 0.0;
  [[nodiscard]] double right() const { return boundary + j1 + j2 + j3; }
};

/// Right side of the Stieltjes-transform bound on |nu1 - nu2|([t1, t2]) with
/// constant 1: nu1 is the density of states (mass from `dos`, Stieltjes
/// transform <m> from the QVE) and nu2 the empirical measure of `eigenvalues`.
/// J-integrals by composite 10-point Gauss-Legendre, `panels_per_scale`
/// panels per length eta (or eps) in omega and log-spaced panels in eta.
MeasureDistance stieltjes_measure_distance(const RVector& eigenvalues, const VarianceProfile& profile,
                                           const DosCurve& dos, const Interval& interval, double eta1, double eta2,
                                           double eps, int panels_per_scale = 2, const SolverConfig& config = {});

/// Variant with a caller-supplied Stieltjes transform of nu1.
MeasureDistance stieltjes_measure_distance(const RVector& eigenvalues,
                                           const std::function<Complex(Complex)>& m_nu1,
                                           const std::function<double(double, double)>& nu1_mass,
                                           const Interval& interval, double eta1, double eta2, double eps,
                                           int panels_per_scale = 2);

}  // namespace qvelab
