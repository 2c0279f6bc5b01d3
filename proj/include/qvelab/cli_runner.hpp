#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qvelab/serialization.hpp"

namespace qvelab::cli {

using io::json;

enum class Command {
  qve_solve,
  dos,
  support,
  verify_local_law,
  rigidity,
  delocalization,
  anisotropic,
  universality,
  envelope,
  measure_distance
};
std::string to_string(Command c);
Command command_from_string(const std::string& name);
std::vector<std::string> command_names();

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_config_error = 2, exit_not_converged = 3 };

/// Thrown for anything wrong with the config; maps to exit 2.
struct ConfigError : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct EnsembleSpec {
  int samples = 10;
  std::uint64_t seed = 1;
  SymmetryClass symmetry = SymmetryClass::real_symmetric;
  EntryLaw law = EntryLaw::gaussian;
  double re_fraction = 0.5;
};

struct DosSpec {
  std::vector<double> tau;  // default: 2001 points on [-R, R], R = 2 sqrt(max row sum of S) + 0.1
  double eta = 1e-4;
  bool extrapolate = false;
  double normalization_tol = 1e-3;
  double delta = 0.025;     // local gap scale used by kappa and the rigidity plan
  double gamma = 0.1;
  bool refine_edges = false;
};

struct LocalLawSpec {
  std::vector<double> tau;      // default 10 points on [-1.5, 1.5]
  double eta_exponent = -0.8;   // eta = N^eta_exponent unless eta is set
  std::optional<double> eta;
  std::string bound = "bulk";   // "bulk" or "general" (rho- and kappa-dependent)
  bool ward = true;
  double ward_tol = 1e-10;
  bool perturbation = false;
  std::vector<int> cross_check_rows;
  std::optional<double> scan_tau;  // local-law-scan over grid.eta for sample 0
  std::vector<double> scan_eta;
};

struct RigiditySpec {
  std::vector<double> tau;      // bulk targets
  bool edge_targets = true;     // add alpha_1 + eps_0/2 and beta_K
  double required_bulk = 0.9;
  double required_edge = 0.9;
  bool include_outer_gaps = false;
};

struct DelocalizationSpec {
  double c_log = 3.0;
  int random_probes = 0;
  double required = 0.99;
};

struct AnisotropicSpec {
  std::vector<double> tau;
  double eta_exponent = -0.5;
  std::optional<double> eta;
  int pairs = 5;
};

struct UniversalitySpec {
  int reference_samples = 0;    // 0: same as ensemble.samples
  std::uint64_t reference_seed = 0x5eed;
  bool null_check = true;
  std::uint64_t null_seed = 0xa11ce;
  double ks_max = 0.05;
  double null_ks_max = 0.01;
  double bump_z_max = 3.0;
  GapStatisticsOptions gaps;
};

struct EnvelopeSpec {
  EnvelopeOptions options;
  int omega_points = 5;
  std::vector<double> eta;      // default 100 log points on [N^{-1+gamma}, 1]
};

struct MeasureDistanceSpec {
  std::vector<Interval> intervals;  // default five bulk intervals
  std::optional<double> eta1, eta2, eps;  // default N^{-1/2}
  int panels_per_scale = 2;
};

/// Top-level schema (JSON):
///   schema_version: 1                     (required)
///   profile: {...}                        (see io::profile_from_json)
///   solver: {...}                         (SolverConfig fields)
///   grid: {tau: G, eta: G}                G = [values] or {lo, hi, points, log?}
///   ensemble: {samples, seed, symmetry, law, re_fraction}
///   checks: {enabled, C, alpha}
///   dos, local_law, rigidity, delocalization, anisotropic, universality,
///   envelope, measure_distance: per-command blocks
///   output: directory (overridden by --out)
/// Unknown top-level keys are rejected.
struct ExperimentConfig {
  ExperimentConfig(json raw_config, VarianceProfile p) : raw(std::move(raw_config)), profile(std::move(p)) {}

  json raw;                      // normalized config, hashed into the manifest
  VarianceProfile profile;
  SolverConfig solver;
  std::vector<double> tau_grid;
  std::vector<double> eta_grid;
  EnsembleSpec ensemble;
  bool checks_enabled = true;
  CheckPolicy policy;
  DosSpec dos;
  LocalLawSpec local_law;
  RigiditySpec rigidity;
  DelocalizationSpec delocalization;
  AnisotropicSpec anisotropic;
  UniversalitySpec universality;
  EnvelopeSpec envelope;
  MeasureDistanceSpec measure_distance;
  std::string output_dir = "out";
};

ExperimentConfig parse_config(const json& j, std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override = std::nullopt);
std::string config_hash(const ExperimentConfig& config);

/// Per-sample seed: seed XOR sample index.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return seed ^ index; }

struct RunOptions {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> out_dir;
  int workers = 1;
  std::optional<std::uint64_t> seed;
  bool strict = false;  // stop at the first failing check
};

struct RunResult {
  int exit_code = exit_ok;
  std::string message;
  std::vector<std::string> outputs;  // file names relative to the output directory
};

/// Parse, validate, run the pipeline for `command`, write artifacts and the
/// manifest. Never throws; errors become exit codes with `message` set.
RunResult run(Command command, const RunOptions& options, std::ostream& log);
RunResult run(Command command, const ExperimentConfig& config, const std::filesystem::path& out_dir, int workers,
              bool strict, std::ostream& log);

enum class FigureKind { dos_curve, local_law_scan, rigidity_scatter, gap_cdf };
std::string to_string(FigureKind k);
FigureKind figure_kind_from_string(const std::string& name);

/// CSV with a header row. Columns:
///   dos-curve:         tau,rho
///   local-law-scan:    eta,err_d,bound
///   rigidity-scatter:  sample,tau,region,i_tau,lambda,deviation,bound,pass
///   gap-cdf:           gap,cdf_model,cdf_reference
/// Throws InvalidInput when the report's schema does not carry that data.
void emit_figure_data(const json& report, FigureKind kind, std::ostream& os);

}  // namespace qvelab::cli
