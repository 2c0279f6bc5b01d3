#pragma once

#include <iosfwd>
#include <json.hpp>

#include "qvelab/dos_analysis.hpp"
#include "qvelab/ensemble_sampler.hpp"
#include "qvelab/qve_solver.hpp"
#include "qvelab/spectral_verify.hpp"
#include "qvelab/variance_profile.hpp"

// JSON views of the library types. Report objects carry "schema": "<name>/1".
namespace qvelab::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Profile schema: {n, kind, p, P, L, q, entries?, blocks?, kernel?, rescale?}.
///   blocks: {sizes: [...], variances: [[...]], scaled_by_n: bool}
///   kernel: {name, params: {...}}
///   entries: row-major N*N list (custom-matrix; optional for other kinds)
/// A "preset" key selects a built-in profile instead:
///   {"preset": "semicircle" | "gap-profile" | "qfull-two-block", "n": N}
///   {"preset": "cusp-family", "n": N, "intra2": c}
///   {"preset": "two-block", "n": N, "fraction", "intra1", "inter", "intra2"}
json profile_to_json(const VarianceProfile& profile, bool include_entries = false);
VarianceProfile profile_from_json(const json& j);
std::string hash_hex(std::uint64_t h);

json to_json(const SolverConfig& c);
SolverConfig solver_config_from_json(const json& j);

/// {tau, eta, re_m[], im_m[], residual, iterations, converged}
json to_json(const QveSolution& s, bool include_vector = true);
// One JSON line per eta level.
void write_sweep_jsonl(const SweepResult& sweep, std::ostream& os);

json to_json(const DosCurve& dos, bool include_samples = false);
json to_json(const SupportStructure& support);
json to_json(const ShapeFit& fit);
json to_json(const FractionCheck& f);

json to_json(const MomentReport& r);
json to_json(const ResolventData& r);
json to_json(const PerturbationVector& d);
json to_json(const CountingReport& r);
json to_json(const RigidityReport& r);
json to_json(const DelocalizationReport& r);
json to_json(const AnisotropicRecord& r);
json to_json(const GapStatistics& g);
json to_json(const MeasureDistance& m);

}  // namespace qvelab::io
