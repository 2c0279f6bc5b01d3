#include "qvelab/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace qvelab::io {

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("key '") + key + "': " + e.what());
  }
}

template <typename T>
T require_key(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InvalidInput(std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("key '") + key + "': " + e.what());
  }
}

ModelParams params_from_json(const json& j, ModelParams fallback) {
  fallback.p = get_or(j, "p", fallback.p);
  fallback.big_p = get_or(j, "P", fallback.big_p);
  fallback.l = get_or(j, "L", fallback.l);
  fallback.q = get_or(j, "q", fallback.q);
  return fallback;
}

VarianceProfile preset_from_json(const json& j) {
  const auto name = require_key<std::string>(j, "preset");
  const int n = require_key<int>(j, "n");
  if (n < 1) throw InvalidInput("profile: n must be positive");
  VarianceProfile base = [&] {
    if (name == "semicircle") return presets::semicircle(n);
    if (name == "gap-profile") return presets::gap_profile(n);
    if (name == "qfull-two-block") return presets::qfull_two_block(n);
    if (name == "cusp-family") return presets::cusp_family(n, require_key<double>(j, "intra2"));
    if (name == "two-block")
      return presets::two_block(n, require_key<double>(j, "fraction"), require_key<double>(j, "intra1"),
                                require_key<double>(j, "inter"), require_key<double>(j, "intra2"));
    throw InvalidInput("unknown profile preset '" + name + "'");
  }();
  if (j.contains("p") || j.contains("P") || j.contains("L") || j.contains("q"))
    return base.with_params(params_from_json(j, base.params()));
  return base;
}

}  // namespace

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json profile_to_json(const VarianceProfile& profile, bool include_entries) {
  const auto& spec = profile.spec();
  json j;
  j["n"] = profile.n();
  j["kind"] = to_string(spec.kind);
  j["p"] = spec.params.p;
  j["P"] = spec.params.big_p;
  j["L"] = spec.params.l;
  j["q"] = spec.params.q;
  j["hash"] = hash_hex(profile.hash());
  j["rescale_factor"] = profile.rescale_factor();
  if (spec.kind == ProfileKind::block_constant) {
    json v = json::array();
    for (Eigen::Index a = 0; a < spec.blocks.variances.rows(); ++a) {
      json row = json::array();
      for (Eigen::Index b = 0; b < spec.blocks.variances.cols(); ++b) row.push_back(spec.blocks.variances(a, b));
      v.push_back(row);
    }
    j["blocks"] = {{"sizes", spec.blocks.sizes}, {"variances", v}, {"scaled_by_n", spec.blocks.scaled_by_n}};
  }
  if (spec.kind == ProfileKind::kernel_discretized) {
    j["kernel"] = {{"name", spec.kernel.name}, {"params", spec.kernel.params}};
    if (spec.kernel.fn) j["kernel"]["note"] = "custom function; not reproducible from this record";
  }
  if (spec.rescale) j["rescale"] = true;
  if (include_entries || spec.kind == ProfileKind::custom_matrix) {
    const int n = profile.n();
    std::vector<double> e;
    e.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) e.push_back(profile(r, c));
    j["entries"] = e;
    if (spec.kind == ProfileKind::custom_matrix) j["entries_are_final"] = true;
  }
  return j;
}

VarianceProfile profile_from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("profile: expected an object");
  if (j.contains("preset")) return preset_from_json(j);
  ProfileSpec spec;
  spec.n = require_key<int>(j, "n");
  if (spec.n < 1) throw InvalidInput("profile: n must be positive");
  spec.kind = profile_kind_from_string(require_key<std::string>(j, "kind"));
  spec.params = params_from_json(j, ModelParams{});
  spec.rescale = get_or(j, "rescale", false);
  switch (spec.kind) {
    case ProfileKind::stochastic_constant: break;
    case ProfileKind::block_constant: {
      const json& b = j.at("blocks");
      spec.blocks.sizes = require_key<std::vector<int>>(b, "sizes");
      const auto rows = require_key<std::vector<std::vector<double>>>(b, "variances");
      spec.blocks.variances.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t a = 0; a < rows.size(); ++a) {
        if (rows[a].size() != rows.size()) throw InvalidInput("profile: block variances must be square");
        for (std::size_t c = 0; c < rows.size(); ++c)
          spec.blocks.variances(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) = rows[a][c];
      }
      spec.blocks.scaled_by_n = get_or(b, "scaled_by_n", false);
      break;
    }
    case ProfileKind::kernel_discretized: {
      const json& k = j.at("kernel");
      spec.kernel.name = require_key<std::string>(k, "name");
      spec.kernel.params = get_or(k, "params", std::map<std::string, double>{});
      break;
    }
    case ProfileKind::custom_matrix: {
      const auto e = require_key<std::vector<double>>(j, "entries");
      const auto n = static_cast<std::size_t>(spec.n);
      if (e.size() != n * n) throw InvalidInput("profile: entries must hold n*n values");
      spec.entries.resize(spec.n, spec.n);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
          spec.entries(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = e[r * n + c];
      break;
    }
  }
  return build_profile(spec);
}

json to_json(const SolverConfig& c) {
  return {{"tol", c.tol},
          {"max_iter", c.max_iter},
          {"damping", c.damping},
          {"newton_fallback", c.newton_fallback},
          {"stall_window", c.stall_window},
          {"newton_max_steps", c.newton_max_steps}};
}

SolverConfig solver_config_from_json(const json& j) {
  SolverConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw InvalidInput("solver: expected an object");
  c.tol = get_or(j, "tol", c.tol);
  c.max_iter = get_or(j, "max_iter", c.max_iter);
  c.damping = get_or(j, "damping", c.damping);
  c.newton_fallback = get_or(j, "newton_fallback", c.newton_fallback);
  c.stall_window = get_or(j, "stall_window", c.stall_window);
  c.newton_max_steps = get_or(j, "newton_max_steps", c.newton_max_steps);
  validate(c);
  return c;
}

json to_json(const QveSolution& s, bool include_vector) {
  json j{{"tau", s.point.tau},
         {"eta", s.point.eta},
         {"residual", s.residual},
         {"iterations", s.iterations},
         {"converged", s.converged},
         {"used_newton", s.used_newton},
         {"avg_re", s.average().real()},
         {"avg_im", s.average().imag()},
         {"density", s.density()}};
  if (!s.message.empty()) j["message"] = s.message;
  if (include_vector) {
    std::vector<double> re(static_cast<std::size_t>(s.m.size())), im(re.size());
    for (Eigen::Index i = 0; i < s.m.size(); ++i) {
      re[static_cast<std::size_t>(i)] = s.m(i).real();
      im[static_cast<std::size_t>(i)] = s.m(i).imag();
    }
    j["re_m"] = re;
    j["im_m"] = im;
  }
  return j;
}

void write_sweep_jsonl(const SweepResult& sweep, std::ostream& os) {
  for (const auto& s : sweep.solutions) os << to_json(s).dump() << '\n';
}

json to_json(const DosCurve& dos, bool include_samples) {
  json j{{"schema", "dos-curve/1"},
         {"points", dos.size()},
         {"eta_used", dos.eta_used},
         {"eta_solved", dos.eta_solved},
         {"holes", dos.holes},
         {"integral", dos.complete() && dos.size() > 1 ? json(dos.integral()) : json(nullptr)}};
  if (!dos.tau.empty()) j["range"] = {dos.tau.front(), dos.tau.back()};
  if (include_samples) {
    j["tau"] = dos.tau;
    json rho = json::array();
    for (double r : dos.rho) rho.push_back(finite_or_null(r));
    j["rho"] = rho;
  }
  return j;
}

json to_json(const SupportStructure& support) {
  json intervals = json::array();
  for (const auto& iv : support.intervals) intervals.push_back({{"lo", iv.lo}, {"hi", iv.hi}});
  json gaps = json::array();
  for (const auto& g : support.gaps()) gaps.push_back({{"lo", g.lo}, {"hi", g.hi}, {"length", g.length()}});
  json minima = json::array();
  for (const auto& m : support.minima)
    minima.push_back({{"tau", m.tau}, {"kind", to_string(m.kind)}, {"inward", m.inward}, {"interval", m.interval}});
  return {{"schema", "support/1"},
          {"intervals", intervals},
          {"gaps", gaps},
          {"minima", minima},
          {"short_intervals", support.short_intervals()},
          {"delta_star", support.delta_star},
          {"threshold", support.threshold},
          {"resolution", support.resolution},
          {"warnings", support.warnings}};
}

json to_json(const ShapeFit& fit) {
  return {{"tau0", fit.minimum.tau},
          {"kind", to_string(fit.minimum.kind)},
          {"side", fit.side},
          {"regime", fit.regime},
          {"exponent", finite_or_null(fit.exponent)},
          {"prefactor", finite_or_null(fit.prefactor)},
          {"residual", finite_or_null(fit.residual)},
          {"points", fit.points},
          {"reliable", fit.reliable}};
}

json to_json(const FractionCheck& f) {
  return {{"trials", f.trials}, {"passed", f.passed}, {"fraction", f.fraction()}, {"required", f.required},
          {"pass", f.ok()}};
}

json to_json(const MomentReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"k", row.k},
                    {"variance", row.variance},
                    {"abs_ratio", row.abs_ratio},
                    {"signed_ratio", row.signed_ratio},
                    {"count", row.count}});
  json worst = json::object();
  for (const auto& [k, v] : r.worst_ratio) worst[std::to_string(k)] = v;
  return {{"schema", "moments/1"},
          {"rows", rows},
          {"worst_ratio", worst},
          {"zero_variance_entries_vanish", r.zero_variance_entries_vanish},
          {"note", r.note}};
}

json to_json(const ResolventData& r) {
  json j{{"tau", r.z.tau}, {"eta", r.z.eta}, {"err_d", r.err_d}, {"avg_err", r.avg_err}};
  j["err_o"] = r.err_o ? json(*r.err_o) : json(nullptr);
  j["ward_max_rel"] = r.ward_max_rel ? json(*r.ward_max_rel) : json(nullptr);
  return j;
}

json to_json(const PerturbationVector& d) {
  return {{"tau", d.z.tau},
          {"eta", d.z.eta},
          {"sup_norm", d.sup_norm},
          {"lemma_bound", d.lemma_bound},
          {"cross_checked", d.cross_checked.size()},
          {"max_rel_discrepancy", d.max_rel_discrepancy}};
}

json to_json(const CountingReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"sample", row.sample},
                    {"tau", row.tau},
                    {"count", row.count},
                    {"expected", row.expected},
                    {"discrepancy", row.discrepancy},
                    {"bound", row.bound},
                    {"pass", row.pass}});
  return {{"schema", "counting/1"}, {"rows", rows}, {"check", to_json(r.check)}};
}

json to_json(const RigidityReport& r) {
  json targets = json::array();
  for (const auto& t : r.plan.targets) {
    json a = json::array();
    for (const auto& iv : t.allowed) a.push_back({iv.lo, iv.hi});
    targets.push_back({{"tau", t.tau},
                       {"region", to_string(t.region)},
                       {"i_tau", t.i_tau},
                       {"bound", t.bound},
                       {"allowed", a},
                       {"note", t.note}});
  }
  json gaps = json::array();
  for (const auto& g : r.plan.gaps)
    gaps.push_back({{"index", g.index},
                    {"lo", finite_or_null(g.lo)},
                    {"hi", finite_or_null(g.hi)},
                    {"delta", g.delta},
                    {"outer", g.outer}});
  json counts = json::array();
  for (const auto& g : r.gap_records)
    counts.push_back({{"sample", g.sample}, {"gap", g.gap}, {"outer", g.outer}, {"count", g.count}});
  return {{"schema", "rigidity/1"},
          {"n", r.plan.n},
          {"gamma", r.plan.gamma},
          {"targets", targets},
          {"gaps", gaps},
          {"gap_counts", counts},
          {"samples", r.samples()},
          {"empty_internal_gap_samples", r.empty_gap_samples(false)},
          {"empty_all_gap_samples", r.empty_gap_samples(true)}};
}

json to_json(const DelocalizationReport& r) {
  json rows = json::array();
  for (const auto& rec : r.records)
    rows.push_back({{"sample", rec.sample}, {"max_scaled", rec.max_scaled}, {"exceeds", rec.exceeds}});
  return {{"schema", "delocalization/1"}, {"threshold", r.threshold}, {"records", rows}, {"check", to_json(r.check)}};
}

json to_json(const AnisotropicRecord& r) {
  return {{"sample", r.sample}, {"tau", r.z.tau}, {"eta", r.z.eta}, {"error", r.error}, {"bound", r.bound},
          {"pass", r.pass}};
}

json to_json(const GapStatistics& g) {
  json bumps = json::array();
  for (const auto& b : g.bumps)
    bumps.push_back({{"center", b.bump.center},
                     {"width", b.bump.width},
                     {"mean_model", b.mean_model},
                     {"se_model", finite_or_null(b.se_model)},
                     {"mean_reference", b.mean_reference},
                     {"se_reference", finite_or_null(b.se_reference)},
                     {"z_score", finite_or_null(b.z_score())}});
  return {{"schema", "gap-statistics/1"},
          {"model_gaps", g.model_gaps.size()},
          {"reference_gaps", g.reference_gaps.size()},
          {"model_samples", g.model_samples},
          {"reference_samples", g.reference_samples},
          {"ks_distance", g.ks_distance},
          {"inconclusive", g.inconclusive},
          {"bumps", bumps},
          {"note", g.note}};
}

json to_json(const MeasureDistance& m) {
  return {{"left", m.left}, {"boundary", m.boundary}, {"j1", m.j1}, {"j2", m.j2}, {"j3", m.j3}, {"right", m.right()}};
}

}  // namespace qvelab::io
