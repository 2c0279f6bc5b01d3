#include "qvelab/cli_runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#ifndef QVELAB_VERSION
#define QVELAB_VERSION "unknown"
#endif

namespace qvelab::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<Command, std::string>>& command_table() {
  static const std::vector<std::pair<Command, std::string>> t = {
      {Command::qve_solve, "qve-solve"},
      {Command::dos, "dos"},
      {Command::support, "support"},
      {Command::verify_local_law, "verify-local-law"},
      {Command::rigidity, "rigidity"},
      {Command::delocalization, "delocalization"},
      {Command::anisotropic, "anisotropic"},
      {Command::universality, "universality"},
      {Command::envelope, "envelope"},
      {Command::measure_distance, "measure-distance"}};
  return t;
}

// ---------------------------------------------------------------------------
// Config parsing helpers

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <typename T>
T read(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

template <typename T>
std::optional<T> read_opt(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return read<T>(j, key, T{}, where);
}

std::uint64_t read_seed(const json& j, const char* key, std::uint64_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  if (v.is_string()) {
    try {
      std::size_t pos = 0;
      const auto s = v.get<std::string>();
      const auto r = std::stoull(s, &pos, 0);
      if (pos == s.size()) return r;
    } catch (const std::exception&) {
    }
  }
  throw ConfigError(where + "." + key + ": expected a non-negative integer");
}

void positive(double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(what + " must be positive");
}

std::vector<double> read_grid(const json& j, const std::string& where) {
  if (j.is_array()) {
    std::vector<double> g;
    try {
      g = j.get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError(where + ": expected a list of numbers");
    }
    for (double v : g)
      if (!std::isfinite(v)) throw ConfigError(where + ": non-finite value");
    return g;
  }
  check_keys(j, {"lo", "hi", "points", "log"}, where);
  if (!j.contains("lo") || !j.contains("hi") || !j.contains("points"))
    throw ConfigError(where + ": grid object needs lo, hi and points");
  const double lo = read<double>(j, "lo", 0.0, where);
  const double hi = read<double>(j, "hi", 0.0, where);
  const int points = read<int>(j, "points", 0, where);
  const bool log = read<bool>(j, "log", false, where);
  if (points < 1) throw ConfigError(where + ".points must be at least 1");
  if (points == 1) return {lo};
  if (!(hi > lo)) throw ConfigError(where + ": need hi > lo");
  if (log && !(lo > 0.0)) throw ConfigError(where + ": a log grid needs lo > 0");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) {
    const double t = static_cast<double>(k) / (points - 1);
    g[static_cast<std::size_t>(k)] = log ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
  }
  g.back() = hi;
  return g;
}

std::vector<double> linspace(double lo, double hi, int points) {
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) g[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / std::max(1, points - 1);
  return g;
}

std::vector<double> logspace(double lo, double hi, int points) {
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k)
    g[static_cast<std::size_t>(k)] = lo * std::pow(hi / lo, static_cast<double>(k) / std::max(1, points - 1));
  return g;
}

double default_radius(const VarianceProfile& p) {
  const RVector rows = p.s().rowwise().sum();
  return 2.0 * std::sqrt(rows.maxCoeff()) + 0.1;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Worker pool. Task i writes slot i only, so the worker count never changes
// the collected results.

template <typename R, typename F>
std::vector<R> parallel_map(std::size_t count, int workers, F&& task) {
  std::vector<std::optional<R>> slots(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (error) return;
      }
      try {
        slots[i].emplace(task(i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int k = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (k == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < k; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Manifest and artifact writing

class Session {
 public:
  Session(Command command, const ExperimentConfig& config, fs::path dir, bool strict, std::ostream& log)
      : config_(config), dir_(std::move(dir)), strict_(strict), log_(log) {
    fs::create_directories(dir_);
    manifest_ = {{"schema", "manifest/1"},
                 {"command", to_string(command)},
                 {"config_hash", config_hash(config)},
                 {"code_version", QVELAB_VERSION},
                 {"started", utc_now()},
                 {"finished", nullptr},
                 {"status", "running"},
                 {"exit_code", nullptr},
                 {"strict", strict},
                 {"stages", json::array()},
                 {"outputs", json::array()}};
    write_text("config.json", config.raw.dump(2) + "\n");
    flush_manifest();
  }

  const ExperimentConfig& config() const { return config_; }
  int n() const { return config_.profile.n(); }

  void stage(const std::string& name, const std::string& status, const std::string& detail = {}) {
    json s{{"name", name}, {"status", status}};
    if (!detail.empty()) s["detail"] = detail;
    manifest_["stages"].push_back(s);
    log_ << "[" << status << "] " << name;
    if (!detail.empty()) log_ << ": " << detail;
    log_ << '\n';
    flush_manifest();
  }

  // Records a check stage; returns false when the run should stop.
  bool check(const std::string& name, bool pass, const std::string& detail) {
    if (!pass) failed_ = true;
    stage("check:" + name, pass ? "pass" : "fail", detail);
    return pass || !strict_;
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << text;
    if (std::find(outputs_.begin(), outputs_.end(), name) == outputs_.end()) outputs_.push_back(name);
  }
  void write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }
  void write_figure(const std::string& name, const json& report, FigureKind kind) {
    std::ostringstream os;
    emit_figure_data(report, kind, os);
    write_text(name, os.str());
  }

  bool failed() const { return failed_; }

  RunResult finish(int code, const std::string& message) {
    manifest_["finished"] = utc_now();
    manifest_["exit_code"] = code;
    manifest_["status"] = code == exit_ok ? "ok" : code == exit_check_failed ? "check-failed"
                                               : code == exit_not_converged ? "not-converged"
                                                                            : "error";
    if (!message.empty()) manifest_["message"] = message;
    json inv = json::array();
    for (const auto& name : outputs_) {
      std::ifstream f(dir_ / name, std::ios::binary);
      std::ostringstream ss;
      ss << f.rdbuf();
      inv.push_back({{"name", name}, {"bytes", ss.str().size()}, {"fnv1a", io::hash_hex(fnv1a(ss.str()))}});
    }
    manifest_["outputs"] = inv;
    flush_manifest();
    RunResult r{code, message, outputs_};
    r.outputs.push_back("manifest.json");
    return r;
  }

 private:
  void flush_manifest() {
    std::ofstream f(dir_ / "manifest.json", std::ios::binary);
    f << manifest_.dump(2) << '\n';
  }

  const ExperimentConfig& config_;
  fs::path dir_;
  bool strict_;
  std::ostream& log_;
  json manifest_;
  std::vector<std::string> outputs_;
  bool failed_ = false;
};

struct Stop {};  // strict-mode early exit

void require(Session& s, const std::string& name, bool pass, const std::string& detail) {
  if (!s.check(name, pass, detail)) throw Stop{};
}

std::string frac_detail(const FractionCheck& f) {
  std::ostringstream os;
  os << f.passed << "/" << f.trials << " (" << std::setprecision(4) << f.fraction() << ", need " << f.required << ")";
  return os.str();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// Shared DOS/support pipeline.
struct Landscape {
  DosCurve dos;
  SupportStructure support;
};

Landscape landscape(Session& s) {
  const auto& c = s.config();
  Landscape l;
  l.dos = density_of_states(c.profile, c.dos.tau, c.dos.eta, c.dos.extrapolate, c.solver);
  if (!l.dos.complete())
    throw NumericalFailure("density of states: " + std::to_string(l.dos.holes.size()) + " unresolved grid points");
  l.support = detect_support(l.dos);
  if (c.dos.refine_edges) l.support = refine_edges(c.profile, l.support, {}, c.solver);
  s.stage("dos", "done", std::to_string(l.dos.size()) + " points, " + std::to_string(l.support.intervals.size()) +
                             " support intervals");
  return l;
}

QveSolution solve_checked(const ExperimentConfig& c, SpectralPoint z) {
  auto m = solve_robust(c.profile, z, c.solver);
  if (!m.converged)
    throw NumericalFailure("QVE did not converge at tau=" + num(z.tau) + ", eta=" + num(z.eta) + ": " + m.message);
  return m;
}

MatrixSample draw(const ExperimentConfig& c, std::size_t i) {
  return sample(c.profile, c.ensemble.symmetry, c.ensemble.law, sample_seed(c.ensemble.seed, i),
                SamplerOptions{c.ensemble.re_fraction});
}

// ---------------------------------------------------------------------------
// Commands

void cmd_qve_solve(Session& s) {
  const auto& c = s.config();
  std::vector<double> etas = c.eta_grid;
  std::sort(etas.begin(), etas.end(), std::greater<>());
  std::ostringstream lines;
  std::size_t total = 0, converged = 0, upper = 0;
  double worst = 0.0;
  std::vector<double> failed_tau;
  for (double tau : c.tau_grid) {
    const auto sweep = solve_sweep(c.profile, tau, etas, c.solver);
    io::write_sweep_jsonl(sweep, lines);
    for (const auto& sol : sweep.solutions) {
      ++total;
      if (!sol.converged) continue;
      ++converged;
      worst = std::max(worst, sol.residual);
      if ((sol.m.array().imag() > 0.0).all()) ++upper;
    }
    if (!sweep.complete()) failed_tau.push_back(tau);
  }
  s.write_text("solutions.jsonl", lines.str());
  json report{{"schema", "qve-solve/1"},
              {"profile", io::profile_to_json(c.profile)},
              {"solver", io::to_json(c.solver)},
              {"points", total},
              {"converged", converged},
              {"upper_half_plane", upper},
              {"max_residual", worst},
              {"failed_tau", failed_tau}};
  s.write_json("qve-solve.json", report);
  s.stage("solve", "done", std::to_string(converged) + "/" + std::to_string(total) + " converged");
  if (!failed_tau.empty() || converged < total || total < c.tau_grid.size() * etas.size())
    throw NumericalFailure("QVE sweep did not converge at " + std::to_string(failed_tau.size()) + " tau values");
  if (c.checks_enabled) {
    require(s, "residual", worst <= c.solver.tol, "max residual " + num(worst));
    require(s, "upper-half-plane", upper == converged, std::to_string(upper) + "/" + std::to_string(converged));
  }
}

void cmd_dos(Session& s, bool with_support) {
  const auto& c = s.config();
  const auto dos = density_of_states(c.profile, c.dos.tau, c.dos.eta, c.dos.extrapolate, c.solver);
  json report = io::to_json(dos, true);
  report["profile"] = io::profile_to_json(c.profile);
  s.write_json("dos.json", report);
  s.write_figure("dos.csv", report, FigureKind::dos_curve);
  if (!dos.complete())
    throw NumericalFailure("density of states: " + std::to_string(dos.holes.size()) + " unresolved grid points");
  s.stage("dos", "done", std::to_string(dos.size()) + " points");
  if (with_support) {
    auto support = detect_support(dos);
    if (c.dos.refine_edges) support = refine_edges(c.profile, support, {}, c.solver);
    json sj = io::to_json(support);
    json fits = json::array();
    for (const auto& f : fit_edge_shapes(dos, support)) fits.push_back(io::to_json(f));
    sj["shape_fits"] = fits;
    s.write_json("support.json", sj);
    s.stage("support", "done", std::to_string(support.intervals.size()) + " intervals");
  }
  if (c.checks_enabled) {
    const double mass = dos.integral();
    require(s, "normalization", std::abs(mass - 1.0) <= c.dos.normalization_tol, "integral " + num(mass));
  }
}

struct LocalLawRow {
  std::size_t sample;
  double tau;
  double err_d;
  double err_o;
  double avg;
  double bound_d;
  double bound_avg;
  bool pass;
  std::optional<double> ward;
  std::optional<double> d_sup;
  double d_bound = 0.0;
  double d_lemma = 0.0;
  std::optional<double> d_discrepancy;
};

void cmd_local_law(Session& s, int workers) {
  const auto& c = s.config();
  const auto& o = c.local_law;
  const int n = s.n();
  const double eta = o.eta.value_or(std::pow(static_cast<double>(n), o.eta_exponent));
  std::optional<Landscape> land;
  if (o.bound == "general") land = landscape(s);

  std::vector<QveSolution> ms;
  std::vector<LocalLawBound> bounds;
  for (double tau : o.tau) {
    ms.push_back(solve_checked(c, {tau, eta}));
    const double rho = ms.back().density();
    if (land) {
      const double k = kappa(land->support, {tau, eta}, rho, n, c.dos.gamma, c.dos.delta).value;
      bounds.push_back(local_law_bound(rho, k, n, eta));
    } else {
      bounds.push_back(bulk_local_law_bound(n, eta));
    }
  }
  s.stage("qve", "done", std::to_string(ms.size()) + " spectral points at eta " + num(eta));
  const auto weights = default_weight_panel(n, c.ensemble.seed);
  const bool full = o.ward || o.perturbation;
  const bool keep = o.perturbation && !o.cross_check_rows.empty();

  auto rows = parallel_map<std::vector<LocalLawRow>>(
      static_cast<std::size_t>(c.ensemble.samples), workers, [&](std::size_t i) {
        const auto h = draw(c, i);
        std::vector<LocalLawRow> out;
        for (std::size_t k = 0; k < ms.size(); ++k) {
          const auto res = resolvent(h, ms[k].point, ms[k], weights, {full, keep});
          LocalLawRow r{};
          r.sample = i;
          r.tau = ms[k].point.tau;
          r.err_d = res.err_d;
          r.err_o = res.err_o.value_or(std::nan(""));
          r.avg = *std::max_element(res.avg_err.begin(), res.avg_err.end());
          r.bound_d = c.policy.c * bounds[k].entrywise;
          r.bound_avg = c.policy.c * bounds[k].averaged;
          r.pass = r.err_d <= r.bound_d && r.avg <= r.bound_avg;
          r.ward = res.ward_max_rel;
          if (o.perturbation) {
            const auto d = perturbation_d(h, res, c.profile, keep ? o.cross_check_rows : std::vector<int>{});
            r.d_sup = d.sup_norm;
            r.d_bound = c.policy.c * perturbation_bound(ms[k].density(), n, eta);
            r.d_lemma = c.policy.c * d.lemma_bound;
            if (keep) r.d_discrepancy = d.max_rel_discrepancy;
          }
          out.push_back(r);
        }
        h.release_spectrum();
        return out;
      });
  s.stage("samples", "done", std::to_string(c.ensemble.samples) + " samples");

  FractionCheck law{0, 0, 1.0 - c.policy.alpha}, dcheck{0, 0, 1.0 - c.policy.alpha},
      dlemma{0, 0, 1.0 - c.policy.alpha};
  double ward_worst = 0.0, disc_worst = 0.0;
  json records = json::array();
  for (const auto& per : rows)
    for (const auto& r : per) {
      ++law.trials;
      if (r.pass) ++law.passed;
      json rec{{"sample", r.sample},   {"tau", r.tau},         {"err_d", r.err_d},
               {"avg_err", r.avg},     {"bound_d", r.bound_d}, {"bound_avg", r.bound_avg},
               {"pass", r.pass}};
      if (std::isfinite(r.err_o)) rec["err_o"] = r.err_o;
      if (r.ward) {
        ward_worst = std::max(ward_worst, *r.ward);
        rec["ward_max_rel"] = *r.ward;
      }
      if (r.d_sup) {
        ++dcheck.trials;
        ++dlemma.trials;
        if (*r.d_sup <= r.d_bound) ++dcheck.passed;
        if (*r.d_sup <= r.d_lemma) ++dlemma.passed;
        rec["d_sup"] = *r.d_sup;
        rec["d_bound"] = r.d_bound;
      }
      if (r.d_discrepancy) disc_worst = std::max(disc_worst, *r.d_discrepancy);
      records.push_back(rec);
    }

  json report{{"schema", "local-law/1"},
              {"n", n},
              {"eta", eta},
              {"bound", o.bound},
              {"C", c.policy.c},
              {"alpha", c.policy.alpha},
              {"seed", c.ensemble.seed},
              {"profile_hash", io::hash_hex(c.profile.hash())},
              {"local_law", io::to_json(law)},
              {"records", records}};
  if (o.ward) report["ward"] = {{"max_rel", ward_worst}, {"tol", o.ward_tol}, {"pass", ward_worst <= o.ward_tol}};
  if (o.perturbation) {
    report["perturbation"] = {{"check", io::to_json(dcheck)}, {"with_im_g", io::to_json(dlemma)}};
    if (keep) report["perturbation"]["max_rel_discrepancy"] = disc_worst;
  }

  if (o.scan_tau && !o.scan_eta.empty()) {
    const auto h = draw(c, 0);
    json eta_col = json::array(), err_col = json::array(), bound_col = json::array();
    std::vector<double> etas = o.scan_eta;
    std::sort(etas.begin(), etas.end(), std::greater<>());
    for (double e : etas) {
      const auto m = solve_checked(c, {*o.scan_tau, e});
      const auto res = resolvent(h, m.point, m, weights, {false, false});
      double b;
      if (land) {
        const double rho = m.density();
        b = local_law_bound(rho, kappa(land->support, m.point, rho, n, c.dos.gamma, c.dos.delta).value, n, e)
                .entrywise;
      } else {
        b = bulk_local_law_bound(n, e).entrywise;
      }
      eta_col.push_back(e);
      err_col.push_back(res.err_d);
      bound_col.push_back(c.policy.c * b);
    }
    json scan{{"schema", "local-law-scan/1"}, {"tau", *o.scan_tau}, {"eta", eta_col}, {"err_d", err_col},
              {"bound", bound_col}};
    report["scan"] = scan;
    s.write_figure("local-law-scan.csv", scan, FigureKind::local_law_scan);
  }
  report["pass"] = law.ok() && (!o.ward || ward_worst <= o.ward_tol) && (!o.perturbation || dcheck.ok());
  s.write_json("local-law.json", report);

  if (c.checks_enabled) {
    require(s, "local-law", law.ok(), frac_detail(law));
    if (o.ward) require(s, "ward", ward_worst <= o.ward_tol, "max relative error " + num(ward_worst));
    if (o.perturbation) {
      if (keep) require(s, "perturbation-routes", disc_worst <= 1e-9, "max relative discrepancy " + num(disc_worst));
      require(s, "perturbation-bound", dcheck.ok(), frac_detail(dcheck));
    }
  }
}

std::vector<RVector> spectra(const ExperimentConfig& c, int workers) {
  return parallel_map<RVector>(static_cast<std::size_t>(c.ensemble.samples), workers, [&](std::size_t i) {
    const auto h = draw(c, i);
    return RVector(h.eigenvalues());
  });
}

void cmd_rigidity(Session& s, int workers) {
  const auto& c = s.config();
  const auto& o = c.rigidity;
  const int n = s.n();
  const auto land = landscape(s);
  std::vector<double> taus = o.tau;
  if (taus.empty())
    for (const auto& iv : land.support.intervals)
      for (double t : linspace(iv.lo + 0.2 * iv.length(), iv.hi - 0.2 * iv.length(), 10)) taus.push_back(t);
  if (o.edge_targets && !land.support.intervals.empty()) {
    const double eps0 = std::pow(static_cast<double>(n), c.dos.gamma - 2.0 / 3.0);
    taus.push_back(land.support.intervals.front().lo + 0.5 * eps0);
    taus.push_back(land.support.intervals.back().hi);
  }
  const auto plan = plan_rigidity(land.dos, land.support, taus, n, c.dos.gamma, c.policy, c.dos.delta);
  const auto ev = spectra(c, workers);
  s.stage("samples", "done", std::to_string(ev.size()) + " spectra");
  const auto rep = rigidity_check(ev, plan);
  json report = io::to_json(rep);
  json records = json::array();
  for (const auto& r : rep.records)
    records.push_back({{"sample", r.sample},
                       {"tau", r.tau},
                       {"region", to_string(r.region)},
                       {"i_tau", r.i_tau},
                       {"lambda", r.lambda_observed},
                       {"deviation", r.deviation},
                       {"bound", r.bound},
                       {"pass", r.pass}});
  report["records"] = records;
  const auto bulk = rep.fraction(TauRegion::bulk, o.required_bulk);
  const auto edge = rep.fraction(TauRegion::extreme_edge, o.required_edge);
  const auto internal = rep.fraction(TauRegion::internal_edge, 1.0 - c.policy.alpha);
  const std::size_t empty = rep.empty_gap_samples(o.include_outer_gaps);
  report["bulk"] = io::to_json(bulk);
  report["extreme_edge"] = io::to_json(edge);
  report["internal_edge"] = io::to_json(internal);
  report["seed"] = c.ensemble.seed;
  report["profile_hash"] = io::hash_hex(c.profile.hash());
  s.write_json("rigidity.json", report);
  s.write_figure("rigidity-scatter.csv", report, FigureKind::rigidity_scatter);
  if (c.checks_enabled) {
    if (bulk.trials) require(s, "rigidity-bulk", bulk.ok(), frac_detail(bulk));
    if (edge.trials) require(s, "rigidity-extreme-edge", edge.ok(), frac_detail(edge));
    if (internal.trials) require(s, "rigidity-internal-edge", internal.ok(), frac_detail(internal));
    require(s, "empty-gaps", empty == rep.samples(),
            std::to_string(empty) + "/" + std::to_string(rep.samples()) + " samples with empty gaps" +
                (o.include_outer_gaps ? " (outer gaps included)" : ""));
  }
}

void cmd_delocalization(Session& s, int workers) {
  const auto& c = s.config();
  const auto& o = c.delocalization;
  const int n = s.n();
  auto recs = parallel_map<DelocalizationRecord>(
      static_cast<std::size_t>(c.ensemble.samples), workers, [&](std::size_t i) {
        const auto h = draw(c, i);
        return delocalization_sample(h, o.random_probes, sample_seed(c.ensemble.seed, i) ^ 0x9e3779b97f4a7c15ULL,
                                     o.c_log, i);
      });
  s.stage("samples", "done", std::to_string(recs.size()) + " samples");
  const auto rep = summarize_delocalization(std::move(recs), n, o.c_log, o.required);
  const CMatrix id = CMatrix::Identity(n, n);
  const double control = delocalization_statistic(id, id);
  json report = io::to_json(rep);
  report["negative_control"] = {{"statistic", control}, {"exceeds", control > rep.threshold}};
  report["seed"] = c.ensemble.seed;
  report["profile_hash"] = io::hash_hex(c.profile.hash());
  s.write_json("delocalization.json", report);
  if (c.checks_enabled) {
    require(s, "delocalization", rep.check.ok(), frac_detail(rep.check));
    require(s, "negative-control", control > rep.threshold,
            "diagonal control statistic " + num(control) + " vs threshold " + num(rep.threshold));
  }
}

void cmd_anisotropic(Session& s, int workers) {
  const auto& c = s.config();
  const auto& o = c.anisotropic;
  const int n = s.n();
  const double eta = o.eta.value_or(std::pow(static_cast<double>(n), o.eta_exponent));
  const auto land = landscape(s);
  std::vector<QveSolution> ms;
  std::vector<double> kap;
  for (double tau : o.tau) {
    ms.push_back(solve_checked(c, {tau, eta}));
    kap.push_back(kappa(land.support, {tau, eta}, ms.back().density(), n, c.dos.gamma, c.dos.delta).value);
  }
  auto recs = parallel_map<std::vector<AnisotropicRecord>>(
      static_cast<std::size_t>(c.ensemble.samples), workers, [&](std::size_t i) {
        const auto h = draw(c, i);
        const auto pairs = random_orthogonal_pairs(n, o.pairs, sample_seed(c.ensemble.seed, i) ^ 0xa5a5a5a5ULL);
        std::vector<AnisotropicRecord> out;
        for (std::size_t k = 0; k < ms.size(); ++k) {
          auto r = anisotropic_sample(h, ms[k], pairs, kap[k], c.policy, i);
          out.insert(out.end(), r.begin(), r.end());
        }
        h.release_spectrum();
        return out;
      });
  s.stage("samples", "done", std::to_string(recs.size()) + " samples");
  FractionCheck f{0, 0, 1.0 - c.policy.alpha};
  json records = json::array();
  for (const auto& per : recs)
    for (const auto& r : per) {
      ++f.trials;
      if (r.pass) ++f.passed;
      records.push_back(io::to_json(r));
    }
  json report{{"schema", "anisotropic/1"}, {"n", n},         {"eta", eta},         {"seed", c.ensemble.seed},
              {"check", io::to_json(f)},   {"records", records}, {"profile_hash", io::hash_hex(c.profile.hash())}};
  s.write_json("anisotropic.json", report);
  if (c.checks_enabled) require(s, "anisotropic", f.ok(), frac_detail(f));
}

json cdf_columns(const GapStatistics& g, std::size_t points = 200) {
  std::istringstream is([&] {
    std::ostringstream os;
    os.precision(17);
    g.cdf_table(os, points);
    return os.str();
  }());
  std::string line;
  std::getline(is, line);
  json gap = json::array(), a = json::array(), b = json::array();
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    double x, y, z;
    char c1, c2;
    ls >> x >> c1 >> y >> c2 >> z;
    gap.push_back(x);
    a.push_back(y);
    b.push_back(z);
  }
  return {{"gap", gap}, {"cdf_model", a}, {"cdf_reference", b}};
}

void cmd_universality(Session& s, int workers) {
  const auto& c = s.config();
  const auto& o = c.universality;
  const int n = s.n();
  const auto land = landscape(s);
  const auto model = spectra(c, workers);
  const std::size_t nref = static_cast<std::size_t>(o.reference_samples > 0 ? o.reference_samples : c.ensemble.samples);
  const auto reference = parallel_map<RVector>(nref, workers, [&](std::size_t i) {
    return RVector(sample_gaussian_reference(n, c.ensemble.symmetry, sample_seed(o.reference_seed, i)).eigenvalues());
  });
  s.stage("samples", "done", std::to_string(model.size()) + " model, " + std::to_string(reference.size()) +
                                 " reference spectra");
  const auto g = gap_statistics(model, reference, land.dos, o.gaps);
  json report = io::to_json(g);
  report["cdf"] = cdf_columns(g);
  report["seed"] = c.ensemble.seed;
  report["reference_seed"] = o.reference_seed;
  report["profile_hash"] = io::hash_hex(c.profile.hash());

  std::optional<GapStatistics> null;
  if (o.null_check) {
    const auto second = parallel_map<RVector>(nref, workers, [&](std::size_t i) {
      return RVector(sample_gaussian_reference(n, c.ensemble.symmetry, sample_seed(o.null_seed, i)).eigenvalues());
    });
    DosCurve sc;
    sc.tau = linspace(-2.0, 2.0, 4001);
    for (double t : sc.tau) sc.rho.push_back(semicircle_density(t));
    null = gap_statistics(second, reference, sc, o.gaps);
    report["null"] = io::to_json(*null);
    report["null_seed"] = o.null_seed;
  }
  s.write_json("universality.json", report);
  json fig{{"schema", "gap-cdf/1"}};
  fig.update(report["cdf"]);
  s.write_figure("gap-cdf.csv", fig, FigureKind::gap_cdf);

  if (c.checks_enabled) {
    require(s, "gap-pool", !g.inconclusive, g.note.empty() ? std::to_string(g.model_gaps.size()) + " gaps" : g.note);
    require(s, "ks", g.ks_distance <= o.ks_max, "KS " + num(g.ks_distance) + " vs " + num(o.ks_max));
    double worst = 0.0;
    for (const auto& b : g.bumps) worst = std::max(worst, std::abs(b.z_score()));
    require(s, "bumps", worst <= o.bump_z_max, "max |z| " + num(worst));
    if (null) require(s, "null-ks", null->ks_distance <= o.null_ks_max, "KS " + num(null->ks_distance));
  }
}

void cmd_envelope(Session& s) {
  const auto& c = s.config();
  const auto& o = c.envelope;
  const int n = s.n();
  const auto land = landscape(s);
  std::vector<double> etas = o.eta;
  if (etas.empty()) etas = logspace(std::pow(static_cast<double>(n), -1.0 + o.options.gamma), 1.0, 100);
  std::sort(etas.begin(), etas.end());
  json anchors = json::array();
  std::size_t evaluations = 0, root_failures = 0, monotone_failures = 0;
  for (const auto& m : land.support.minima) {
    const auto env = error_envelope(land.support, land.dos, m.tau, n, o.options);
    const auto [lo, hi] = env.omega_range();
    json curves = json::array();
    for (int k = 0; k < o.omega_points; ++k) {
      const double omega = lo + (hi - lo) * (k + 1) / (o.omega_points + 1);
      json values = json::array();
      double prev = std::numeric_limits<double>::infinity();
      bool monotone = true;
      for (double e : etas) {
        ++evaluations;
        try {
          const double v = env(omega, e);
          values.push_back(v);
          if (v > prev * (1.0 + 1e-12)) monotone = false;
          prev = v;
        } catch (const NumericalFailure&) {
          ++root_failures;
          values.push_back(nullptr);
        }
      }
      if (!monotone) ++monotone_failures;
      curves.push_back({{"omega", omega}, {"monotone", monotone}, {"values", values}});
    }
    anchors.push_back({{"tau0", m.tau},
                       {"kind", to_string(m.kind)},
                       {"theta", env.theta()},
                       {"delta_gap", env.delta_gap()},
                       {"rho_at_min", env.rho_at_min()},
                       {"curves", curves}});
  }
  json report{{"schema", "envelope/1"},  {"n", n},
              {"gamma", o.options.gamma}, {"eps_tilde", o.options.eps_tilde.value_or(o.options.gamma / 20.0)},
              {"eta", etas},              {"anchors", anchors},
              {"evaluations", evaluations}, {"root_failures", root_failures},
              {"non_monotone_curves", monotone_failures}};
  s.write_json("envelope.json", report);
  if (c.checks_enabled) {
    require(s, "envelope-minima", !land.support.minima.empty(), std::to_string(land.support.minima.size()) + " minima");
    require(s, "envelope-root", root_failures == 0,
            std::to_string(root_failures) + "/" + std::to_string(evaluations) + " evaluations without a unique root");
    require(s, "envelope-monotone", monotone_failures == 0, std::to_string(monotone_failures) + " non-monotone curves");
  }
}

void cmd_measure_distance(Session& s, int workers) {
  const auto& c = s.config();
  const auto& o = c.measure_distance;
  const int n = s.n();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double eta1 = o.eta1.value_or(scale), eta2 = o.eta2.value_or(scale), eps = o.eps.value_or(scale);
  if (eps < std::max(eta1, eta2)) throw ConfigError("measure_distance: eps must be at least max(eta1, eta2)");
  const auto land = landscape(s);
  const auto ev = spectra(c, workers);
  s.stage("samples", "done", std::to_string(ev.size()) + " spectra");
  json records = json::array();
  std::size_t trials = 0, ok = 0;
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < ev.size(); ++i)
    for (const auto& iv : o.intervals) {
      const auto md =
          stieltjes_measure_distance(ev[i], c.profile, land.dos, iv, eta1, eta2, eps, o.panels_per_scale, c.solver);
      ++trials;
      const bool pass = md.left <= md.right();
      if (pass) ++ok;
      worst_ratio = std::max(worst_ratio, md.left / md.right());
      json r = io::to_json(md);
      r["sample"] = i;
      r["interval"] = {iv.lo, iv.hi};
      r["pass"] = pass;
      records.push_back(r);
    }
  json report{{"schema", "measure-distance/1"}, {"n", n},           {"eta1", eta1},
              {"eta2", eta2},                   {"eps", eps},       {"trials", trials},
              {"passed", ok},                   {"max_left_over_right", worst_ratio},
              {"records", records},             {"seed", c.ensemble.seed},
              {"profile_hash", io::hash_hex(c.profile.hash())}};
  s.write_json("measure-distance.json", report);
  if (c.checks_enabled)
    require(s, "measure-distance", ok == trials, std::to_string(ok) + "/" + std::to_string(trials));
}

bool samples_needed(Command c) {
  switch (c) {
    case Command::verify_local_law:
    case Command::rigidity:
    case Command::delocalization:
    case Command::anisotropic:
    case Command::universality:
    case Command::measure_distance: return true;
    default: return false;
  }
}

// Checks that only make sense once the command is known.
void validate_for(Command command, const ExperimentConfig& c) {
  if (command == Command::qve_solve && (c.tau_grid.empty() || c.eta_grid.empty()))
    throw ConfigError("qve-solve needs grid.tau and grid.eta");
  if (command == Command::qve_solve)
    for (double e : c.eta_grid) positive(e, "grid.eta values");
  if (samples_needed(command)) {
    const double smax = c.profile.s().maxCoeff();
    if (smax > (1.0 + 1e-12) / c.profile.n())
      throw ConfigError("profile is not flat (max s_ij * N = " + num(smax * c.profile.n()) + "); cannot sample");
  }
  if (command == Command::verify_local_law) {
    if (c.local_law.tau.empty()) throw ConfigError("local_law.tau is empty");
    for (int r : c.local_law.cross_check_rows)
      if (r < 0 || r >= c.profile.n()) throw ConfigError("local_law.cross_check_rows out of range");
  }
  if (command == Command::anisotropic && c.anisotropic.tau.empty()) throw ConfigError("anisotropic.tau is empty");
  if (command == Command::measure_distance && c.measure_distance.intervals.empty())
    throw ConfigError("measure_distance.intervals is empty");
  if (command == Command::universality) {
    // Pools drawn from overlapping seed sets are not independent (two GOE
    // pools would be identical).
    const auto& o = c.universality;
    const std::size_t nm = static_cast<std::size_t>(c.ensemble.samples);
    const std::size_t nr = static_cast<std::size_t>(o.reference_samples > 0 ? o.reference_samples : c.ensemble.samples);
    auto overlap = [](std::uint64_t a, std::size_t na, std::uint64_t b, std::size_t nb) {
      std::set<std::uint64_t> seen;
      for (std::size_t i = 0; i < na; ++i) seen.insert(sample_seed(a, i));
      for (std::size_t i = 0; i < nb; ++i)
        if (seen.count(sample_seed(b, i))) return true;
      return false;
    };
    if (overlap(c.ensemble.seed, nm, o.reference_seed, nr))
      throw ConfigError("universality: ensemble.seed and reference_seed give overlapping per-sample seeds");
    if (o.null_check && overlap(o.reference_seed, nr, o.null_seed, nr))
      throw ConfigError("universality: reference_seed and null_seed give overlapping per-sample seeds");
  }
}

}  // namespace

std::string to_string(Command c) {
  for (const auto& [k, v] : command_table())
    if (k == c) return v;
  return "?";
}

Command command_from_string(const std::string& name) {
  for (const auto& [k, v] : command_table())
    if (v == name) return k;
  throw InvalidInput("unknown command '" + name + "'");
}

std::vector<std::string> command_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : command_table()) out.push_back(v);
  return out;
}

std::string to_string(FigureKind k) {
  switch (k) {
    case FigureKind::dos_curve: return "dos-curve";
    case FigureKind::local_law_scan: return "local-law-scan";
    case FigureKind::rigidity_scatter: return "rigidity-scatter";
    case FigureKind::gap_cdf: return "gap-cdf";
  }
  return "?";
}

FigureKind figure_kind_from_string(const std::string& name) {
  for (auto k : {FigureKind::dos_curve, FigureKind::local_law_scan, FigureKind::rigidity_scatter, FigureKind::gap_cdf})
    if (to_string(k) == name) return k;
  throw InvalidInput("unknown figure kind '" + name + "'");
}

ExperimentConfig parse_config(const json& j, std::optional<std::uint64_t> seed_override) {
  check_keys(j, {"schema_version", "profile", "solver", "grid", "ensemble", "checks", "dos", "local_law", "rigidity",
                 "delocalization", "anisotropic", "universality", "envelope", "measure_distance", "output"},
             "config");
  if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
  if (read<int>(j, "schema_version", 0, "config") != io::kSchemaVersion)
    throw ConfigError("config: unsupported schema_version (expected 1)");
  if (!j.contains("profile")) throw ConfigError("config: missing profile");

  ExperimentConfig c(json(j), [&] {
                       try {
                         return io::profile_from_json(j.at("profile"));
                       } catch (const ConfigError&) {
                         throw;
                       } catch (const std::exception& e) {
                         throw ConfigError(std::string("profile: ") + e.what());
                       }
                     }());
  const int n = c.profile.n();
  try {
    c.solver = io::solver_config_from_json(j.value("solver", json()));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, {"tau", "eta"}, "grid");
    if (g.contains("tau")) c.tau_grid = read_grid(g.at("tau"), "grid.tau");
    if (g.contains("eta")) c.eta_grid = read_grid(g.at("eta"), "grid.eta");
  }

  if (j.contains("ensemble")) {
    const json& e = j.at("ensemble");
    check_keys(e, {"samples", "seed", "symmetry", "law", "re_fraction"}, "ensemble");
    c.ensemble.samples = read<int>(e, "samples", c.ensemble.samples, "ensemble");
    c.ensemble.seed = read_seed(e, "seed", c.ensemble.seed, "ensemble");
    try {
      if (e.contains("symmetry"))
        c.ensemble.symmetry = symmetry_class_from_string(read<std::string>(e, "symmetry", "", "ensemble"));
      if (e.contains("law")) c.ensemble.law = entry_law_from_string(read<std::string>(e, "law", "", "ensemble"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ConfigError(std::string("ensemble: ") + ex.what());
    }
    c.ensemble.re_fraction = read<double>(e, "re_fraction", c.ensemble.re_fraction, "ensemble");
  }
  if (seed_override) {
    c.ensemble.seed = *seed_override;
    c.raw["ensemble"]["seed"] = *seed_override;
  }
  if (c.ensemble.samples < 1) throw ConfigError("ensemble.samples must be at least 1");
  if (!(c.ensemble.re_fraction >= 0.0 && c.ensemble.re_fraction <= 1.0))
    throw ConfigError("ensemble.re_fraction must lie in [0, 1]");

  if (j.contains("checks")) {
    const json& k = j.at("checks");
    check_keys(k, {"enabled", "C", "alpha"}, "checks");
    c.checks_enabled = read<bool>(k, "enabled", true, "checks");
    c.policy.c = read<double>(k, "C", c.policy.c, "checks");
    c.policy.alpha = read<double>(k, "alpha", c.policy.alpha, "checks");
  }
  positive(c.policy.c, "checks.C");
  if (!(c.policy.alpha > 0.0 && c.policy.alpha < 1.0)) throw ConfigError("checks.alpha must lie in (0, 1)");

  const double radius = default_radius(c.profile);
  c.dos.tau = linspace(-radius, radius, 2001);
  if (j.contains("dos")) {
    const json& d = j.at("dos");
    check_keys(d, {"tau", "eta", "extrapolate", "normalization_tol", "delta", "gamma", "refine_edges"}, "dos");
    if (d.contains("tau")) c.dos.tau = read_grid(d.at("tau"), "dos.tau");
    c.dos.eta = read<double>(d, "eta", c.dos.eta, "dos");
    c.dos.extrapolate = read<bool>(d, "extrapolate", false, "dos");
    c.dos.normalization_tol = read<double>(d, "normalization_tol", c.dos.normalization_tol, "dos");
    c.dos.delta = read<double>(d, "delta", c.dos.delta, "dos");
    c.dos.gamma = read<double>(d, "gamma", c.dos.gamma, "dos");
    c.dos.refine_edges = read<bool>(d, "refine_edges", false, "dos");
  }
  positive(c.dos.eta, "dos.eta");
  positive(c.dos.normalization_tol, "dos.normalization_tol");
  positive(c.dos.delta, "dos.delta");
  if (!(c.dos.gamma > 0.0 && c.dos.gamma < 1.0)) throw ConfigError("dos.gamma must lie in (0, 1)");
  if (c.dos.tau.size() < 2 || !std::is_sorted(c.dos.tau.begin(), c.dos.tau.end()))
    throw ConfigError("dos.tau must be an increasing grid of at least two points");

  c.local_law.tau = linspace(-1.5, 1.5, 10);
  if (j.contains("local_law")) {
    const json& l = j.at("local_law");
    check_keys(l, {"tau", "eta_exponent", "eta", "bound", "ward", "ward_tol", "perturbation", "cross_check_rows",
                   "scan_tau", "scan_eta"},
               "local_law");
    if (l.contains("tau")) c.local_law.tau = read_grid(l.at("tau"), "local_law.tau");
    c.local_law.eta_exponent = read<double>(l, "eta_exponent", c.local_law.eta_exponent, "local_law");
    c.local_law.eta = read_opt<double>(l, "eta", "local_law");
    c.local_law.bound = read<std::string>(l, "bound", c.local_law.bound, "local_law");
    c.local_law.ward = read<bool>(l, "ward", true, "local_law");
    c.local_law.ward_tol = read<double>(l, "ward_tol", c.local_law.ward_tol, "local_law");
    c.local_law.perturbation = read<bool>(l, "perturbation", false, "local_law");
    c.local_law.cross_check_rows = read<std::vector<int>>(l, "cross_check_rows", {}, "local_law");
    c.local_law.scan_tau = read_opt<double>(l, "scan_tau", "local_law");
    if (l.contains("scan_eta")) c.local_law.scan_eta = read_grid(l.at("scan_eta"), "local_law.scan_eta");
  }
  if (c.local_law.bound != "bulk" && c.local_law.bound != "general")
    throw ConfigError("local_law.bound must be 'bulk' or 'general'");
  if (c.local_law.eta) positive(*c.local_law.eta, "local_law.eta");
  if (!(c.local_law.eta_exponent < 0.0 && c.local_law.eta_exponent > -1.0))
    throw ConfigError("local_law.eta_exponent must lie in (-1, 0)");
  for (double e : c.local_law.scan_eta) positive(e, "local_law.scan_eta values");

  if (j.contains("rigidity")) {
    const json& r = j.at("rigidity");
    check_keys(r, {"tau", "edge_targets", "required_bulk", "required_edge", "include_outer_gaps"}, "rigidity");
    if (r.contains("tau")) c.rigidity.tau = read_grid(r.at("tau"), "rigidity.tau");
    c.rigidity.edge_targets = read<bool>(r, "edge_targets", true, "rigidity");
    c.rigidity.required_bulk = read<double>(r, "required_bulk", c.rigidity.required_bulk, "rigidity");
    c.rigidity.required_edge = read<double>(r, "required_edge", c.rigidity.required_edge, "rigidity");
    c.rigidity.include_outer_gaps = read<bool>(r, "include_outer_gaps", false, "rigidity");
  }

  if (j.contains("delocalization")) {
    const json& d = j.at("delocalization");
    check_keys(d, {"c_log", "random_probes", "required"}, "delocalization");
    c.delocalization.c_log = read<double>(d, "c_log", c.delocalization.c_log, "delocalization");
    c.delocalization.random_probes = read<int>(d, "random_probes", 0, "delocalization");
    c.delocalization.required = read<double>(d, "required", c.delocalization.required, "delocalization");
  }
  positive(c.delocalization.c_log, "delocalization.c_log");
  if (c.delocalization.random_probes < 0) throw ConfigError("delocalization.random_probes must be >= 0");

  c.anisotropic.tau = linspace(-1.5, 1.5, 10);
  if (j.contains("anisotropic")) {
    const json& a = j.at("anisotropic");
    check_keys(a, {"tau", "eta_exponent", "eta", "pairs"}, "anisotropic");
    if (a.contains("tau")) c.anisotropic.tau = read_grid(a.at("tau"), "anisotropic.tau");
    c.anisotropic.eta_exponent = read<double>(a, "eta_exponent", c.anisotropic.eta_exponent, "anisotropic");
    c.anisotropic.eta = read_opt<double>(a, "eta", "anisotropic");
    c.anisotropic.pairs = read<int>(a, "pairs", c.anisotropic.pairs, "anisotropic");
  }
  if (c.anisotropic.pairs < 1 || 2 * c.anisotropic.pairs > n)
    throw ConfigError("anisotropic.pairs must lie in [1, N/2]");
  if (c.anisotropic.eta) positive(*c.anisotropic.eta, "anisotropic.eta");

  if (j.contains("universality")) {
    const json& u = j.at("universality");
    check_keys(u, {"reference_samples", "reference_seed", "null_check", "null_seed", "ks_max", "null_ks_max",
                   "bump_z_max", "window", "reference_window", "min_rho", "min_pool"},
               "universality");
    auto& o = c.universality;
    o.reference_samples = read<int>(u, "reference_samples", 0, "universality");
    o.reference_seed = read_seed(u, "reference_seed", o.reference_seed, "universality");
    o.null_check = read<bool>(u, "null_check", true, "universality");
    o.null_seed = read_seed(u, "null_seed", o.null_seed, "universality");
    o.ks_max = read<double>(u, "ks_max", o.ks_max, "universality");
    o.null_ks_max = read<double>(u, "null_ks_max", o.null_ks_max, "universality");
    o.bump_z_max = read<double>(u, "bump_z_max", o.bump_z_max, "universality");
    if (u.contains("window")) {
      const auto w = read<std::vector<double>>(u, "window", {}, "universality");
      if (w.size() != 2 || !(w[1] > w[0])) throw ConfigError("universality.window must be [lo, hi] with lo < hi");
      o.gaps.window = {w[0], w[1]};
    }
    if (u.contains("reference_window")) {
      const auto w = read<std::vector<double>>(u, "reference_window", {}, "universality");
      if (w.size() != 2 || !(w[1] > w[0]))
        throw ConfigError("universality.reference_window must be [lo, hi] with lo < hi");
      o.gaps.reference_window = Interval{w[0], w[1]};
    }
    o.gaps.min_rho = read<double>(u, "min_rho", o.gaps.min_rho, "universality");
    o.gaps.min_pool = read<std::size_t>(u, "min_pool", o.gaps.min_pool, "universality");
    if (o.reference_samples < 0) throw ConfigError("universality.reference_samples must be >= 0");
  }

  if (j.contains("envelope")) {
    const json& e = j.at("envelope");
    check_keys(e, {"gamma", "eps_tilde", "delta_star", "c_star", "technical_term", "omega_points", "eta"}, "envelope");
    auto& o = c.envelope;
    o.options.gamma = read<double>(e, "gamma", o.options.gamma, "envelope");
    o.options.eps_tilde = read_opt<double>(e, "eps_tilde", "envelope");
    o.options.delta_star = read<double>(e, "delta_star", o.options.delta_star, "envelope");
    o.options.c_star = read<double>(e, "c_star", o.options.c_star, "envelope");
    o.options.technical_term = read<bool>(e, "technical_term", true, "envelope");
    o.omega_points = read<int>(e, "omega_points", o.omega_points, "envelope");
    if (e.contains("eta")) o.eta = read_grid(e.at("eta"), "envelope.eta");
  }
  {
    const auto& o = c.envelope.options;
    if (!(o.gamma > 0.0 && o.gamma < 1.0)) throw ConfigError("envelope.gamma must lie in (0, 1)");
    const double eps = o.eps_tilde.value_or(o.gamma / 20.0);
    if (!(eps > 0.0 && eps < o.gamma / 16.0)) throw ConfigError("envelope.eps_tilde must lie in (0, gamma/16)");
    if (!(o.c_star > 0.0 && o.c_star < 0.5)) throw ConfigError("envelope.c_star must lie in (0, 1/2)");
    positive(o.delta_star, "envelope.delta_star");
    if (c.envelope.omega_points < 1) throw ConfigError("envelope.omega_points must be at least 1");
    for (double e : c.envelope.eta) positive(e, "envelope.eta values");
  }

  c.measure_distance.intervals = {{-1.5, -0.9}, {-0.9, -0.3}, {-0.3, 0.3}, {0.3, 0.9}, {0.9, 1.5}};
  if (j.contains("measure_distance")) {
    const json& m = j.at("measure_distance");
    check_keys(m, {"intervals", "eta1", "eta2", "eps", "panels_per_scale"}, "measure_distance");
    if (m.contains("intervals")) {
      c.measure_distance.intervals.clear();
      for (const auto& iv : read<std::vector<std::vector<double>>>(m, "intervals", {}, "measure_distance")) {
        if (iv.size() != 2 || !(iv[1] >= iv[0]))
          throw ConfigError("measure_distance.intervals entries must be [lo, hi] with lo <= hi");
        c.measure_distance.intervals.push_back({iv[0], iv[1]});
      }
    }
    c.measure_distance.eta1 = read_opt<double>(m, "eta1", "measure_distance");
    c.measure_distance.eta2 = read_opt<double>(m, "eta2", "measure_distance");
    c.measure_distance.eps = read_opt<double>(m, "eps", "measure_distance");
    c.measure_distance.panels_per_scale = read<int>(m, "panels_per_scale", 2, "measure_distance");
    for (const auto& v : {c.measure_distance.eta1, c.measure_distance.eta2, c.measure_distance.eps})
      if (v && !(*v > 0.0 && *v <= 1.0)) throw ConfigError("measure_distance: eta1, eta2, eps must lie in (0, 1]");
    if (c.measure_distance.panels_per_scale < 1) throw ConfigError("measure_distance.panels_per_scale must be >= 1");
  }

  c.output_dir = read<std::string>(j, "output", c.output_dir, "config");
  return c;
}

ExperimentConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, seed_override);
}

std::string config_hash(const ExperimentConfig& config) { return io::hash_hex(fnv1a(config.raw.dump())); }

RunResult run(Command command, const ExperimentConfig& config, const fs::path& out_dir, int workers, bool strict,
              std::ostream& log) {
  try {
    validate_for(command, config);
  } catch (const std::exception& e) {
    return {exit_config_error, e.what(), {}};
  }
  if (workers < 1) return {exit_config_error, "workers must be at least 1", {}};
  std::optional<Session> session;
  try {
    session.emplace(command, config, out_dir, strict, log);
  } catch (const std::exception& e) {
    return {exit_config_error, std::string("cannot create output: ") + e.what(), {}};
  }
  Session& s = *session;
  try {
    switch (command) {
      case Command::qve_solve: cmd_qve_solve(s); break;
      case Command::dos: cmd_dos(s, false); break;
      case Command::support: cmd_dos(s, true); break;
      case Command::verify_local_law: cmd_local_law(s, workers); break;
      case Command::rigidity: cmd_rigidity(s, workers); break;
      case Command::delocalization: cmd_delocalization(s, workers); break;
      case Command::anisotropic: cmd_anisotropic(s, workers); break;
      case Command::universality: cmd_universality(s, workers); break;
      case Command::envelope: cmd_envelope(s); break;
      case Command::measure_distance: cmd_measure_distance(s, workers); break;
    }
  } catch (const Stop&) {
    s.stage("remaining", "skipped", "strict mode");
    return s.finish(exit_check_failed, "check failed (strict)");
  } catch (const NumericalFailure& e) {
    s.stage("solver", "failed", e.what());
    return s.finish(exit_not_converged, e.what());
  } catch (const InvalidInput& e) {
    s.stage("input", "failed", e.what());
    return s.finish(exit_config_error, e.what());
  } catch (const std::exception& e) {
    s.stage("run", "failed", e.what());
    return s.finish(exit_config_error, e.what());
  }
  if (s.failed()) return s.finish(exit_check_failed, "check failed");
  return s.finish(exit_ok, "");
}

RunResult run(Command command, const RunOptions& options, std::ostream& log) {
  std::optional<ExperimentConfig> config;
  try {
    config.emplace(load_config(options.config_path, options.seed));
  } catch (const std::exception& e) {
    return {exit_config_error, e.what(), {}};
  }
  const fs::path out = options.out_dir.value_or(fs::path(config->output_dir));
  return run(command, *config, out, options.workers, options.strict, log);
}

void emit_figure_data(const json& report, FigureKind kind, std::ostream& os) {
  const std::string schema = report.value("schema", "");
  const auto need = [&](bool ok) {
    if (!ok) throw InvalidInput("emit_figure_data: report '" + schema + "' does not match kind " + to_string(kind));
  };
  os.precision(17);
  const auto cell = [&](const json& v) {
    if (v.is_null())
      os << "nan";
    else
      os << v.get<double>();
  };
  const auto columns = [&](const std::vector<std::string>& names) {
    std::size_t len = report.at(names[0]).size();
    for (const auto& nm : names) need(report.at(nm).is_array() && report.at(nm).size() == len);
    for (std::size_t k = 0; k < names.size(); ++k) os << (k ? "," : "") << names[k];
    os << '\n';
    for (std::size_t r = 0; r < len; ++r) {
      for (std::size_t k = 0; k < names.size(); ++k) {
        if (k) os << ',';
        cell(report.at(names[k])[r]);
      }
      os << '\n';
    }
  };
  switch (kind) {
    case FigureKind::dos_curve:
      need(schema == "dos-curve/1" && report.contains("tau") && report.contains("rho"));
      columns({"tau", "rho"});
      return;
    case FigureKind::local_law_scan:
      need(schema == "local-law-scan/1");
      columns({"eta", "err_d", "bound"});
      return;
    case FigureKind::gap_cdf:
      need((schema == "gap-cdf/1" || schema == "gap-statistics/1") &&
           (report.contains("gap") || report.contains("cdf")));
      if (report.contains("cdf")) {
        json inner = report.at("cdf");
        inner["schema"] = "gap-cdf/1";
        emit_figure_data(inner, kind, os);
      } else {
        columns({"gap", "cdf_model", "cdf_reference"});
      }
      return;
    case FigureKind::rigidity_scatter:
      need(schema == "rigidity/1" && report.contains("records"));
      os << "sample,tau,region,i_tau,lambda,deviation,bound,pass\n";
      for (const auto& r : report.at("records")) {
        os << r.at("sample").get<std::size_t>() << ',' << r.at("tau").get<double>() << ','
           << r.at("region").get<std::string>() << ',' << r.at("i_tau").get<long>() << ',';
        cell(r.at("lambda"));
        os << ',';
        cell(r.at("deviation"));
        os << ',' << r.at("bound").get<double>() << ',' << (r.at("pass").get<bool>() ? 1 : 0) << '\n';
      }
      return;
  }
}

}  // namespace qvelab::cli
