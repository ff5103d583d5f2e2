#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ttmfg/benchmarks.hpp"
#include "ttmfg/cubature.hpp"
#include "ttmfg/errors.hpp"
#include "ttmfg/grid_reference.hpp"
#include "ttmfg/metrics.hpp"
#include "ttmfg/parallel.hpp"
#include "ttmfg/spi_solver.hpp"

namespace ttmfg {

/// One experiment: a benchmark, a time-step ladder and every solver knob.
/// Defaults follow the reference setups; unset physical parameters
/// take the benchmark's own defaults.
struct RunSpec {
  std::string name = "run";
  std::string benchmark;
  std::vector<int> dims{3};
  double nu = 0.1;
  RuleKind rule = RuleKind::SL2p;
  std::vector<int> time_steps;
  std::vector<double> dts;
  std::optional<double> horizon;
  std::optional<double> half_width;
  double beta = 1.0;
  double gamma = 0.1;
  std::vector<double> mu0{0.1};
  std::vector<double> sigma0{0.5};
  bool centered_moment = true;
  std::string mode = "full";  // full | forward | backward
  int hjb_degree = 2;
  int fp_degree = 14;
  int hjb_rank = 2;
  int fp_rank = 3;
  double smoothing = 1.0;
  SmoothingSchedule schedule = SmoothingSchedule::Constant;
  double stop_tol = 1e-5;
  int max_iterations = 500;
  bool log_density = false;
  std::string sl1_source = "base";  // base | foot
  std::optional<bool> periodic;
  std::optional<double> drift_sign;
  double hjb_margin = std::numeric_limits<double>::infinity();
  double fp_margin = TensorTrain::kDefaultMargin;
  int cross_sweeps = 8;
  double cross_tol = 1e-8;
  int oversampling = -1;
  std::uint64_t cross_seed = 0x5eed;
  int holdout_points = 256;
  std::size_t validation_points = kValidationPoints;
  std::uint64_t validation_seed = 12345;
  bool grid_reference = false;
  std::vector<int> grid_points;
  GridInterpolation grid_interpolation = GridInterpolation::CubicLagrange;
  bool long_running = false;
  std::string output_dir = "results";

  void validate() const {
    static const std::vector<std::string> names{"advdiff", "positivity", "local-mfg", "nonlocal-mfg"};
    if (benchmark.empty()) throw ConfigError(std::string("run spec: benchmark missing; available: ") + kBenchmarkNames);
    if (std::find(names.begin(), names.end(), benchmark) == names.end())
      throw ConfigError("run spec: unknown benchmark '" + benchmark + "'; available: " + kBenchmarkNames);
    if (time_steps.empty() && dts.empty()) throw ConfigError("run spec: empty time-step ladder (set time_steps or dt)");
    if (!time_steps.empty() && !dts.empty()) throw ConfigError("run spec: set either time_steps or dt, not both");
    for (int n : time_steps)
      if (n < 1) throw ConfigError("run spec: time_steps entries must be >= 1");
    for (double v : dts)
      if (!(v > 0.0)) throw ConfigError("run spec: dt entries must be positive");
    if (dims.empty()) throw ConfigError("run spec: dims must not be empty");
    for (int d : dims)
      if (d < 1) throw ConfigError("run spec: dims must be positive");
    if (mode != "full" && mode != "forward" && mode != "backward")
      throw ConfigError("run spec: mode must be full, forward or backward");
    if (grid_reference && grid_points.size() != ladder_size())
      throw ConfigError("run spec: grid_points needs one entry per time step");
    if (validation_points == 0) throw ConfigError("run spec: validation_points must be positive");
    if (sl1_source != "base" && sl1_source != "foot") throw ConfigError("run spec: sl1_source must be base or foot");
    if (sl1_source == "foot" && rule != RuleKind::SL1)
      throw ConfigError("run spec: sl1_source = foot applies to the sl1 rule only");
  }

  [[nodiscard]] std::size_t ladder_size() const { return time_steps.empty() ? dts.size() : time_steps.size(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(v);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("run spec: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline int parse_int(const std::string& key, const std::string& v) {
  const double x = parse_double(key, v);
  if (x != std::floor(x) || std::abs(x) > 1e9) throw ConfigError("run spec: '" + key + "' expects an integer");
  return static_cast<int>(x);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("run spec: '" + key + "' expects true/false, got '" + v + "'");
}

template <class T, class Fn>
std::vector<T> parse_list(const std::string& key, const std::string& v, Fn&& fn) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(fn(key, item));
  return out;
}

}  // namespace detail

/// Applies one key = value assignment.
inline void apply_setting(RunSpec& s, const std::string& key, const std::string& value) {
  using namespace detail;
  const std::string& v = value;
  if (key == "name") s.name = v;
  else if (key == "benchmark") s.benchmark = v;
  else if (key == "dim" || key == "dims") s.dims = parse_list<int>(key, v, parse_int);
  else if (key == "nu") s.nu = parse_double(key, v);
  else if (key == "rule") s.rule = parse_rule_kind(v);
  else if (key == "time_steps") s.time_steps = parse_list<int>(key, v, parse_int);
  else if (key == "dt") s.dts = parse_list<double>(key, v, parse_double);
  else if (key == "horizon") s.horizon = parse_double(key, v);
  else if (key == "half_width") s.half_width = parse_double(key, v);
  else if (key == "beta") s.beta = parse_double(key, v);
  else if (key == "gamma") s.gamma = parse_double(key, v);
  else if (key == "mu0") s.mu0 = parse_list<double>(key, v, parse_double);
  else if (key == "sigma0") s.sigma0 = parse_list<double>(key, v, parse_double);
  else if (key == "centered_moment") s.centered_moment = parse_bool(key, v);
  else if (key == "mode") s.mode = v;
  else if (key == "hjb_degree") s.hjb_degree = parse_int(key, v);
  else if (key == "fp_degree") s.fp_degree = parse_int(key, v);
  else if (key == "hjb_rank") s.hjb_rank = parse_int(key, v);
  else if (key == "fp_rank") s.fp_rank = parse_int(key, v);
  else if (key == "smoothing") s.smoothing = parse_double(key, v);
  else if (key == "schedule") {
    if (v == "constant") s.schedule = SmoothingSchedule::Constant;
    else if (v == "harmonic") s.schedule = SmoothingSchedule::Harmonic;
    else throw ConfigError("run spec: schedule must be constant or harmonic");
  } else if (key == "stop_tol") s.stop_tol = parse_double(key, v);
  else if (key == "max_iterations") s.max_iterations = parse_int(key, v);
  else if (key == "log_density") s.log_density = parse_bool(key, v);
  else if (key == "sl1_source") s.sl1_source = v;
  else if (key == "periodic") s.periodic = parse_bool(key, v);
  else if (key == "drift_sign") s.drift_sign = parse_double(key, v);
  else if (key == "hjb_margin") s.hjb_margin = parse_double(key, v);
  else if (key == "fp_margin") s.fp_margin = parse_double(key, v);
  else if (key == "cross_sweeps") s.cross_sweeps = parse_int(key, v);
  else if (key == "cross_tol") s.cross_tol = parse_double(key, v);
  else if (key == "oversampling") s.oversampling = parse_int(key, v);
  else if (key == "cross_seed") s.cross_seed = static_cast<std::uint64_t>(parse_int(key, v));
  else if (key == "holdout_points") s.holdout_points = parse_int(key, v);
  else if (key == "validation_points") s.validation_points = static_cast<std::size_t>(parse_int(key, v));
  else if (key == "validation_seed") s.validation_seed = static_cast<std::uint64_t>(parse_int(key, v));
  else if (key == "grid_reference") s.grid_reference = parse_bool(key, v);
  else if (key == "grid_points") s.grid_points = parse_list<int>(key, v, parse_int);
  else if (key == "grid_interpolation") {
    if (v == "cubic") s.grid_interpolation = GridInterpolation::CubicLagrange;
    else if (v == "linear" || v == "multilinear") s.grid_interpolation = GridInterpolation::Multilinear;
    else throw ConfigError("run spec: grid_interpolation must be cubic or linear");
  } else if (key == "long") s.long_running = parse_bool(key, v);
  else if (key == "output_dir") s.output_dir = v;
  else throw ConfigError("run spec: unknown key '" + key + "'");
}

/// Plain-text "key = value" lines; '#' starts a comment.
inline RunSpec parse_run_spec(std::istream& in) {
  RunSpec s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("run spec line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(s, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return s;
}

inline RunSpec load_run_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run spec '" + path + "'");
  return parse_run_spec(in);
}

/// Benchmark instance for one dimension of a spec.
inline Benchmark make_benchmark(const RunSpec& s, int d) {
  Benchmark b;
  if (s.benchmark == "advdiff" || s.benchmark == "positivity") {
    b = advection_diffusion_problem(d, s.nu, {}, s.benchmark == "positivity");
  } else if (s.benchmark == "local-mfg") {
    b = local_mfg_problem(d, s.nu, s.beta, s.gamma, s.horizon.value_or(1.0), s.half_width.value_or(1.0));
  } else if (s.benchmark == "nonlocal-mfg") {
    b = nonlocal_mfg_problem(d, s.nu, s.mu0, s.sigma0, s.horizon.value_or(0.25), s.half_width.value_or(2.5),
                             s.centered_moment);
  } else {
    throw ConfigError("unknown benchmark '" + s.benchmark + "'; available: " + kBenchmarkNames);
  }
  return b;
}

inline SolverConfig make_solver_config(const RunSpec& s, const MfgProblem& p, int time_steps) {
  SolverConfig c;
  const bool transport = s.benchmark == "advdiff" || s.benchmark == "positivity";
  c.time_steps = time_steps;
  c.rule = s.rule;
  c.mode = transport || s.mode == "forward" ? SolveMode::ForwardOnly
           : s.mode == "backward"           ? SolveMode::BackwardOnly
                                            : SolveMode::FullMfg;
  c.schedule = s.schedule;
  c.smoothing = s.smoothing;
  c.stop_tol = s.stop_tol;
  c.max_iterations = s.max_iterations;
  c.hjb_degree = s.hjb_degree;
  c.fp_degree = s.fp_degree;
  c.hjb_rank = s.hjb_rank;
  c.fp_rank = s.fp_rank;
  c.log_density = s.log_density;
  c.sl1_source_at_foot = s.sl1_source == "foot";
  c.drift_sign = s.drift_sign.value_or(transport ? 1.0 : -1.0);
  c.hjb_margin = s.hjb_margin;
  c.fp_margin = s.fp_margin;
  if (s.periodic.value_or(transport)) c.periodic_half_width = p.half_width;
  c.cross.max_sweeps = s.cross_sweeps;
  c.cross.residual_tol = s.cross_tol;
  c.cross.oversampling = s.oversampling;
  c.cross.seed = s.cross_seed;
  c.cross.holdout_points = s.holdout_points;
  return c;
}

/// Column layout per benchmark; fixed order.
inline std::vector<std::string> csv_columns(const std::string& benchmark) {
  std::vector<std::string> cols{"dt", "n_steps"};
  auto add = [&](std::initializer_list<const char*> names) { cols.insert(cols.end(), names.begin(), names.end()); };
  if (benchmark == "advdiff") {
    add({"e2_m", "einf_m", "order_e2_m"});
  } else if (benchmark == "positivity") {
    add({"min_probe", "order_min_probe", "e2_m", "einf_m"});
  } else if (benchmark == "local-mfg") {
    add({"e2_u", "einf_u", "order_e2_u", "e2_m", "einf_m", "order_e2_m", "mass_defect", "grid_points", "grid_e2_u",
         "grid_einf_u", "grid_seconds"});
  } else if (benchmark == "nonlocal-mfg") {
    add({"e2_u", "einf_u", "order_e2_u", "e2_m", "einf_m", "order_e2_m", "mass_defect", "moment_defect"});
  } else {
    throw ConfigError("unknown benchmark '" + benchmark + "'; available: " + kBenchmarkNames);
  }
  add({"seconds", "iterations", "converged", "cross_sweeps", "oracle_calls", "fit_warnings", "guard_excluded"});
  return cols;
}

struct ReportRow {
  std::map<std::string, double> values;
  bool converged = true;
};

struct ExperimentReport {
  RunSpec spec;
  int dim = 3;
  std::vector<ReportRow> rows;
  double total_seconds = 0.0;
  [[nodiscard]] bool converged() const {
    return std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.converged; });
  }
};

namespace detail {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline bool integer_column(const std::string& c) {
  return c == "n_steps" || c == "iterations" || c == "converged" || c == "cross_sweeps" || c == "oracle_calls" ||
         c == "fit_warnings" || c == "guard_excluded" || c == "grid_points";
}

inline std::string format_value(const std::string& col, double v) {
  char buf[64];
  if (std::isnan(v)) return "nan";
  if (integer_column(col)) {
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
  } else {
    std::snprintf(buf, sizeof buf, "%.12e", v);
  }
  return buf;
}

inline void fill_orders(std::vector<ReportRow>& rows, const std::string& src, const std::string& dst) {
  for (auto& r : rows) r.values[dst] = kNaN;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double a = std::abs(rows[i - 1].values[src]), b = std::abs(rows[i].values[src]);
    if (a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b)) rows[i].values[dst] = std::log2(a / b);
  }
}

}  // namespace detail

/// Runs the ladder for one dimension.
inline ExperimentReport run_dimension(const RunSpec& spec, int d) {
  using detail::kNaN;
  const Benchmark bench = make_benchmark(spec, d);
  const MfgProblem& p = bench.problem;
  const auto vset = make_validation_set(d, p.half_width, spec.validation_points, spec.validation_seed);
  ExperimentReport rep;
  rep.spec = spec;
  rep.dim = d;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < spec.ladder_size(); ++i) {
    const int n = spec.time_steps.empty() ? std::max(1, static_cast<int>(std::lround(p.horizon / spec.dts[i])))
                                          : spec.time_steps[i];
    const SolverConfig cfg = make_solver_config(spec, p, n);
    SpiSolver solver(p, cfg);
    const SolveReport sr = solver.solve();
    const SolverState& st = solver.state();
    const double T = p.horizon;
    ReportRow row;
    auto& v = row.values;
    for (const auto& c : csv_columns(spec.benchmark)) v[c] = kNaN;
    v["dt"] = T / n;
    v["n_steps"] = n;
    v["seconds"] = sr.seconds;
    v["iterations"] = sr.iterations;
    v["converged"] = sr.converged ? 1 : 0;
    v["cross_sweeps"] = solver.total_cross_sweeps();
    v["oracle_calls"] = static_cast<double>(solver.total_oracle_calls());
    v["fit_warnings"] = sr.fit_warnings;
    row.converged = sr.converged;
    std::size_t excluded = 0;
    if (st.m.back()) {
      const auto& m = *st.m.back();
      const auto e = compute_errors([&](std::span<const double> x) { return m.evaluate(x); },
                                    [&](std::span<const double> x) { return p.exact_m(x, T); }, vset);
      v["e2_m"] = e.e2;
      v["einf_m"] = e.einf;
      excluded += e.guard_excluded;
      if (spec.benchmark == "positivity")
        v["min_probe"] = positivity_probe([&](std::span<const double> x) { return m.evaluate(x); },
                                          positivity_probe_points(d, T));
      if (spec.benchmark == "local-mfg" || spec.benchmark == "nonlocal-mfg") {
        const DensityView view(st.m.back(), true);
        const auto exact_first = bench.exact_box_first_moment(T);
        const auto defects = conservation_defects(view.mass(), view.first_moment(), bench.exact_box_mass(T), exact_first);
        v["mass_defect"] = defects.mass;
        if (spec.benchmark == "nonlocal-mfg") v["moment_defect"] = defects.moment;
      }
    }
    if (st.u.front() && p.exact_u) {
      const auto& u = *st.u.front();
      const auto e = compute_errors([&](std::span<const double> x) { return u.evaluate(x); },
                                    [&](std::span<const double> x) { return p.exact_u(x, 0.0); }, vset);
      v["e2_u"] = e.e2;
      v["einf_u"] = e.einf;
      excluded += e.guard_excluded;
    }
    v["guard_excluded"] = static_cast<double>(excluded);
    if (spec.grid_reference && spec.benchmark == "local-mfg") {
      GridReferenceConfig gc;
      gc.points_per_axis = spec.grid_points[i];
      gc.time_steps = n;
      gc.interpolation = spec.grid_interpolation;
      gc.drift_sign = cfg.drift_sign;
      const auto gr = grid_sl_reference(p, gc, vset);
      v["grid_points"] = gc.points_per_axis;
      v["grid_e2_u"] = gr.errors.e2;
      v["grid_einf_u"] = gr.errors.einf;
      v["grid_seconds"] = gr.seconds;
    }
    rep.rows.push_back(std::move(row));
  }
  detail::fill_orders(rep.rows, "e2_m", "order_e2_m");
  if (spec.benchmark == "positivity") detail::fill_orders(rep.rows, "min_probe", "order_min_probe");
  if (spec.benchmark == "local-mfg" || spec.benchmark == "nonlocal-mfg") detail::fill_orders(rep.rows, "e2_u", "order_e2_u");
  rep.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Runs every dimension of the spec.
inline std::vector<ExperimentReport> run(const RunSpec& spec) {
  spec.validate();
  std::vector<ExperimentReport> out;
  for (int d : spec.dims) out.push_back(run_dimension(spec, d));
  return out;
}

inline std::string to_csv(const ExperimentReport& rep) {
  const auto cols = csv_columns(rep.spec.benchmark);
  std::string out;
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
  out += "\n";
  for (const auto& r : rep.rows) {
    for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + detail::format_value(cols[c], r.values.at(cols[c]));
    out += "\n";
  }
  return out;
}

inline nlohmann::json spec_to_json(const RunSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["benchmark"] = s.benchmark;
  j["dims"] = s.dims;
  j["nu"] = s.nu;
  j["rule"] = std::string(to_string(s.rule));
  j["time_steps"] = s.time_steps;
  j["dt"] = s.dts;
  if (s.horizon) j["horizon"] = *s.horizon;
  if (s.half_width) j["half_width"] = *s.half_width;
  j["beta"] = s.beta;
  j["gamma"] = s.gamma;
  j["mu0"] = s.mu0;
  j["sigma0"] = s.sigma0;
  j["centered_moment"] = s.centered_moment;
  j["mode"] = s.mode;
  j["hjb_degree"] = s.hjb_degree;
  j["fp_degree"] = s.fp_degree;
  j["hjb_rank"] = s.hjb_rank;
  j["fp_rank"] = s.fp_rank;
  j["smoothing"] = s.smoothing;
  j["schedule"] = s.schedule == SmoothingSchedule::Harmonic ? "harmonic" : "constant";
  j["stop_tol"] = s.stop_tol;
  j["max_iterations"] = s.max_iterations;
  j["log_density"] = s.log_density;
  j["sl1_source"] = s.sl1_source;
  if (s.periodic) j["periodic"] = *s.periodic;
  if (s.drift_sign) j["drift_sign"] = *s.drift_sign;
  j["hjb_margin"] = std::isinf(s.hjb_margin) ? -1.0 : s.hjb_margin;
  j["fp_margin"] = std::isinf(s.fp_margin) ? -1.0 : s.fp_margin;
  j["cross_sweeps"] = s.cross_sweeps;
  j["cross_tol"] = s.cross_tol;
  j["oversampling"] = s.oversampling;
  j["cross_seed"] = s.cross_seed;
  j["holdout_points"] = s.holdout_points;
  j["validation_points"] = s.validation_points;
  j["validation_seed"] = s.validation_seed;
  j["grid_reference"] = s.grid_reference;
  j["grid_points"] = s.grid_points;
  j["long"] = s.long_running;
  return j;
}

inline nlohmann::json to_manifest(const ExperimentReport& rep) {
  nlohmann::json j;
  j["format"] = "ttmfg.report";
  j["version"] = 1;
  j["benchmark"] = rep.spec.benchmark;
  j["rule"] = std::string(to_string(rep.spec.rule));
  j["dim"] = rep.dim;
  j["total_seconds"] = rep.total_seconds;
  j["converged"] = rep.converged();
  j["config"] = spec_to_json(rep.spec);
  j["environment"] = {{"compiler", __VERSION__}, {"threads", worker_count()}, {"cplusplus", __cplusplus}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    nlohmann::json row;
    for (const auto& [k, v] : r.values) row[k] = std::isnan(v) ? nlohmann::json() : nlohmann::json(v);
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j;
}

/// Writes <dir>/<name>_d<dim>.csv and .json; returns the CSV path.
inline std::string write_report(const ExperimentReport& rep, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = dir + "/" + rep.spec.name + "_d" + std::to_string(rep.dim);
  {
    std::ofstream out(stem + ".csv");
    if (!out) throw ConfigError("cannot write " + stem + ".csv");
    out << to_csv(rep);
  }
  std::ofstream out(stem + ".json");
  if (!out) throw ConfigError("cannot write " + stem + ".json");
  out << to_manifest(rep).dump(2) << "\n";
  return stem + ".csv";
}

struct FitReport {
  std::vector<double> dims, seconds;
  ScalingFit fit;
  std::string benchmark, rule;
  std::string table() const {
    char buf[256];
    std::string out = "model,a,b,r2\n";
    std::snprintf(buf, sizeof buf, "exponential,%.6e,%.6e,%.6f\n", fit.exponential.a, fit.exponential.b, fit.exponential.r2);
    out += buf;
    std::snprintf(buf, sizeof buf, "power,%.6e,%.6e,%.6f\n", fit.power.a, fit.power.b, fit.power.r2);
    out += buf;
    out += std::string("preferred,") + (fit.prefers_power() ? "power" : "exponential") + "\n";
    return out;
  }
};

/// Scaling fit of total run time against dimension over report manifests.
inline FitReport report_fit(const std::vector<nlohmann::json>& manifests) {
  if (manifests.size() < 3) throw ConfigError("report-fit: need at least three reports, got " + std::to_string(manifests.size()));
  FitReport r;
  std::map<int, double> by_dim;
  for (const auto& m : manifests) {
    if (m.value("format", "") != "ttmfg.report") throw ConfigError("report-fit: not a ttmfg report manifest");
    const std::string bench = m.at("benchmark").get<std::string>(), rule = m.at("rule").get<std::string>();
    if (r.benchmark.empty()) {
      r.benchmark = bench;
      r.rule = rule;
    } else if (bench != r.benchmark || rule != r.rule) {
      throw ConfigError("report-fit: mismatched reports (" + r.benchmark + "/" + r.rule + " vs " + bench + "/" + rule + ")");
    }
    const int d = m.at("dim").get<int>();
    if (by_dim.count(d)) throw ConfigError("report-fit: duplicate dimension " + std::to_string(d));
    by_dim[d] = m.at("total_seconds").get<double>();
  }
  for (const auto& [d, t] : by_dim) {
    r.dims.push_back(d);
    r.seconds.push_back(t);
  }
  r.fit = fit_scaling(r.dims, r.seconds);
  return r;
}

inline FitReport report_fit(const std::string& dir) {
  std::vector<nlohmann::json> manifests;
  if (!std::filesystem::is_directory(dir)) throw ConfigError("report-fit: '" + dir + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    manifests.push_back(nlohmann::json::parse(in));
  }
  return report_fit(manifests);
}

struct VerifyGroup {
  std::string name;
  bool passed = true;
  double measured = 0.0;
  double threshold = 0.0;
};

struct VerifyOptions {
  bool corrupt_sl2p = false;  // fault injection: perturb the central SL2p weight
  int dense_instances = 100;
  std::uint64_t seed = 7;
};

namespace detail {

inline double dense_value(const TensorTrain& tt, std::span<const double> x) {
  // Full coefficient tensor contracted against the basis products.
  const int d = tt.dim();
  std::vector<std::vector<double>> psi(d);
  std::vector<int> size(d);
  for (int k = 0; k < d; ++k) {
    psi[k] = eval_basis(tt.basis(k), x[k] / tt.basis(k).half_width);
    size[k] = tt.basis(k).size();
  }
  std::vector<int> idx(d, 0);
  double total = 0.0;
  while (true) {
    std::vector<double> row(1, 1.0);
    for (int k = 0; k < d; ++k) {
      const Core& c = tt.core(k);
      std::vector<double> next(c.right, 0.0);
      for (int a = 0; a < c.left; ++a)
        for (int b = 0; b < c.right; ++b) next[b] += row[a] * c(a, idx[k], b);
      row = std::move(next);
    }
    double w = 1.0;
    for (int k = 0; k < d; ++k) w *= psi[k][idx[k]];
    total += row[0] * w;
    int k = d - 1;
    while (k >= 0 && ++idx[k] == size[k]) idx[k--] = 0;
    if (k < 0) break;
  }
  return total;
}

}  // namespace detail

/// Cubature moment/mass suites and the TT-versus-dense evaluation suite.
inline std::vector<VerifyGroup> verify(const VerifyOptions& opt = {}) {
  std::vector<VerifyGroup> groups;
  const double nu = 0.1, dt = 0.01;
  auto sl2p = [&](int d) {
    auto r = sl2p_rule(d, nu, dt);
    if (opt.corrupt_sl2p) r.weights[0] += 1e-3;
    return r;
  };

  VerifyGroup mass{"cubature.mass", true, 0.0, 1e-13};
  for (int d = 2; d <= 10; ++d) {
    std::vector<CubatureRule> rules{sl1_rule(d, nu, dt), sl2p(d), deterministic_rule(d)};
    if (d <= 6) rules.push_back(sl2e_rule(d, nu, dt));
    for (const auto& r : rules) {
      double s = 0.0;
      for (double w : r.weights) s += w;
      mass.measured = std::max(mass.measured, std::abs(s - 1.0));
    }
  }
  mass.passed = mass.measured <= mass.threshold;
  groups.push_back(mass);

  VerifyGroup m2p{"cubature.sl2p_order5", true, 0.0, 1e-11};
  for (int d = 2; d <= 10; ++d) m2p.measured = std::max(m2p.measured, moment_defect(sl2p(d), 5));
  m2p.passed = m2p.measured <= m2p.threshold;
  groups.push_back(m2p);

  VerifyGroup m2e{"cubature.sl2e_order5", true, 0.0, 1e-11};
  for (int d = 2; d <= 6; ++d) m2e.measured = std::max(m2e.measured, moment_defect(sl2e_rule(d, nu, dt), 5));
  m2e.passed = m2e.measured <= m2e.threshold;
  groups.push_back(m2e);

  VerifyGroup m1{"cubature.sl1_order3", true, 0.0, 1e-12};
  double order4 = std::numeric_limits<double>::infinity();
  for (int d = 2; d <= 10; ++d) {
    m1.measured = std::max(m1.measured, moment_defect(sl1_rule(d, nu, dt), 3));
    order4 = std::min(order4, moment_defect(sl1_rule(d, nu, dt), 4));
  }
  m1.passed = m1.measured <= m1.threshold;
  groups.push_back(m1);
  groups.push_back({"cubature.sl1_order4_defect", order4 > 1e-3, order4, 1e-3});

  VerifyGroup dense{"tt.dense_oracle", true, 0.0, 1e-11};
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<int> dim_d(1, 3), deg_d(0, 3), rank_d(1, 3);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int inst = 0; inst < opt.dense_instances; ++inst) {
    const int d = dim_d(rng), n = deg_d(rng), r = rank_d(rng);
    const double l = 0.5 + 2.0 * (uni(rng) + 1.0);
    std::vector<BasisSpec> bases(d, BasisSpec(n, l));
    std::vector<Core> cores;
    for (int k = 0; k < d; ++k) {
      Core c;
      c.left = k == 0 ? 1 : r;
      c.right = k == d - 1 ? 1 : r;
      c.modes = n + 1;
      c.data.resize(static_cast<std::size_t>(c.left) * c.modes * c.right);
      for (double& v : c.data) v = normal(rng) / std::sqrt(static_cast<double>(r));
      cores.push_back(std::move(c));
    }
    const TensorTrain tt(bases, cores);
    std::vector<double> x(d);
    for (int p = 0; p < 10; ++p) {
      for (double& v : x) v = l * uni(rng);
      dense.measured = std::max(dense.measured, std::abs(tt.evaluate(x) - detail::dense_value(tt, x)));
    }
  }
  dense.passed = dense.measured <= dense.threshold;
  groups.push_back(dense);
  return groups;
}

}  // namespace ttmfg
