#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ttmfg/cubature.hpp"
#include "ttmfg/errors.hpp"
#include "ttmfg/parallel.hpp"
#include "ttmfg/serialization.hpp"
#include "ttmfg/sl_propagator.hpp"
#include "ttmfg/tensor_train.hpp"
#include "ttmfg/tt_cross.hpp"

namespace ttmfg {

/// Read-only access to a density iterate for couplings: point values, log
/// values and (when requested) mass and first moments.
class DensityView {
 public:
  DensityView() = default;
  explicit DensityView(std::shared_ptr<const TensorTrain> tt, bool with_moments = false) : tt_(std::move(tt)) {
    if (with_moments && tt_) compute_moments();
  }

  [[nodiscard]] bool empty() const { return !tt_; }
  [[nodiscard]] const TensorTrain& tt() const { return *tt_; }

  [[nodiscard]] double value(std::span<const double> x) const { return tt_->evaluate(x); }

  /// For log-form densities the exponent is read directly.
  [[nodiscard]] double log_value(std::span<const double> x) const {
    if (tt_->log_form()) return tt_->expansion(x);
    return std::log(std::max(tt_->evaluate(x), kDensityFloor));
  }

  [[nodiscard]] double mass() const { return require_moments(), mass_; }
  /// Unnormalized first moment, the integral of x m over the box.
  [[nodiscard]] const std::vector<double>& first_moment() const { return require_moments(), mean_; }

  /// Mean over the largest window symmetric about itself (fixed point of
  /// mu = window mean on prod [mu_i - w_i, mu_i + w_i], w_i = L_i - |mu_i|).
  /// Free of box-truncation bias for densities symmetric about their mean.
  [[nodiscard]] const std::vector<double>& centered_mean() const { return require_moments(), centered_; }

 private:
  void require_moments() const {
    if (!has_moments_) throw ConfigError("DensityView: moments were not requested for this density");
  }

  void compute_moments();

  std::shared_ptr<const TensorTrain> tt_;
  bool has_moments_ = false;
  double mass_ = 0.0;
  std::vector<double> mean_, centered_;
};

/// Linear-form copy of a log-form TT, fitted by cross at a raised degree.
inline TensorTrain exponentiate(const TensorTrain& log_tt, int degree = 16, double tol = 1e-10) {
  if (!log_tt.log_form()) return log_tt;
  std::vector<BasisSpec> bases;
  for (const auto& b : log_tt.bases()) bases.emplace_back(std::max(degree, b.degree), b.half_width);
  CrossConfig cfg;
  const auto r = log_tt.ranks();
  cfg.ranks.assign(r.begin() + 1, r.end() - 1);
  cfg.residual_tol = tol;
  cfg.max_sweeps = 4;
  const Oracle f = [&](std::span<const double> x) { return log_tt.evaluate(x); };
  return fit(f, bases, cfg).tt;
}

/// Integral of x_axis^p m over the box; log-form densities are refit first.
inline double density_moment(const TensorTrain& tt, int p, std::optional<int> axis = std::nullopt) {
  if (!tt.log_form()) return tt.moment(p, axis);
  return exponentiate(tt).moment(p, axis);
}

inline void DensityView::compute_moments() {
  const TensorTrain linear = tt_->log_form() ? exponentiate(*tt_) : *tt_;
  mass_ = linear.moment(0);
  mean_.resize(linear.dim());
  for (int k = 0; k < linear.dim(); ++k) mean_[k] = linear.moment(1, k);

  const int d = linear.dim();
  centered_.resize(d);
  for (int k = 0; k < d; ++k) centered_[k] = mean_[k] / mass_;
  std::vector<double> lo(d), hi(d);
  for (int it = 0; it < 50; ++it) {
    for (int k = 0; k < d; ++k) {
      const double l = linear.basis(k).half_width;
      const double c = std::clamp(centered_[k], -l, l);
      const double w = l - std::abs(c);
      lo[k] = c - w;
      hi[k] = c + w;
    }
    const double mass = linear.window_moment(lo, hi, 0);
    double change = 0.0;
    for (int k = 0; k < d; ++k) {
      const double next = linear.window_moment(lo, hi, 1, k) / mass;
      change = std::max(change, std::abs(next - centered_[k]));
      centered_[k] = next;
    }
    if (change < 1e-15) break;
  }
  has_moments_ = true;
}

using VectorMap = std::function<void(std::span<const double>, std::span<double>)>;
using Coupling = std::function<double(std::span<const double>, const DensityView&)>;

struct MfgProblem {
  std::string name;
  int dim = 1;
  double half_width = 1.0;
  double horizon = 1.0;
  double nu = 0.0;

  std::function<double(std::span<const double>)> hamiltonian;
  VectorMap grad_hamiltonian;
  std::function<double(std::span<const double>)> lagrangian;
  bool quadratic_hamiltonian = false;  // H = |p|^2 / 2, so div q = Laplacian of u

  Coupling coupling;  // F(x, m)
  Coupling terminal;  // G(x, m)
  bool terminal_uses_density = false;
  bool coupling_uses_moments = false;
  std::function<double(std::span<const double>)> initial_density;
  std::optional<double> policy_radius;

  // Pure transport problems: prescribed velocity and reaction replace the policy.
  std::optional<VelocityField> prescribed_velocity;
  SpaceTimeFunction prescribed_reaction;

  std::function<double(std::span<const double>, double)> exact_u;
  std::function<double(std::span<const double>, double)> exact_m;

  void validate() const {
    if (dim < 1) throw ConfigError("MfgProblem: dim must be positive");
    if (!(half_width > 0.0)) throw ConfigError("MfgProblem: half_width must be positive");
    if (!(horizon > 0.0)) throw ConfigError("MfgProblem: horizon must be positive");
    if (!(nu >= 0.0)) throw ConfigError("MfgProblem: nu must be >= 0");
    if (policy_radius && !(*policy_radius >= 0.0)) throw ConfigError("MfgProblem: policy radius must be >= 0");
  }

  /// H(p) = |p|^2 / 2 with its gradient and Legendre transform.
  void set_quadratic_hamiltonian() {
    hamiltonian = [](std::span<const double> p) {
      double s = 0.0;
      for (double v : p) s += v * v;
      return 0.5 * s;
    };
    lagrangian = hamiltonian;
    grad_hamiltonian = [](std::span<const double> p, std::span<double> out) { std::copy(p.begin(), p.end(), out.begin()); };
    quadratic_hamiltonian = true;
  }
};

enum class SolveMode { FullMfg, ForwardOnly, BackwardOnly };
enum class SmoothingSchedule { Constant, Harmonic };

struct SolverConfig {
  int time_steps = 4;
  RuleKind rule = RuleKind::SL2p;
  SolveMode mode = SolveMode::FullMfg;
  SmoothingSchedule schedule = SmoothingSchedule::Constant;
  double smoothing = 1.0;
  double stop_tol = 1e-5;
  int max_iterations = 500;
  int hjb_degree = 2;
  int fp_degree = 2;
  int hjb_rank = 2;
  int fp_rank = 2;
  CrossConfig cross;
  bool log_density = false;
  bool sl1_source_at_foot = false;  // rectangle HJB source at the foot (Euler steps only)
  double drift_sign = -1.0;
  double hjb_margin = TensorTrain::kDefaultMargin;
  double fp_margin = TensorTrain::kDefaultMargin;
  std::optional<double> periodic_half_width;
  std::uint64_t validation_seed = 2024;
  int stop_points = 4096;
  double policy_round_tol = 1e-12;
  std::string checkpoint_path;  // written after every outer iteration when non-empty

  void validate() const {
    if (time_steps < 1) throw ConfigError("SolverConfig: time_steps must be >= 1");
    if (!(smoothing > 0.0 && smoothing <= 1.0)) throw ConfigError("SolverConfig: smoothing must lie in (0, 1]");
    if (!(stop_tol > 0.0)) throw ConfigError("SolverConfig: stop_tol must be positive");
    if (max_iterations < 1) throw ConfigError("SolverConfig: max_iterations must be >= 1");
    if (hjb_degree < 0 || fp_degree < 0) throw ConfigError("SolverConfig: degrees must be >= 0");
    if (hjb_rank < 1 || fp_rank < 1) throw ConfigError("SolverConfig: ranks must be >= 1");
    if (drift_sign != 1.0 && drift_sign != -1.0) throw ConfigError("SolverConfig: drift_sign must be +1 or -1");
    if (stop_points < 1) throw ConfigError("SolverConfig: stop_points must be positive");
  }

  [[nodiscard]] double delta(int n) const {
    return schedule == SmoothingSchedule::Harmonic ? 2.0 / (n + 2.0) : smoothing;
  }
  [[nodiscard]] double dt(const MfgProblem& p) const { return p.horizon / time_steps; }
};

/// q(x) = sum_j w_j clamp(grad_p H(grad u_j(x))). With H quadratic and no
/// clamp the terms are collapsed into one potential after every blend.
class Policy {
 public:
  struct Term {
    double weight = 1.0;
    std::shared_ptr<const TensorTrain> potential;
  };

  Policy() = default;
  Policy(const MfgProblem* problem, std::vector<Term> terms) : problem_(problem), terms_(std::move(terms)) {}

  [[nodiscard]] const std::vector<Term>& terms() const { return terms_; }
  [[nodiscard]] bool collapsible() const { return problem_->quadratic_hamiltonian && !problem_->policy_radius; }

  void velocity(std::span<const double> x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t d = x.size();
    std::vector<double> g(d), q(d);
    for (const auto& t : terms_) {
      t.potential->gradient(x, g);
      if (problem_->quadratic_hamiltonian)
        q = g;
      else
        problem_->grad_hamiltonian(g, q);
      clamp(q);
      for (std::size_t i = 0; i < d; ++i) out[i] += t.weight * q[i];
    }
  }

  [[nodiscard]] double divergence(std::span<const double> x) const {
    if (collapsible()) {
      double s = 0.0;
      for (const auto& t : terms_) s += t.weight * t.potential->laplacian(x);
      return s;
    }
    const std::size_t d = x.size();
    const double h = 1e-5 * problem_->half_width;
    std::vector<double> y(x.begin(), x.end()), hi(d), lo(d);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      y[i] = x[i] + h;
      velocity(y, hi);
      y[i] = x[i] - h;
      velocity(y, lo);
      y[i] = x[i];
      s += (hi[i] - lo[i]) / (2.0 * h);
    }
    return s;
  }

  /// (1 - delta) * this + delta * other.
  [[nodiscard]] Policy blend(const Policy& other, double delta, double round_tol) const {
    if (delta == 1.0) return other;
    std::vector<Term> terms;
    for (const auto& t : terms_) terms.push_back({(1.0 - delta) * t.weight, t.potential});
    for (const auto& t : other.terms_) terms.push_back({delta * t.weight, t.potential});
    if (collapsible()) {
      TensorTrain acc = detail::tt_scale(*terms[0].potential, terms[0].weight);
      for (std::size_t j = 1; j < terms.size(); ++j)
        acc = detail::tt_add(acc, detail::tt_scale(*terms[j].potential, terms[j].weight));
      acc = acc.round(round_tol);
      acc.set_extrapolation_margin(terms[0].potential->extrapolation_margin());
      return Policy(problem_, {{1.0, std::make_shared<const TensorTrain>(std::move(acc))}});
    }
    return Policy(problem_, std::move(terms));
  }

 private:
  void clamp(std::span<double> q) const {
    if (!problem_->policy_radius) return;
    double n = 0.0;
    for (double v : q) n += v * v;
    n = std::sqrt(n);
    const double r = *problem_->policy_radius;
    if (n > r) {
      const double f = n > 0.0 ? r / n : 0.0;
      for (double& v : q) v *= f;
    }
  }

  const MfgProblem* problem_ = nullptr;
  std::vector<Term> terms_;
};

struct IterationRecord {
  int iteration = 0;
  double residual = 0.0;
  double delta = 1.0;
  int cross_sweeps = 0;
  std::size_t oracle_calls = 0;
  int fit_warnings = 0;
  double seconds = 0.0;
};

struct SolverState {
  std::vector<std::shared_ptr<const TensorTrain>> u;  // k = 0..N
  std::vector<std::shared_ptr<const TensorTrain>> m;  // k = 0..N (empty in BackwardOnly mode)
  std::vector<Policy> policy;                         // k = 0..N
  std::vector<AdaptiveSampleSet> u_samples, m_samples;
  int iteration = 0;
  std::vector<IterationRecord> history;
  bool converged = false;
  std::shared_ptr<const TensorTrain> terminal_fit;
  std::shared_ptr<const TensorTrain> initial_fit;
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double final_residual = 0.0;
  int fit_warnings = 0;
  std::size_t oracle_calls = 0;
  double seconds = 0.0;
  std::vector<IterationRecord> history;
};

class SpiSolver {
 public:
  SpiSolver(const MfgProblem& problem, SolverConfig config) : problem_(problem), config_(std::move(config)) {
    problem_.validate();
    config_.validate();
    const int d = problem_.dim;
    hjb_bases_.assign(d, BasisSpec(config_.hjb_degree, problem_.half_width));
    fp_bases_.assign(d, BasisSpec(config_.fp_degree, problem_.half_width));
    scheme_ = StepScheme::for_rule(config_.rule, d, problem_.nu, config_.dt(problem_), config_.periodic_half_width);
    scheme_.source_at_foot = config_.sl1_source_at_foot;
    if (config_.mode != SolveMode::ForwardOnly && !problem_.terminal)
      throw ConfigError("SpiSolver: problem has no terminal cost");
    if (config_.mode != SolveMode::BackwardOnly && !problem_.initial_density)
      throw ConfigError("SpiSolver: problem has no initial density");
    if (config_.mode == SolveMode::ForwardOnly && !problem_.prescribed_velocity)
      throw ConfigError("SpiSolver: forward-only mode needs a prescribed velocity");

    std::mt19937_64 rng(config_.validation_seed);
    stop_points_.resize(static_cast<std::size_t>(config_.stop_points) * d);
    std::uniform_real_distribution<double> uni(-problem_.half_width, problem_.half_width);
    for (double& v : stop_points_) v = uni(rng);
    volume_ = std::pow(2.0 * problem_.half_width, d);
  }

  [[nodiscard]] const StepScheme& scheme() const { return scheme_; }
  [[nodiscard]] const SolverConfig& config() const { return config_; }

  /// Initial density and terminal fits, initial policy grad_p H(grad G).
  [[nodiscard]] SolverState initialize() {
    SolverState s;
    const int n = config_.time_steps;
    s.u.assign(n + 1, nullptr);
    s.m.assign(n + 1, nullptr);
    s.u_samples.assign(n + 1, {});
    s.m_samples.assign(n + 1, {});
    if (config_.mode != SolveMode::BackwardOnly) {
      auto fitted = fit_density([&](std::span<const double> x) { return problem_.initial_density(x); });
      s.m[0] = fitted.first;
      s.m_samples[0] = fitted.second;
      s.initial_fit = s.m[0];
    }
    if (config_.mode != SolveMode::ForwardOnly) {
      s.policy = init_policy(s);
    }
    return s;
  }

  [[nodiscard]] std::vector<Policy> init_policy(SolverState& s) {
    const DensityView view = s.m[0] ? DensityView(s.m[0], problem_.coupling_uses_moments) : DensityView();
    auto g = fit_value([&](std::span<const double> x) { return problem_.terminal(x, view); }, std::nullopt);
    auto gtt = std::make_shared<const TensorTrain>(std::move(g.tt));
    s.terminal_fit = gtt;
    return std::vector<Policy>(config_.time_steps + 1, Policy(&problem_, {{1.0, gtt}}));
  }

  void forward_sweep(SolverState& s) {
    const int n = config_.time_steps;
    for (int k = 0; k < n; ++k) {
      VelocityField b;
      SpaceTimeFunction reaction;
      if (config_.mode == SolveMode::ForwardOnly) {
        b = *problem_.prescribed_velocity;
        reaction = problem_.prescribed_reaction;
      } else {
        b = policy_velocity(s);
        const auto* pol = &s.policy;
        reaction = [pol](std::span<const double> x, int j) { return (*pol)[j].divergence(x); };
      }
      const TensorTrain& mk = *s.m[k];
      Oracle oracle;
      if (config_.log_density) {
        const PointFunction log_m = [&mk](std::span<const double> x) { return mk.expansion(x); };
        oracle = [&, log_m](std::span<const double> x) { return fp_step_log_value(log_m, b, reaction, scheme_, k, x); };
      } else {
        const PointFunction m_fn = [&mk](std::span<const double> x) { return mk.evaluate(x); };
        oracle = [&, m_fn](std::span<const double> x) { return fp_step_value(m_fn, b, reaction, scheme_, k, x); };
      }
      auto warm = warm_start(s.m[k + 1], s.m_samples[k + 1], s.m[k], s.m_samples[k]);
      auto fitted = fit_density(oracle, warm);
      s.m[k + 1] = fitted.first;
      s.m_samples[k + 1] = fitted.second;
    }
  }

  void backward_sweep(SolverState& s) {
    const int n = config_.time_steps;
    std::vector<DensityView> views(n + 1);
    if (config_.mode == SolveMode::FullMfg)
      for (int k = 0; k <= n; ++k) views[k] = DensityView(s.m[k], problem_.coupling_uses_moments);

    const DensityView& last = views[n];
    auto terminal = fit_value([&](std::span<const double> x) { return problem_.terminal(x, last); },
                              warm_start(s.u[n], s.u_samples[n], nullptr, {}));
    s.u[n] = std::make_shared<const TensorTrain>(std::move(terminal.tt));
    s.u_samples[n] = terminal.samples;
    s.terminal_fit = s.u[n];

    const VelocityField b = policy_velocity(s);
    const auto* pol = &s.policy;
    const MfgProblem* prob = &problem_;
    const SpaceTimeFunction source = [pol, prob, &views](std::span<const double> x, int j) {
      std::vector<double> q(x.size());
      (*pol)[j].velocity(x, q);
      double f = prob->lagrangian(q);
      if (prob->coupling) f += prob->coupling(x, views[j]);
      return f;
    };
    for (int k = n - 1; k >= 0; --k) {
      const TensorTrain& next = *s.u[k + 1];
      const PointFunction u_next = [&next](std::span<const double> x) { return next.evaluate(x); };
      const Oracle oracle = [&, u_next](std::span<const double> x) {
        return hjb_step_value(u_next, source, b, scheme_, k, x);
      };
      auto fitted = fit_value(oracle, warm_start(s.u[k], s.u_samples[k], s.u[k + 1], s.u_samples[k + 1]));
      s.u[k] = std::make_shared<const TensorTrain>(std::move(fitted.tt));
      s.u_samples[k] = fitted.samples;
    }
  }

  /// q^(n+1)_k = grad_p H(grad u_k) for every k.
  [[nodiscard]] std::vector<Policy> policy_update(const SolverState& s) const {
    std::vector<Policy> out;
    for (const auto& u : s.u) out.emplace_back(&problem_, std::vector<Policy::Term>{{1.0, u}});
    return out;
  }

  [[nodiscard]] std::vector<Policy> smooth_policy(const std::vector<Policy>& old_policy,
                                                  const std::vector<Policy>& new_policy, double delta) const {
    if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("smooth_policy: delta must lie in (0, 1]");
    std::vector<Policy> out;
    for (std::size_t k = 0; k < old_policy.size(); ++k)
      out.push_back(old_policy[k].blend(new_policy[k], delta, config_.policy_round_tol));
    return out;
  }

  /// Monte-Carlo L2 distance over the box between two functions.
  [[nodiscard]] double l2_distance(const TensorTrain& a, const TensorTrain& b) const {
    const int d = problem_.dim;
    const std::size_t np = stop_points_.size() / d;
    std::vector<double> sq(np);
    parallel_for(np, [&](std::size_t p) {
      const std::span<const double> x(stop_points_.data() + p * d, d);
      const double diff = a.evaluate(x) - b.evaluate(x);
      sq[p] = diff * diff;
    });
    double s = 0.0;
    for (double v : sq) s += v;
    return std::sqrt(volume_ * s / static_cast<double>(np));
  }

  SolveReport solve(SolverState& s) {
    const auto t0 = std::chrono::steady_clock::now();
    SolveReport report;
    if (config_.mode == SolveMode::ForwardOnly) {
      const std::size_t calls_before = calls_;
      forward_sweep(s);
      s.converged = true;
      s.history.push_back({1, 0.0, 1.0, sweeps_, calls_ - calls_before, warnings_, seconds_since(t0)});
    } else {
      while (s.iteration < config_.max_iterations) {
        const auto ti = std::chrono::steady_clock::now();
        const int sweeps_before = sweeps_, warnings_before = warnings_;
        const std::size_t calls_before = calls_;
        const auto prev_m = config_.mode == SolveMode::FullMfg ? s.m.back() : nullptr;
        const auto prev_u = s.u.front();
        if (config_.mode == SolveMode::FullMfg) forward_sweep(s);
        backward_sweep(s);
        const double delta = config_.delta(s.iteration);
        s.policy = smooth_policy(s.policy, policy_update(s), delta);
        double residual = std::numeric_limits<double>::infinity();
        if (prev_u) {
          residual = l2_distance(*s.u.front(), *prev_u);
          if (prev_m) residual += l2_distance(*s.m.back(), *prev_m);
        }
        ++s.iteration;
        s.history.push_back({s.iteration, residual, delta, sweeps_ - sweeps_before, calls_ - calls_before,
                             warnings_ - warnings_before, seconds_since(ti)});
        if (!config_.checkpoint_path.empty()) save_checkpoint(s, config_.checkpoint_path);
        if (residual <= config_.stop_tol) {
          s.converged = true;
          break;
        }
      }
    }
    report.converged = s.converged;
    report.iterations = s.iteration;
    report.final_residual = s.history.empty() ? 0.0 : s.history.back().residual;
    report.fit_warnings = warnings_;
    report.oracle_calls = calls_;
    report.seconds = seconds_since(t0);
    report.history = s.history;
    return report;
  }

  SolveReport solve() {
    SolverState s = initialize();
    auto report = solve(s);
    state_ = std::move(s);
    return report;
  }

  [[nodiscard]] const SolverState& state() const { return state_; }

  void save_checkpoint(const SolverState& s, const std::string& path) const {
    nlohmann::json j;
    j["iteration"] = s.iteration;
    j["converged"] = s.converged;
    for (const auto& u : s.u) j["u"].push_back(u ? to_json(*u) : nlohmann::json());
    for (const auto& m : s.m) j["m"].push_back(m ? to_json(*m) : nlohmann::json());
    for (const auto& p : s.policy) {
      nlohmann::json terms = nlohmann::json::array();
      for (const auto& t : p.terms()) terms.push_back({{"weight", t.weight}, {"potential", to_json(*t.potential)}});
      j["policy"].push_back(terms);
    }
    for (const auto& h : s.history) j["residuals"].push_back(h.residual);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write checkpoint " + path);
    out << j.dump();
  }

  /// Restores iterates and policy from a checkpoint; the next solve() call
  /// continues the outer loop from the stored iteration.
  [[nodiscard]] SolverState load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read checkpoint " + path);
    const auto j = nlohmann::json::parse(in);
    SolverState s = initialize();
    s.iteration = j.at("iteration").get<int>();
    auto read = [](const nlohmann::json& arr, std::vector<std::shared_ptr<const TensorTrain>>& out) {
      if (arr.size() != out.size()) throw ConfigError("checkpoint has a different number of time steps");
      for (std::size_t k = 0; k < arr.size(); ++k)
        if (!arr[k].is_null()) out[k] = std::make_shared<const TensorTrain>(tensor_train_from_json(arr[k]));
    };
    read(j.at("u"), s.u);
    read(j.at("m"), s.m);
    if (j.contains("policy")) {
      s.policy.clear();
      for (const auto& p : j.at("policy")) {
        std::vector<Policy::Term> terms;
        for (const auto& t : p)
          terms.push_back({t.at("weight").get<double>(),
                           std::make_shared<const TensorTrain>(tensor_train_from_json(t.at("potential")))});
        s.policy.emplace_back(&problem_, std::move(terms));
      }
    }
    if (j.contains("residuals"))
      for (const auto& r : j.at("residuals"))
        s.history.push_back({static_cast<int>(s.history.size()) + 1,
                             r.is_null() ? std::numeric_limits<double>::infinity() : r.get<double>()});
    return s;
  }

  [[nodiscard]] int total_cross_sweeps() const { return sweeps_; }
  [[nodiscard]] std::size_t total_oracle_calls() const { return calls_; }

 private:
  using Warm = std::optional<std::pair<TensorTrain, AdaptiveSampleSet>>;

  static double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
  }

  // Same time index from the previous iteration, else the neighbouring index of this sweep.
  static Warm warm_start(const std::shared_ptr<const TensorTrain>& same, const AdaptiveSampleSet& same_samples,
                         const std::shared_ptr<const TensorTrain>& neighbour, const AdaptiveSampleSet& neighbour_samples) {
    if (same && !same_samples.empty()) return std::make_pair(*same, same_samples);
    if (neighbour && !neighbour_samples.empty()) return std::make_pair(*neighbour, neighbour_samples);
    return std::nullopt;
  }

  VelocityField policy_velocity(const SolverState& s) const {
    const auto* pol = &s.policy;
    const double sign = config_.drift_sign;
    return {[pol, sign](std::span<const double> x, int j, std::span<double> out) {
              (*pol)[j].velocity(x, out);
              for (double& v : out) v *= sign;
            },
            {}};
  }

  CrossConfig cross_config(int rank) const {
    CrossConfig c = config_.cross;
    c.ranks.assign(problem_.dim - 1, rank);
    return c;
  }

  void record(const CrossDiagnostics& d) {
    sweeps_ += d.sweeps;
    calls_ += d.oracle_calls;
    if (!d.converged) ++warnings_;
  }

  CrossResult fit_value(const Oracle& f, const Warm& warm) {
    auto res = fit(f, hjb_bases_, cross_config(config_.hjb_rank), warm);
    res.tt.set_extrapolation_margin(config_.hjb_margin);
    record(res.diagnostics);
    return res;
  }

  std::pair<std::shared_ptr<const TensorTrain>, AdaptiveSampleSet> fit_density(const Oracle& density,
                                                                                const Warm& warm = std::nullopt) {
    CrossResult res;
    if (config_.log_density && !warm) {
      // The initial density arrives in linear form.
      const Oracle log_f = [&](std::span<const double> x) { return std::log(std::max(density(x), kDensityFloor)); };
      res = fit(log_f, fp_bases_, cross_config(config_.fp_rank), warm);
    } else {
      res = fit(density, fp_bases_, cross_config(config_.fp_rank), warm);
    }
    res.tt.set_log_form(config_.log_density);
    res.tt.set_extrapolation_margin(config_.fp_margin);
    record(res.diagnostics);
    return {std::make_shared<const TensorTrain>(std::move(res.tt)), std::move(res.samples)};
  }

  MfgProblem problem_;
  SolverConfig config_;
  std::vector<BasisSpec> hjb_bases_, fp_bases_;
  StepScheme scheme_;
  std::vector<double> stop_points_;
  double volume_ = 1.0;
  SolverState state_;
  int sweeps_ = 0;
  int warnings_ = 0;
  std::size_t calls_ = 0;
};

}  // namespace ttmfg
