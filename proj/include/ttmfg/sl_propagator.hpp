#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttmfg/cubature.hpp"
#include "ttmfg/errors.hpp"

namespace ttmfg {

using PointFunction = std::function<double(std::span<const double>)>;
/// (x, time index) -> value.
using SpaceTimeFunction = std::function<double(std::span<const double>, int)>;

/// Characteristic velocity b(x, t_k). Feet follow x - dt b backwards and
/// x + dt b forwards.
struct VelocityField {
  std::function<void(std::span<const double>, int, std::span<double>)> velocity;
  SpaceTimeFunction divergence;  // optional

  static VelocityField zero() {
    return {[](std::span<const double>, int, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); },
            [](std::span<const double>, int) { return 0.0; }};
  }

  static VelocityField constant(std::vector<double> c) {
    return {[c](std::span<const double>, int, std::span<double> out) { std::copy(c.begin(), c.end(), out.begin()); },
            [](std::span<const double>, int) { return 0.0; }};
  }
};

enum class StepOrder { Euler1, CrankNicolson2 };

/// Reaction and source quadrature in time: trapezoid over (foot, t_k) and
/// (x, t_{k+1}), or a single rectangle evaluation at the base point.
enum class TimeQuadrature { Trapezoid, Rectangle };

struct StepScheme {
  StepOrder order = StepOrder::CrankNicolson2;
  CubatureRule rule;
  double dt = 0.0;
  std::optional<double> periodic_half_width;  // wrap feet into [-L, L) when set
  TimeQuadrature quadrature = TimeQuadrature::Trapezoid;
  // Rectangle HJB source at (Psi^+_l, t_{k+1}) instead of (x, t_k).
  bool source_at_foot = false;

  StepScheme() = default;
  /// Euler steps default to rectangle quadrature, Crank-Nicolson to trapezoid.
  StepScheme(StepOrder order_, CubatureRule rule_, double dt_, std::optional<double> periodic = std::nullopt,
             std::optional<TimeQuadrature> quadrature_ = std::nullopt)
      : order(order_), rule(std::move(rule_)), dt(dt_), periodic_half_width(periodic),
        quadrature(quadrature_.value_or(order_ == StepOrder::Euler1 ? TimeQuadrature::Rectangle
                                                                     : TimeQuadrature::Trapezoid)) {
    if (!(dt > 0.0)) throw ConfigError("StepScheme: dt must be positive");
    const RuleKind k = rule.kind;
    if (order == StepOrder::Euler1 && !(k == RuleKind::SL1 || k == RuleKind::Deterministic))
      throw ConfigError("StepScheme: Euler steps pair with sl1 or the deterministic rule");
    if (order == StepOrder::CrankNicolson2 && k == RuleKind::SL1)
      throw ConfigError("StepScheme: Crank-Nicolson steps pair with sl2e, sl2p or the deterministic rule");
    if (periodic && !(*periodic > 0.0)) throw ConfigError("StepScheme: periodic half width must be positive");
  }

  /// Euler for sl1, Crank-Nicolson otherwise; nu = 0 keeps the order and drops the noise.
  static StepScheme for_rule(RuleKind kind, int d, double nu, double dt,
                             std::optional<double> periodic = std::nullopt) {
    const StepOrder order = kind == RuleKind::SL1 ? StepOrder::Euler1 : StepOrder::CrankNicolson2;
    return StepScheme(order, make_rule(kind, d, nu, dt), dt, periodic);
  }

  [[nodiscard]] int dim() const { return rule.dim; }
};

namespace detail {

inline void wrap(const StepScheme& s, std::span<double> x) {
  if (!s.periodic_half_width) return;
  const double l = *s.periodic_half_width;
  for (double& v : x) {
    double y = std::fmod(v + l, 2.0 * l);
    if (y < 0.0) y += 2.0 * l;
    v = y - l;
  }
}

inline void check_finite(std::span<const double> x, const char* who, int k) {
  for (double v : x)
    if (!std::isfinite(v)) throw NonFiniteError(std::string(who) + ": non-finite value at time index " + std::to_string(k));
}

// Foot given the velocity at the base point (b0) which is shared by all nodes.
// sign = -1 traces back from t_{k+1} to t_k, +1 forward from t_k to t_{k+1}.
inline void foot_from(const VelocityField& b, const StepScheme& s, std::span<const double> x,
                      std::span<const double> b0, int k_second, std::span<const double> xi, double sign,
                      std::span<double> out, std::span<double> scratch) {
  const std::size_t d = x.size();
  if (s.order == StepOrder::Euler1) {
    for (std::size_t i = 0; i < d; ++i) out[i] = x[i] + sign * s.dt * b0[i] + xi[i];
  } else {
    for (std::size_t i = 0; i < d; ++i) out[i] = x[i] + sign * s.dt * b0[i] + xi[i];
    b.velocity(out, k_second, scratch);
    for (std::size_t i = 0; i < d; ++i) out[i] = x[i] + sign * 0.5 * s.dt * (b0[i] + scratch[i]) + xi[i];
  }
  wrap(s, out);
}

}  // namespace detail

/// Psi^-_l(x, t_{k+1}).
inline std::vector<double> backward_foot(const VelocityField& b, const StepScheme& s, std::span<const double> x,
                                         int k, std::size_t l) {
  const std::size_t d = x.size();
  std::vector<double> b0(d), out(d), scratch(d);
  b.velocity(x, k + 1, b0);
  detail::foot_from(b, s, x, b0, k, s.rule.node(l), -1.0, out, scratch);
  return out;
}

/// Psi^+_l(x, t_k).
inline std::vector<double> forward_foot(const VelocityField& b, const StepScheme& s, std::span<const double> x,
                                        int k, std::size_t l) {
  const std::size_t d = x.size();
  std::vector<double> b0(d), out(d), scratch(d);
  b.velocity(x, k, b0);
  detail::foot_from(b, s, x, b0, k + 1, s.rule.node(l), 1.0, out, scratch);
  return out;
}

/// m_{k+1}(x) = sum_l w_l m_k(Psi^-_l) exp(dt/2 (r(Psi^-_l, t_k) + r(x, t_{k+1}))),
/// or exp(dt r(x, t_{k+1})) under rectangle quadrature. An empty reaction means r = 0.
inline double fp_step_value(const PointFunction& m_k, const VelocityField& b, const SpaceTimeFunction& reaction,
                            const StepScheme& s, int k, std::span<const double> x) {
  const std::size_t d = x.size();
  const bool trapezoid = s.quadrature == TimeQuadrature::Trapezoid;
  std::vector<double> b0(d), foot(d), scratch(d);
  b.velocity(x, k + 1, b0);
  const double r_here = reaction ? reaction(x, k + 1) : 0.0;
  double sum = 0.0;
  for (std::size_t l = 0; l < s.rule.size(); ++l) {
    detail::foot_from(b, s, x, b0, k, s.rule.node(l), -1.0, foot, scratch);
    double term = m_k(foot);
    if (reaction && trapezoid) term *= std::exp(0.5 * s.dt * (reaction(foot, k) + r_here));
    sum += s.rule.weights[l] * term;
  }
  if (reaction && !trapezoid) sum *= std::exp(s.dt * r_here);
  if (!std::isfinite(sum)) {
    detail::check_finite(x, "fp_step", k);
    throw NonFiniteError("fp_step: non-finite density at time index " + std::to_string(k + 1));
  }
  return sum;
}

inline constexpr double kDensityFloor = 1e-300;

/// Same update for a density known through its logarithm; returns
/// log(max(m_{k+1}(x), floor)) without forming exp of the full exponents.
inline double fp_step_log_value(const PointFunction& log_m_k, const VelocityField& b,
                                const SpaceTimeFunction& reaction, const StepScheme& s, int k,
                                std::span<const double> x) {
  const std::size_t d = x.size();
  const std::size_t n = s.rule.size();
  const bool trapezoid = s.quadrature == TimeQuadrature::Trapezoid;
  std::vector<double> b0(d), foot(d), scratch(d), expo(n);
  b.velocity(x, k + 1, b0);
  const double r_here = reaction ? reaction(x, k + 1) : 0.0;
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < n; ++l) {
    detail::foot_from(b, s, x, b0, k, s.rule.node(l), -1.0, foot, scratch);
    double e = log_m_k(foot);
    if (reaction) e += trapezoid ? 0.5 * s.dt * (reaction(foot, k) + r_here) : s.dt * r_here;
    expo[l] = e;
    if (s.rule.weights[l] > 0.0) top = std::max(top, e);
  }
  double sum = 0.0;
  for (std::size_t l = 0; l < n; ++l) sum += s.rule.weights[l] * std::exp(expo[l] - top);
  if (!std::isfinite(sum) || !std::isfinite(top))
    throw NonFiniteError("fp_step: non-finite log density at time index " + std::to_string(k + 1));
  return std::log(std::max(sum, kDensityFloor)) + top;
}

/// u_k(x) = sum_l w_l (u_{k+1}(Psi^+_l) + dt/2 f(Psi^+_l, t_{k+1})) + dt/2 f(x, t_k),
/// or sum_l w_l u_{k+1}(Psi^+_l) + dt f(x, t_k) under rectangle quadrature
/// (dt f(Psi^+_l, t_{k+1}) inside the sum with source_at_foot).
/// An empty source means f = 0.
inline double hjb_step_value(const PointFunction& u_next, const SpaceTimeFunction& source, const VelocityField& b,
                             const StepScheme& s, int k, std::span<const double> x) {
  const std::size_t d = x.size();
  const bool trapezoid = s.quadrature == TimeQuadrature::Trapezoid;
  std::vector<double> b0(d), foot(d), scratch(d);
  b.velocity(x, k, b0);
  double sum = 0.0;
  for (std::size_t l = 0; l < s.rule.size(); ++l) {
    detail::foot_from(b, s, x, b0, k + 1, s.rule.node(l), 1.0, foot, scratch);
    double term = u_next(foot);
    if (source && trapezoid) term += 0.5 * s.dt * source(foot, k + 1);
    else if (source && s.source_at_foot) term += s.dt * source(foot, k + 1);
    sum += s.rule.weights[l] * term;
  }
  if (source && trapezoid) sum += 0.5 * s.dt * source(x, k);
  else if (source && !s.source_at_foot) sum += s.dt * source(x, k);
  if (!std::isfinite(sum)) throw NonFiniteError("hjb_step: non-finite value at time index " + std::to_string(k));
  return sum;
}

inline PointFunction fp_step(PointFunction m_k, VelocityField b, SpaceTimeFunction reaction, StepScheme s, int k) {
  return [m_k = std::move(m_k), b = std::move(b), reaction = std::move(reaction), s = std::move(s),
          k](std::span<const double> x) { return fp_step_value(m_k, b, reaction, s, k, x); };
}

inline PointFunction hjb_step(PointFunction u_next, SpaceTimeFunction source, VelocityField b, StepScheme s, int k) {
  return [u_next = std::move(u_next), source = std::move(source), b = std::move(b), s = std::move(s),
          k](std::span<const double> x) { return hjb_step_value(u_next, source, b, s, k, x); };
}

}  // namespace ttmfg
