#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttmfg/errors.hpp"

namespace ttmfg {

enum class RuleKind { SL1, SL2e, SL2p, Deterministic };

inline std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::SL1: return "sl1";
    case RuleKind::SL2e: return "sl2e";
    case RuleKind::SL2p: return "sl2p";
    case RuleKind::Deterministic: return "deterministic";
  }
  return "?";
}

inline RuleKind parse_rule_kind(std::string_view name) {
  if (name == "sl1") return RuleKind::SL1;
  if (name == "sl2e") return RuleKind::SL2e;
  if (name == "sl2p" || name == "sl2") return RuleKind::SL2p;
  if (name == "deterministic" || name == "det") return RuleKind::Deterministic;
  throw ConfigError("unknown cubature rule '" + std::string(name) + "' (expected sl1, sl2e, sl2p, deterministic)");
}

/// Nodes and weights replacing E[phi(x + sqrt(2 nu dt) Z)], Z standard normal.
struct CubatureRule {
  int dim = 1;
  RuleKind kind = RuleKind::Deterministic;
  double variance = 0.0;  // per-axis variance 2 nu dt
  std::vector<double> nodes;  // count * dim, node-major
  std::vector<double> weights;
  bool negative_weights = false;

  [[nodiscard]] std::size_t size() const { return weights.size(); }
  [[nodiscard]] std::span<const double> node(std::size_t l) const {
    return {nodes.data() + l * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }

  void add(std::span<const double> xi, double w) {
    nodes.insert(nodes.end(), xi.begin(), xi.end());
    weights.push_back(w);
    if (w < 0.0) negative_weights = true;
  }
};

namespace detail {

inline void check_rule_args(int d, double nu, double dt, const char* who) {
  if (d < 1) throw ConfigError(std::string(who) + ": dimension must be positive");
  if (nu == 0.0) throw ConfigError(std::string(who) + ": nu = 0, use deterministic_rule");
  if (!(nu > 0.0) || !(dt > 0.0)) throw ConfigError(std::string(who) + ": nu and dt must be positive");
}

}  // namespace detail

inline CubatureRule deterministic_rule(int d) {
  if (d < 1) throw ConfigError("deterministic_rule: dimension must be positive");
  CubatureRule rule;
  rule.dim = d;
  rule.kind = RuleKind::Deterministic;
  rule.add(std::vector<double>(d, 0.0), 1.0);
  return rule;
}

inline CubatureRule sl1_rule(int d, double nu, double dt) {
  detail::check_rule_args(d, nu, dt, "sl1_rule");
  CubatureRule rule;
  rule.dim = d;
  rule.kind = RuleKind::SL1;
  rule.variance = 2.0 * nu * dt;
  const double h = std::sqrt(2.0 * d * nu * dt);
  std::vector<double> xi(d, 0.0);
  for (int i = 0; i < d; ++i) {
    for (double sign : {1.0, -1.0}) {
      xi[i] = sign * h;
      rule.add(xi, 1.0 / (2.0 * d));
    }
    xi[i] = 0.0;
  }
  return rule;
}

inline constexpr std::size_t kSl2eNodeBudget = 59049;  // 3^10

inline CubatureRule sl2e_rule(int d, double nu, double dt, std::size_t node_budget = kSl2eNodeBudget) {
  detail::check_rule_args(d, nu, dt, "sl2e_rule");
  std::size_t count = 1;
  for (int i = 0; i < d; ++i) {
    count *= 3;
    if (count > node_budget)
      throw ConfigError("sl2e_rule: 3^" + std::to_string(d) + " nodes exceed the budget; use sl2p instead");
  }
  CubatureRule rule;
  rule.dim = d;
  rule.kind = RuleKind::SL2e;
  rule.variance = 2.0 * nu * dt;
  const double h = std::sqrt(6.0 * nu * dt);
  const double pts[3] = {-h, 0.0, h};
  const double wts[3] = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
  std::vector<int> digit(d, 0);
  std::vector<double> xi(d);
  for (std::size_t c = 0; c < count; ++c) {
    double w = 1.0;
    for (int i = 0; i < d; ++i) {
      xi[i] = pts[digit[i]];
      w *= wts[digit[i]];
    }
    rule.add(xi, w);
    for (int i = d - 1; i >= 0; --i) {
      if (++digit[i] < 3) break;
      digit[i] = 0;
    }
  }
  return rule;
}

struct MomentSystemSolution {
  double radius = 0.0;
  double w_center = 0.0;
  double w_axial = 0.0;
  double w_diagonal = 0.0;
};

/// Solves mass, second, fourth and mixed fourth moment conditions for the
/// central / axial / face-diagonal layout:
///   w0 + 2d wA + 2d(d-1) wD = 1
///   2 wA r^2 + 4(d-1) wD r^2 = 2 nu dt
///   2 wA r^4 + 4(d-1) wD r^4 = 12 (nu dt)^2
///   4 wD r^4 = 4 (nu dt)^2
inline MomentSystemSolution solve_moment_system(int d, double nu, double dt) {
  if (d < 2) throw ConfigError("solve_moment_system: requires d >= 2");
  detail::check_rule_args(d, nu, dt, "solve_moment_system");
  const double s = nu * dt;
  MomentSystemSolution sol;
  // Ratio of the fourth- to second-moment equations fixes r^2.
  const double r2 = 12.0 * s * s / (2.0 * s);
  sol.radius = std::sqrt(r2);
  sol.w_diagonal = s * s / (r2 * r2);
  sol.w_axial = (2.0 * s / r2 - 4.0 * (d - 1) * sol.w_diagonal) / 2.0;
  sol.w_center = 1.0 - 2.0 * d * sol.w_axial - 2.0 * d * (d - 1) * sol.w_diagonal;
  return sol;
}

inline CubatureRule sl2p_rule(int d, double nu, double dt) {
  detail::check_rule_args(d, nu, dt, "sl2p_rule");
  CubatureRule rule;
  rule.dim = d;
  rule.kind = RuleKind::SL2p;
  rule.variance = 2.0 * nu * dt;
  const double r = std::sqrt(6.0 * nu * dt);
  std::vector<double> xi(d, 0.0);
  if (d == 1) {
    rule.add(xi, 2.0 / 3.0);
    for (double sign : {1.0, -1.0}) {
      xi[0] = sign * r;
      rule.add(xi, 1.0 / 6.0);
    }
    return rule;
  }
  const double w0 = (d * d - 7.0 * d + 18.0) / 18.0;
  const double wa = (4.0 - d) / 18.0;
  const double wd = 1.0 / 36.0;
  rule.add(xi, w0);
  for (int i = 0; i < d; ++i) {
    for (double sign : {1.0, -1.0}) {
      xi[i] = sign * r;
      rule.add(xi, wa);
    }
    xi[i] = 0.0;
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      for (double si : {1.0, -1.0})
        for (double sj : {1.0, -1.0}) {
          xi[i] = si * r;
          xi[j] = sj * r;
          rule.add(xi, wd);
          xi[i] = xi[j] = 0.0;
        }
  return rule;
}

/// Rule of the given kind; nu = 0 collapses every kind to the single-node rule.
inline CubatureRule make_rule(RuleKind kind, int d, double nu, double dt) {
  if (nu == 0.0 || kind == RuleKind::Deterministic) return deterministic_rule(d);
  switch (kind) {
    case RuleKind::SL1: return sl1_rule(d, nu, dt);
    case RuleKind::SL2e: return sl2e_rule(d, nu, dt);
    case RuleKind::SL2p: return sl2p_rule(d, nu, dt);
    default: break;
  }
  return deterministic_rule(d);
}

namespace detail {

inline double gaussian_moment_1d(int k, double sigma) {
  if (k % 2 == 1) return 0.0;
  double v = 1.0;
  for (int j = k - 1; j > 0; j -= 2) v *= j;
  return v * std::pow(sigma, k);
}

template <class Fn>
void for_each_multi_index(int d, int max_order, std::vector<int>& alpha, int axis, int used, Fn&& fn) {
  if (axis == d) {
    fn(alpha, used);
    return;
  }
  for (int k = 0; k + used <= max_order; ++k) {
    alpha[axis] = k;
    for_each_multi_index(d, max_order, alpha, axis + 1, used + k, fn);
  }
  alpha[axis] = 0;
}

}  // namespace detail

/// Worst scaled defect |sum w xi^alpha - E[Y^alpha]| / s^|alpha| over all
/// multi-indices with |alpha| <= max_order, s^2 the per-axis variance. The
/// reference variance defaults to the rule's own; pass one explicitly to
/// compare the single-node rule against a diffusive target.
inline double moment_defect(const CubatureRule& rule, int max_order,
                            std::optional<double> reference_variance = std::nullopt) {
  if (max_order < 0 || max_order > 6) throw ConfigError("moment_defect: max_order must lie in [0, 6]");
  const double var = reference_variance.value_or(rule.variance);
  const double sigma = std::sqrt(var);
  const double scale_base = sigma > 0.0 ? sigma : 1.0;
  const int d = rule.dim;
  std::vector<int> alpha(d, 0);
  double worst = 0.0;
  detail::for_each_multi_index(d, max_order, alpha, 0, 0, [&](const std::vector<int>& a, int order) {
    double quad = 0.0;
    for (std::size_t l = 0; l < rule.size(); ++l) {
      const auto xi = rule.node(l);
      double term = rule.weights[l];
      for (int i = 0; i < d && term != 0.0; ++i)
        if (a[i] > 0) term *= std::pow(xi[i], a[i]);
      quad += term;
    }
    double exact = 1.0;
    for (int i = 0; i < d; ++i)
      if (a[i] > 0) exact *= detail::gaussian_moment_1d(a[i], sigma);
    const double defect = std::abs(quad - exact) / std::pow(scale_base, order);
    worst = std::max(worst, defect);
  });
  return worst;
}

}  // namespace ttmfg
