#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <vector>

#include "ttmfg/errors.hpp"
#include "ttmfg/metrics.hpp"
#include "ttmfg/sl_propagator.hpp"
#include "ttmfg/spi_solver.hpp"

namespace ttmfg {

enum class GridInterpolation { Multilinear, CubicLagrange };

/// Values on a uniform tensor grid over [-L, L]^d with piecewise polynomial
/// interpolation; points outside the box extrapolate from the edge stencil.
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(int dim, int points, double half_width, GridInterpolation interp)
      : dim_(dim), n_(points), l_(half_width), interp_(interp) {
    if (dim < 1 || dim > 3) throw ConfigError("GridFunction: grid reference supports 1 <= d <= 3");
    const int need = interp == GridInterpolation::CubicLagrange ? 4 : 2;
    if (points < need) throw ConfigError("GridFunction: too few points per axis for the interpolation order");
    h_ = 2.0 * l_ / (n_ - 1);
    std::size_t total = 1;
    for (int k = 0; k < dim; ++k) total *= n_;
    values_.assign(total, 0.0);
  }

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] std::vector<double>& values() { return values_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }

  void node(std::size_t flat, std::span<double> x) const {
    for (int k = dim_ - 1; k >= 0; --k) {
      x[k] = -l_ + h_ * static_cast<double>(flat % n_);
      flat /= n_;
    }
  }

  [[nodiscard]] double evaluate(std::span<const double> x) const { return interpolate(x, -1); }

  void gradient(std::span<const double> x, std::span<double> out) const {
    for (int k = 0; k < dim_; ++k) out[k] = interpolate(x, k);
  }

 private:
  // Stencil start and weights (or derivative weights) of one axis.
  int stencil(double x, bool derivative, double* w) const {
    const int width = interp_ == GridInterpolation::CubicLagrange ? 4 : 2;
    const double pos = (x + l_) / h_;
    int cell = static_cast<int>(std::floor(pos));
    const int start = std::clamp(cell - (width == 4 ? 1 : 0), 0, n_ - width);
    const double t = pos - start;
    for (int a = 0; a < width; ++a) {
      if (!derivative) {
        double v = 1.0;
        for (int b = 0; b < width; ++b)
          if (b != a) v *= (t - b) / static_cast<double>(a - b);
        w[a] = v;
      } else {
        double s = 0.0;
        for (int c = 0; c < width; ++c) {
          if (c == a) continue;
          double v = 1.0 / static_cast<double>(a - c);
          for (int b = 0; b < width; ++b)
            if (b != a && b != c) v *= (t - b) / static_cast<double>(a - b);
          s += v;
        }
        w[a] = s / h_;
      }
    }
    return start;
  }

  double interpolate(std::span<const double> x, int deriv_axis) const {
    const int width = interp_ == GridInterpolation::CubicLagrange ? 4 : 2;
    int start[3];
    double w[3][4];
    for (int k = 0; k < dim_; ++k) start[k] = stencil(x[k], k == deriv_axis, w[k]);
    double sum = 0.0;
    int idx[3] = {0, 0, 0};
    const int total = static_cast<int>(std::pow(width, dim_));
    for (int c = 0; c < total; ++c) {
      int rem = c;
      double weight = 1.0;
      std::size_t flat = 0;
      for (int k = dim_ - 1; k >= 0; --k) {
        idx[k] = rem % width;
        rem /= width;
      }
      for (int k = 0; k < dim_; ++k) {
        weight *= w[k][idx[k]];
        flat = flat * n_ + static_cast<std::size_t>(start[k] + idx[k]);
      }
      sum += weight * values_[flat];
    }
    return sum;
  }

  int dim_ = 1;
  int n_ = 2;
  double l_ = 1.0;
  double h_ = 1.0;
  GridInterpolation interp_ = GridInterpolation::CubicLagrange;
  std::vector<double> values_;
};

struct GridReferenceConfig {
  int points_per_axis = 10;
  int time_steps = 4;
  GridInterpolation interpolation = GridInterpolation::CubicLagrange;
  int max_iterations = 100;
  double tol = 1e-12;
  double drift_sign = -1.0;
};

struct GridReferenceResult {
  ErrorReport errors;
  int iterations = 0;
  bool converged = false;
  double seconds = 0.0;
  GridFunction u0;
};

/// First-order grid semi-Lagrangian policy iteration for the HJB equation
/// alone (coupling independent of the density); d <= 3.
inline GridReferenceResult grid_sl_reference(const MfgProblem& problem, const GridReferenceConfig& cfg,
                                             const ValidationSet& vset) {
  if (problem.dim > 3) throw ConfigError("grid_sl_reference: refusing d > 3 (memory guard)");
  if (!problem.terminal || !problem.exact_u) throw ConfigError("grid_sl_reference: problem needs terminal and exact u");
  if (cfg.time_steps < 1) throw ConfigError("grid_sl_reference: time_steps must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const int d = problem.dim, n = cfg.time_steps;
  const double dt = problem.horizon / n;
  const StepScheme scheme = StepScheme::for_rule(RuleKind::SL1, d, problem.nu, dt);
  const DensityView none;

  GridFunction proto(d, cfg.points_per_axis, problem.half_width, cfg.interpolation);
  std::vector<GridFunction> u(n + 1, proto), policy;
  std::vector<double> x(d);
  for (std::size_t p = 0; p < proto.size(); ++p) {
    proto.node(p, x);
    u[n].values()[p] = problem.terminal(x, none);
  }
  policy.assign(n + 1, u[n]);

  GridReferenceResult res;
  std::vector<double> previous;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const auto* pol = &policy;
    const MfgProblem* prob = &problem;
    const double sign = cfg.drift_sign;
    const VelocityField b{[pol, sign](std::span<const double> y, int j, std::span<double> out) {
                            (*pol)[j].gradient(y, out);
                            for (double& v : out) v *= sign;
                          },
                          {}};
    const SpaceTimeFunction source = [pol, prob, &none](std::span<const double> y, int j) {
      std::vector<double> q(y.size());
      (*pol)[j].gradient(y, q);
      double f = prob->lagrangian(q);
      if (prob->coupling) f += prob->coupling(y, none);
      return f;
    };
    for (int k = n - 1; k >= 0; --k) {
      const GridFunction& next = u[k + 1];
      const PointFunction u_next = [&next](std::span<const double> y) { return next.evaluate(y); };
      GridFunction cur = proto;
      parallel_for(cur.size(), [&](std::size_t p) {
        std::vector<double> y(d);
        cur.node(p, y);
        cur.values()[p] = hjb_step_value(u_next, source, b, scheme, k, y);
      });
      u[k] = std::move(cur);
    }
    policy = u;
    ++res.iterations;
    double change = previous.empty() ? std::numeric_limits<double>::infinity() : 0.0;
    if (!previous.empty())
      for (std::size_t p = 0; p < previous.size(); ++p) change = std::max(change, std::abs(previous[p] - u[0].values()[p]));
    previous = u[0].values();
    if (change <= cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.u0 = u[0];
  const GridFunction& u0 = res.u0;
  res.errors = compute_errors([&](std::span<const double> y) { return u0.evaluate(y); },
                              [&](std::span<const double> y) { return problem.exact_u(y, 0.0); }, vset);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace ttmfg
