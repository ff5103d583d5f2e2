#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "ttmfg/errors.hpp"
#include "ttmfg/parallel.hpp"

namespace ttmfg {

struct ValidationSet {
  int dim = 1;
  double half_width = 1.0;
  std::vector<double> points;  // count * dim

  [[nodiscard]] std::size_t size() const { return points.size() / static_cast<std::size_t>(dim); }
  [[nodiscard]] std::span<const double> point(std::size_t p) const {
    return {points.data() + p * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

inline constexpr std::size_t kValidationPoints = 100000;

inline ValidationSet make_validation_set(int d, double half_width, std::size_t count = kValidationPoints,
                                         std::uint64_t seed = 12345) {
  if (d < 1 || count == 0) throw ConfigError("make_validation_set: need d >= 1 and count >= 1");
  ValidationSet v;
  v.dim = d;
  v.half_width = half_width;
  v.points.resize(count * d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-half_width, half_width);
  for (double& x : v.points) x = uni(rng);
  return v;
}

struct ErrorReport {
  double e2 = 0.0;
  double einf = 0.0;
  std::size_t guard_excluded = 0;  // points left out of E_inf (|h*| below the guard)
  bool absolute = false;           // exact solution vanished, E_2 is an absolute norm
};

inline constexpr double kInfGuard = 1e-9;

/// Relative discrete L2 and uniform errors.
inline ErrorReport compute_errors(const std::function<double(std::span<const double>)>& numeric,
                                  const std::function<double(std::span<const double>)>& exact,
                                  const ValidationSet& v) {
  const std::size_t n = v.size();
  std::vector<double> h(n), hs(n);
  parallel_for(n, [&](std::size_t p) {
    h[p] = numeric(v.point(p));
    hs[p] = exact(v.point(p));
  });
  double num = 0.0, den = 0.0, top = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    num += (h[p] - hs[p]) * (h[p] - hs[p]);
    den += hs[p] * hs[p];
    top = std::max(top, std::abs(hs[p]));
  }
  ErrorReport r;
  if (den == 0.0) {
    r.absolute = true;
    r.e2 = std::sqrt(num);
    r.einf = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.e2 = std::sqrt(num / den);
  const double guard = kInfGuard * top;
  for (std::size_t p = 0; p < n; ++p) {
    if (std::abs(hs[p]) < guard) {
      ++r.guard_excluded;
      continue;
    }
    r.einf = std::max(r.einf, std::abs(h[p] - hs[p]) / std::abs(hs[p]));
  }
  return r;
}

inline double positivity_probe(const std::function<double(std::span<const double>)>& m,
                               const std::vector<std::vector<double>>& probes) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& x : probes) lo = std::min(lo, m(x));
  return lo;
}

struct ConservationDefects {
  double mass = 0.0;
  double moment = 0.0;
};

inline ConservationDefects conservation_defects(double mass, std::span<const double> first_moment,
                                                double exact_mass, std::span<const double> exact_first_moment) {
  ConservationDefects c;
  c.mass = std::abs(mass - exact_mass);
  double s = 0.0;
  for (std::size_t i = 0; i < first_moment.size(); ++i)
    s += (first_moment[i] - exact_first_moment[i]) * (first_moment[i] - exact_first_moment[i]);
  c.moment = std::sqrt(s);
  return c;
}

/// log2(e_i / e_{i+1}); NaN where an error is not positive.
inline std::vector<double> convergence_order(std::span<const double> errors) {
  if (errors.size() < 2) throw ConfigError("convergence_order: need at least two errors");
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    if (!(errors[i] > 0.0) || !(errors[i + 1] > 0.0))
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    else
      out.push_back(std::log2(errors[i] / errors[i + 1]));
  }
  return out;
}

struct ModelFit {
  double a = 0.0;
  double b = 0.0;
  double r2 = 0.0;  // NaN when the transformed data has no variance
};

struct ScalingFit {
  ModelFit exponential;  // C = a e^{b d}
  ModelFit power;        // C = a d^b
  [[nodiscard]] bool prefers_power() const { return power.r2 > exponential.r2; }
};

namespace detail {

inline ModelFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, tss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    tss += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("fit_scaling: all dimensions are equal");
  ModelFit f;
  f.b = sxy / sxx;
  const double intercept = my - f.b * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (intercept + f.b * x[i]);
    rss += r * r;
  }
  f.a = std::exp(intercept);
  // Variance at rounding level counts as none.
  const bool flat = tss <= 1e-24 * n * (1.0 + my * my);
  f.r2 = flat ? std::numeric_limits<double>::quiet_NaN() : 1.0 - rss / tss;
  return f;
}

}  // namespace detail

/// Semi-log and log-log least squares; R^2 in the transformed coordinates.
inline ScalingFit fit_scaling(std::span<const double> dims, std::span<const double> times) {
  if (dims.size() != times.size()) throw ConfigError("fit_scaling: size mismatch");
  if (dims.size() < 3) throw ConfigError("fit_scaling: need at least three (d, time) pairs");
  std::vector<double> d(dims.begin(), dims.end()), logd, logt;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (!(times[i] > 0.0) || !(dims[i] > 0.0)) throw ConfigError("fit_scaling: times and dimensions must be positive");
    logd.push_back(std::log(dims[i]));
    logt.push_back(std::log(times[i]));
  }
  ScalingFit s;
  s.exponential = detail::linear_fit(d, logt);
  s.power = detail::linear_fit(logd, logt);
  return s;
}

}  // namespace ttmfg
