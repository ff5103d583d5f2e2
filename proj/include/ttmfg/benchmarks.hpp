#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ttmfg/errors.hpp"
#include "ttmfg/spi_solver.hpp"

namespace ttmfg {

/// Problem plus closed-form integrals of the exact density over the box.
struct Benchmark {
  MfgProblem problem;
  std::function<double(double)> exact_box_mass;
  std::function<std::vector<double>(double)> exact_box_first_moment;
};

namespace detail {

// Integral over [-L, L] of the N(mean, var) density and of y times it.
inline double gaussian_box_mass(double mean, double var, double l) {
  const double s = std::sqrt(2.0 * var);
  return 0.5 * (std::erf((l - mean) / s) - std::erf((-l - mean) / s));
}

inline double gaussian_box_first(double mean, double var, double l) {
  const double sd = std::sqrt(var);
  auto pdf = [&](double y) { return std::exp(-0.5 * (y - mean) * (y - mean) / var) / (sd * std::sqrt(2.0 * std::numbers::pi)); };
  return mean * gaussian_box_mass(mean, var, l) + var * (pdf(-l) - pdf(l));
}

inline double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline void gaussian_box_integrals(const std::vector<double>& mean, const std::vector<double>& var, double l,
                                   double& mass, std::vector<double>& first) {
  const std::size_t d = mean.size();
  std::vector<double> m1(d), f1(d);
  mass = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    m1[i] = gaussian_box_mass(mean[i], var[i], l);
    f1[i] = gaussian_box_first(mean[i], var[i], l);
    mass *= m1[i];
  }
  first.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double p = f1[i];
    for (std::size_t j = 0; j < d; ++j)
      if (j != i) p *= m1[j];
    first[i] = p;
  }
}

}  // namespace detail

inline constexpr const char* kBenchmarkNames = "advdiff, positivity, local-mfg, nonlocal-mfg";

/// m_t - nu Lap m + q . grad m = 0 on [-1,1]^d with periodic data
/// m = offset + sin(pi sum(x_i - q_i t - s_i)) exp(-nu pi^2 d t).
inline Benchmark advection_diffusion_problem(int d, double nu, std::vector<double> q = {}, bool positivity = false) {
  if (d < 1) throw ConfigError("advection_diffusion_problem: d must be positive");
  if (!(nu > 0.0)) throw ConfigError("advection_diffusion_problem: nu must be positive");
  if (q.empty()) q.assign(d, 1.0);
  if (static_cast<int>(q.size()) != d) throw ConfigError("advection_diffusion_problem: q has wrong length");
  const double pi = std::numbers::pi;
  Benchmark b;
  MfgProblem& p = b.problem;
  p.name = positivity ? "positivity" : "advdiff";
  p.dim = d;
  p.half_width = 1.0;
  p.nu = nu;
  p.horizon = std::log(2.0) / (d * nu * pi * pi);
  const double offset = positivity ? 0.5 : 2.0;
  std::vector<double> shift(d, 0.0);
  if (!positivity)
    for (int i = 0; i < d; ++i) shift[i] = static_cast<double>(i) / d;
  p.exact_m = [=](std::span<const double> x, double t) {
    double a = 0.0;
    for (int i = 0; i < d; ++i) a += x[i] - q[i] * t - shift[i];
    return offset + std::sin(pi * a) * std::exp(-nu * pi * pi * d * t);
  };
  p.initial_density = [f = p.exact_m](std::span<const double> x) { return f(x, 0.0); };
  p.prescribed_velocity = VelocityField::constant(q);
  b.exact_box_mass = [=](double) { return offset * std::pow(2.0, d); };
  return b;
}

/// Probe points x*_k = (s_k, ..., s_k), s_k = T + k/4 - 1/16, k = -4..3.
inline std::vector<std::vector<double>> positivity_probe_points(int d, double horizon) {
  std::vector<std::vector<double>> pts;
  for (int k = -4; k <= 3; ++k) pts.emplace_back(d, horizon + k / 4.0 - 1.0 / 16.0);
  return pts;
}

struct LocalMfgConstants {
  double alpha = 0.0;
  double rate = 0.0;  // u* = alpha |x|^2 / 2 - rate t
};

inline LocalMfgConstants local_mfg_constants(int d, double nu, double beta, double gamma) {
  if (!(nu > 0.0)) throw ConfigError("local_mfg_problem: nu must be positive");
  const double disc = gamma * gamma + 4.0 * nu * nu * beta;
  if (disc < 0.0) throw DomainError("local_mfg_problem: gamma^2 + 4 nu^2 beta < 0");
  LocalMfgConstants c;
  c.alpha = (-gamma + std::sqrt(disc)) / (2.0 * nu);
  if (!(c.alpha > 0.0)) throw DomainError("local_mfg_problem: alpha must be positive");
  c.rate = nu * d * c.alpha + 0.5 * gamma * d * std::log(c.alpha / (2.0 * std::numbers::pi * nu));
  return c;
}

/// -u_t - nu Lap u + |grad u|^2/2 - beta |x|^2/2 = gamma ln m,
///  m_t - nu Lap m - div(m grad u) = 0.
inline Benchmark local_mfg_problem(int d, double nu, double beta, double gamma, double horizon = 1.0,
                                   double half_width = 1.0) {
  const auto c = local_mfg_constants(d, nu, beta, gamma);
  const double pi = std::numbers::pi;
  Benchmark b;
  MfgProblem& p = b.problem;
  p.name = "local-mfg";
  p.dim = d;
  p.half_width = half_width;
  p.horizon = horizon;
  p.nu = nu;
  p.set_quadratic_hamiltonian();
  const double alpha = c.alpha, rate = c.rate;
  const double norm = std::pow(alpha / (2.0 * pi * nu), 0.5 * d);
  p.exact_u = [=](std::span<const double> x, double t) { return 0.5 * alpha * detail::squared_norm(x) - rate * t; };
  p.exact_m = [=](std::span<const double> x, double) {
    return norm * std::exp(-alpha * detail::squared_norm(x) / (2.0 * nu));
  };
  // Without a density iterate (HJB-only runs) the coupling reads the exact density.
  p.coupling = [=](std::span<const double> x, const DensityView& m) {
    double f = 0.5 * beta * detail::squared_norm(x);
    if (gamma != 0.0)
      f += gamma * (m.empty() ? std::log(norm) - alpha * detail::squared_norm(x) / (2.0 * nu) : m.log_value(x));
    return f;
  };
  p.terminal = [=](std::span<const double> x, const DensityView&) {
    return 0.5 * alpha * detail::squared_norm(x) - rate * horizon;
  };
  p.initial_density = [f = p.exact_m](std::span<const double> x) { return f(x, 0.0); };
  double mass = 0.0;
  std::vector<double> first;
  detail::gaussian_box_integrals(std::vector<double>(d, 0.0), std::vector<double>(d, nu / alpha), half_width, mass,
                                 first);
  b.exact_box_mass = [mass](double) { return mass; };
  b.exact_box_first_moment = [first](double) { return first; };
  return b;
}

/// -u_t - nu Lap u + |grad u|^2/2 = |x - mu_m(t)|^2 / 2, u(T) = 0,
///  m_t - nu Lap m - div(m grad u) = 0, m(0) = N(mu0, Sigma0).
/// The coupling's mean is the centered-window mean of the density by default,
/// the plain box integral of x m otherwise.
inline Benchmark nonlocal_mfg_problem(int d, double nu, std::vector<double> mu0, std::vector<double> sigma0,
                                      double horizon = 0.25, double half_width = 2.5, bool centered_moment = true) {
  if (d < 1) throw ConfigError("nonlocal_mfg_problem: d must be positive");
  if (!(nu >= 0.0)) throw ConfigError("nonlocal_mfg_problem: nu must be >= 0");
  if (mu0.size() == 1) mu0.assign(d, mu0[0]);
  if (sigma0.size() == 1) sigma0.assign(d, sigma0[0]);
  if (static_cast<int>(mu0.size()) != d || static_cast<int>(sigma0.size()) != d)
    throw ConfigError("nonlocal_mfg_problem: mu0 / sigma0 have wrong length");
  for (double s : sigma0)
    if (!(s > 0.0)) throw ConfigError("nonlocal_mfg_problem: Sigma0 must be positive");
  const double pi = std::numbers::pi;
  Benchmark b;
  MfgProblem& p = b.problem;
  p.name = "nonlocal-mfg";
  p.dim = d;
  p.half_width = half_width;
  p.horizon = horizon;
  p.nu = nu;
  p.set_quadratic_hamiltonian();
  p.coupling_uses_moments = true;
  const double T = horizon;
  auto variance = [=](double t, int i) {
    const double c = std::cosh(T - t);
    return sigma0[i] * c * c / (std::cosh(T) * std::cosh(T)) + 2.0 * nu * c * c * (std::tanh(T) - std::tanh(T - t));
  };
  p.exact_u = [=](std::span<const double> x, double t) {
    const double pi_t = std::tanh(T - t);
    double quad = 0.0, lin = 0.0, mu2 = 0.0;
    for (int i = 0; i < d; ++i) {
      quad += x[i] * x[i];
      lin += -pi_t * mu0[i] * x[i];
      mu2 += mu0[i] * mu0[i];
    }
    return 0.5 * pi_t * quad + lin + 0.5 * pi_t * mu2 + nu * d * std::log(std::cosh(T - t));
  };
  p.exact_m = [=](std::span<const double> x, double t) {
    double e = 0.0, norm = 1.0;
    for (int i = 0; i < d; ++i) {
      const double v = variance(t, i);
      e += (x[i] - mu0[i]) * (x[i] - mu0[i]) / v;
      norm *= 2.0 * pi * v;
    }
    return std::exp(-0.5 * e) / std::sqrt(norm);
  };
  p.coupling = [centered_moment](std::span<const double> x, const DensityView& m) {
    const auto& mu = centered_moment ? m.centered_mean() : m.first_moment();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mu[i]) * (x[i] - mu[i]);
    return 0.5 * s;
  };
  p.terminal = [](std::span<const double>, const DensityView&) { return 0.0; };
  p.initial_density = [f = p.exact_m](std::span<const double> x) { return f(x, 0.0); };
  auto integrals = [=](double t, double& mass, std::vector<double>& first) {
    std::vector<double> var(d);
    for (int i = 0; i < d; ++i) var[i] = variance(t, i);
    detail::gaussian_box_integrals(mu0, var, half_width, mass, first);
  };
  b.exact_box_mass = [=](double t) {
    double mass;
    std::vector<double> first;
    integrals(t, mass, first);
    return mass;
  };
  b.exact_box_first_moment = [=](double t) {
    double mass;
    std::vector<double> first;
    integrals(t, mass, first);
    return first;
  };
  return b;
}

}  // namespace ttmfg
