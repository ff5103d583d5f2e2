#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ttmfg/errors.hpp"

namespace ttmfg {

/// Univariate Legendre basis psi_0..psi_degree on the physical interval
/// [-half_width, half_width].
struct BasisSpec {
  int degree = 0;
  double half_width = 1.0;

  BasisSpec() = default;
  BasisSpec(int degree_, double half_width_) : degree(degree_), half_width(half_width_) {
    if (degree < 0) throw ConfigError("BasisSpec: degree must be non-negative");
    if (!(half_width > 0.0) || !std::isfinite(half_width))
      throw ConfigError("BasisSpec: half_width must be positive and finite");
  }

  [[nodiscard]] int size() const { return degree + 1; }
  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

namespace legendre {

/// Values psi_0(s)..psi_n(s) by Bonnet's recurrence. No range check: the
/// recurrence is the natural polynomial extension outside [-1, 1].
inline void values(int degree, double s, std::span<double> out) {
  out[0] = 1.0;
  if (degree == 0) return;
  out[1] = s;
  for (int k = 1; k < degree; ++k)
    out[k + 1] = ((2.0 * k + 1.0) * s * out[k] - k * out[k - 1]) / (k + 1.0);
}

/// Values and first derivatives; P'_{k+1} = P'_{k-1} + (2k+1) P_k.
inline void values_and_derivatives(int degree, double s, std::span<double> val, std::span<double> der) {
  values(degree, s, val);
  der[0] = 0.0;
  if (degree == 0) return;
  der[1] = 1.0;
  for (int k = 1; k < degree; ++k) der[k + 1] = der[k - 1] + (2.0 * k + 1.0) * val[k];
}

/// Values, first and second derivatives.
inline void values_and_two_derivatives(int degree, double s, std::span<double> val, std::span<double> der,
                                       std::span<double> der2) {
  values_and_derivatives(degree, s, val, der);
  der2[0] = 0.0;
  if (degree == 0) return;
  der2[1] = 0.0;
  for (int k = 1; k < degree; ++k) der2[k + 1] = der2[k - 1] + (2.0 * k + 1.0) * der[k];
}

inline void check_reference(double s) {
  if (!(s >= -1.0 && s <= 1.0))
    throw DomainError("Legendre basis evaluated outside [-1,1] at s=" + std::to_string(s));
}

/// Gauss-Legendre rule with `count` nodes on [-1, 1], nodes ascending.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int count) {
  if (count < 1) throw ConfigError("gauss_legendre: count must be positive");
  std::vector<double> nodes(count), weights(count);
  const int half = (count + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = z;
      for (int k = 1; k < count; ++k) {
        const double p2 = ((2.0 * k + 1.0) * z * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
      }
      dp = count * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged root for the weight.
    double p0 = 1.0, p1 = z;
    for (int k = 1; k < count; ++k) {
      const double p2 = ((2.0 * k + 1.0) * z * p1 - k * p0) / (k + 1.0);
      p0 = p1;
      p1 = p2;
    }
    dp = count == 1 ? 1.0 : count * (z * p1 - p0) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    nodes[i] = -z;
    nodes[count - 1 - i] = z;
    weights[i] = w;
    weights[count - 1 - i] = w;
  }
  if (count % 2 == 1) nodes[count / 2] = 0.0;
  return {nodes, weights};
}

}  // namespace legendre

/// psi_i(s) for i = 0..degree; s must lie in [-1, 1].
inline std::vector<double> eval_basis(const BasisSpec& spec, double s) {
  legendre::check_reference(s);
  std::vector<double> out(spec.size());
  legendre::values(spec.degree, s, out);
  return out;
}

/// d psi_i / ds for i = 0..degree; callers apply the 1/L chain-rule factor.
inline std::vector<double> eval_basis_derivative(const BasisSpec& spec, double s) {
  legendre::check_reference(s);
  std::vector<double> val(spec.size()), der(spec.size());
  legendre::values_and_derivatives(spec.degree, s, val, der);
  return der;
}

inline std::vector<double> eval_basis_second_derivative(const BasisSpec& spec, double s) {
  legendre::check_reference(s);
  std::vector<double> val(spec.size()), der(spec.size()), der2(spec.size());
  legendre::values_and_two_derivatives(spec.degree, s, val, der, der2);
  return der2;
}

/// Physical coordinate x in [-L, L] to reference s = x / L.
inline double to_reference(const BasisSpec& spec, double x) {
  if (!(std::abs(x) <= spec.half_width))
    throw DomainError("to_reference: |x| exceeds half_width (x=" + std::to_string(x) + ")");
  return x / spec.half_width;
}

inline double from_reference(const BasisSpec& spec, double s) {
  legendre::check_reference(s);
  return s * spec.half_width;
}

/// Entry i is the integral over [-1,1] of s^p psi_i(s). Cached per (degree, p).
inline const std::vector<double>& moment_vector(const BasisSpec& spec, int p) {
  if (p < 0) throw DomainError("moment_vector: p must be non-negative");
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::vector<double>> cache;
  const auto key = std::make_pair(spec.degree, p);
  std::lock_guard lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  // Exact for polynomial integrands of degree <= 2*count - 1.
  const int count = (spec.degree + p) / 2 + 2;
  const auto [nodes, weights] = legendre::gauss_legendre(count);
  std::vector<double> result(spec.size(), 0.0), psi(spec.size());
  for (int q = 0; q < count; ++q) {
    legendre::values(spec.degree, nodes[q], psi);
    const double sp = std::pow(nodes[q], p);
    for (int i = 0; i < spec.size(); ++i) result[i] += weights[q] * sp * psi[i];
  }
  // Orthogonality: psi_i is orthogonal to s^p when i > p or i + p is odd.
  for (int i = 0; i < spec.size(); ++i)
    if (i > p || (i + p) % 2 == 1) result[i] = 0.0;
  return cache.emplace(key, std::move(result)).first->second;
}

}  // namespace ttmfg
