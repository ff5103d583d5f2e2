#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracles {

/// Fourier collocation solution of m_t + sin(x) m_x = nu m_xx on the
/// periodic interval [-pi, pi), advanced with classical RK4.
class SpectralAdvectionDiffusion {
 public:
  SpectralAdvectionDiffusion(int n, double nu) : n_(n), nu_(nu), x_(n), d1_(n * n), d2_(n * n) {
    const double h = 2.0 * std::numbers::pi / n;
    for (int i = 0; i < n; ++i) x_[i] = -std::numbers::pi + i * h;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        d1_[i * n + j] = i == j ? 0.0 : 0.5 * ((i - j) % 2 ? -1.0 : 1.0) / std::tan((x_[i] - x_[j]) / 2.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += d1_[i * n + k] * d1_[k * n + j];
        d2_[i * n + j] = s;
      }
  }

  [[nodiscard]] const std::vector<double>& grid() const { return x_; }

  [[nodiscard]] std::vector<double> advance(std::vector<double> m, double t, int steps) const {
    const double h = t / steps;
    std::vector<double> k1, k2, k3, k4, tmp(n_);
    for (int s = 0; s < steps; ++s) {
      k1 = rhs(m);
      for (int i = 0; i < n_; ++i) tmp[i] = m[i] + 0.5 * h * k1[i];
      k2 = rhs(tmp);
      for (int i = 0; i < n_; ++i) tmp[i] = m[i] + 0.5 * h * k2[i];
      k3 = rhs(tmp);
      for (int i = 0; i < n_; ++i) tmp[i] = m[i] + h * k3[i];
      k4 = rhs(tmp);
      for (int i = 0; i < n_; ++i) m[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    return m;
  }

 private:
  [[nodiscard]] std::vector<double> rhs(const std::vector<double>& m) const {
    std::vector<double> out(n_);
    for (int i = 0; i < n_; ++i) {
      double dm = 0.0, ddm = 0.0;
      for (int j = 0; j < n_; ++j) {
        dm += d1_[i * n_ + j] * m[j];
        ddm += d2_[i * n_ + j] * m[j];
      }
      out[i] = -std::sin(x_[i]) * dm + nu_ * ddm;
    }
    return out;
  }

  int n_;
  double nu_;
  std::vector<double> x_, d1_, d2_;
};

inline double smooth_profile(double x) { return std::exp(std::cos(x)); }

/// Observed orders log2(e_i / e_{i+1}).
inline std::vector<double> halving_orders(const std::vector<double>& e) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) out.push_back(std::log2(e[i] / e[i + 1]));
  return out;
}

}  // namespace oracles
