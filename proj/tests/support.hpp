#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "ttmfg/legendre.hpp"
#include "ttmfg/tensor_train.hpp"

namespace testing_support {

using ttmfg::BasisSpec;
using ttmfg::Core;
using ttmfg::TensorTrain;

inline TensorTrain random_tt(std::mt19937_64& rng, int d, int degree, int rank, double half_width = 1.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<BasisSpec> bases(d, BasisSpec(degree, half_width));
  std::vector<Core> cores;
  for (int k = 0; k < d; ++k) {
    Core c(k == 0 ? 1 : rank, degree + 1, k == d - 1 ? 1 : rank);
    for (double& v : c.data) v = g(rng);
    cores.push_back(c);
  }
  return TensorTrain(bases, cores);
}

/// Full coefficient tensor, index (i_1, ..., i_d) flattened row-major.
inline std::vector<double> dense_coefficients(const TensorTrain& tt) {
  std::vector<double> acc{1.0};  // shape (prod n, r)
  std::size_t outer = 1;
  int rank = 1;
  for (int k = 0; k < tt.dim(); ++k) {
    const Core& c = tt.core(k);
    std::vector<double> next(outer * c.modes * c.right, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
      for (int a = 0; a < rank; ++a)
        for (int i = 0; i < c.modes; ++i)
          for (int b = 0; b < c.right; ++b)
            next[(o * c.modes + i) * c.right + b] += acc[o * rank + a] * c(a, i, b);
    acc.swap(next);
    outer *= c.modes;
    rank = c.right;
  }
  return acc;
}

/// Direct sum over every basis index of c * prod psi.
inline double dense_evaluate(const TensorTrain& tt, const std::vector<double>& x) {
  const auto coeff = dense_coefficients(tt);
  std::vector<std::vector<double>> psi(tt.dim());
  for (int k = 0; k < tt.dim(); ++k) {
    psi[k].resize(tt.basis(k).size());
    ttmfg::legendre::values(tt.basis(k).degree, x[k] / tt.basis(k).half_width, psi[k]);
  }
  double sum = 0.0;
  std::vector<int> idx(tt.dim(), 0);
  for (std::size_t flat = 0; flat < coeff.size(); ++flat) {
    double term = coeff[flat];
    for (int k = 0; k < tt.dim(); ++k) term *= psi[k][idx[k]];
    sum += term;
    for (int k = tt.dim() - 1; k >= 0; --k) {
      if (++idx[k] < tt.basis(k).size()) break;
      idx[k] = 0;
    }
  }
  return sum;
}

inline std::vector<double> random_point(std::mt19937_64& rng, int d, double half_width) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  std::vector<double> x(d);
  for (double& v : x) v = u(rng);
  return x;
}

}  // namespace testing_support
