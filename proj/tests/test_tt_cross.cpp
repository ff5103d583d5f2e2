#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <random>

#include "support.hpp"
#include "ttmfg/tt_cross.hpp"

using namespace ttmfg;
using namespace testing_support;

namespace {

double brute_force_best_det(const Eigen::MatrixXd& a, std::vector<int>& best_rows) {
  const int n = static_cast<int>(a.rows());
  double best = -1.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      Eigen::Matrix2d s;
      s.row(0) = a.row(i);
      s.row(1) = a.row(j);
      const double v = std::abs(s.determinant());
      if (v > best) {
        best = v;
        best_rows = {i, j};
      }
    }
  return best;
}

double relative_residual(const TensorTrain& tt, const Oracle& f, int d, double l, int seed) {
  std::mt19937_64 rng(seed);
  double num = 0.0, den = 0.0;
  for (int p = 0; p < 256; ++p) {
    const auto x = random_point(rng, d, l);
    const double e = f(x);
    num += (tt.evaluate(x) - e) * (tt.evaluate(x) - e);
    den += e * e;
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("maxvol", "[cross]") {
  Eigen::MatrixXd sq(3, 3);
  sq << 2, 1, 0, 1, 3, 1, 0, 1, 4;
  auto rows = maxvol(sq);
  std::sort(rows.begin(), rows.end());
  CHECK(rows == std::vector<int>{0, 1, 2});

  Eigen::MatrixXd a(4, 2);
  a << 1, 0, 0, 1, 10, 0, 0, 10;
  std::vector<int> oracle_rows;
  brute_force_best_det(a, oracle_rows);
  rows = maxvol(a);
  std::sort(rows.begin(), rows.end());
  CHECK(rows == oracle_rows);
  CHECK(rows == std::vector<int>{2, 3});

  Eigen::MatrixXd scaled = a;
  scaled.col(0) *= 1e-3;
  scaled.col(1) *= 7.0;
  rows = maxvol(scaled);
  std::sort(rows.begin(), rows.end());
  CHECK(rows == std::vector<int>{2, 3});

  Eigen::MatrixXd deficient(4, 2);
  deficient << 1, 2, 2, 4, 3, 6, -1, -2;
  CHECK_THROWS_AS(maxvol(deficient), RankDeficientError);
}

TEST_CASE("maxvol reaches a dominant submatrix", "[cross][property]") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int inst = 0; inst < 50; ++inst) {
    Eigen::MatrixXd a(20, 4);
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) = g(rng);
    const auto rows = maxvol(a);
    Eigen::MatrixXd sub(4, 4);
    for (int j = 0; j < 4; ++j) sub.row(j) = a.row(rows[j]);
    const Eigen::MatrixXd b = a * sub.inverse();
    CHECK(b.cwiseAbs().maxCoeff() <= 1.0 + 1e-2 + 1e-12);
  }
}

TEST_CASE("separable cubic is recovered exactly", "[cross]") {
  const Oracle f = [](std::span<const double> x) {
    double v = 1.0;
    for (double xi : x) v *= 1.0 + xi + xi * xi * xi;
    return v;
  };
  CrossConfig cfg;
  cfg.ranks = {1, 1};
  const auto res = fit(f, std::vector<BasisSpec>(3, BasisSpec(3, 1.0)), cfg);
  CHECK(res.diagnostics.holdout_residual <= 1e-10);
  CHECK(relative_residual(res.tt, f, 3, 1.0, 5) <= 1e-10);
}

TEST_CASE("constant oracle converges in one sweep", "[cross]") {
  const Oracle f = [](std::span<const double>) { return 5.0; };
  CrossConfig cfg;
  cfg.ranks = {1, 1, 1};
  const auto res = fit(f, std::vector<BasisSpec>(4, BasisSpec(2, 2.0)), cfg);
  CHECK(res.tt.max_rank() == 1);
  CHECK(res.diagnostics.sweeps == 1);
  CHECK(res.diagnostics.converged);
  CHECK(res.diagnostics.holdout_residual <= 1e-12);
}

TEST_CASE("warm start from a converged fit", "[cross]") {
  const Oracle f = [](std::span<const double> x) { return std::exp(0.3 * x[0]) * std::cos(x[1] - x[2]) + x[0] * x[2]; };
  CrossConfig cfg;
  cfg.ranks = {3, 3};
  cfg.residual_tol = 1e-6;
  const std::vector<BasisSpec> bases(3, BasisSpec(10, 1.0));
  const auto cold = fit(f, bases, cfg);
  REQUIRE(cold.diagnostics.converged);
  const auto warm = fit(f, bases, cfg, std::make_pair(cold.tt, cold.samples));
  CHECK(warm.diagnostics.sweeps == 1);
  CHECK(warm.diagnostics.converged);
  CHECK(warm.diagnostics.holdout_residual <= 1e-6);
}

TEST_CASE("random TTs are recovered", "[cross][property]") {
  std::mt19937_64 rng(12);
  int cases = 0;
  for (int d = 2; d <= 4; ++d)
    for (int n = 1; n <= 5; n += 2)
      for (int r = 1; r <= 3; ++r) {
        const auto target = random_tt(rng, d, n, r, 1.7);
        const Oracle f = [&](std::span<const double> x) { return target.evaluate(x); };
        CrossConfig cfg;
        cfg.ranks.assign(d - 1, r);
        cfg.seed = 100 + cases++;
        const auto res = fit(f, target.bases(), cfg);
        CHECK(res.diagnostics.holdout_residual <= 1e-8);
      }
}

TEST_CASE("oracle call budget per pass", "[cross][property]") {
  std::mt19937_64 rng(13);
  const auto target = random_tt(rng, 4, 4, 3);
  std::atomic<std::size_t> calls{0};
  const Oracle f = [&](std::span<const double> x) {
    ++calls;
    return target.evaluate(x);
  };
  CrossConfig cfg;
  cfg.ranks = {3, 3, 3};
  cfg.oversampling = 5;
  cfg.max_sweeps = 3;
  const auto res = fit(f, target.bases(), cfg);
  const std::vector<int> r{1, 3, 3, 3, 1};
  std::size_t bound = 0;
  for (int k = 0; k < 4; ++k) bound += r[k] * 5 * r[k + 1] + cfg.oversampling * r[k] * r[k + 1];
  CHECK(res.diagnostics.max_calls_per_pass <= bound);
  CHECK(res.diagnostics.oracle_calls == calls.load());
  CHECK(calls.load() <= 2 * bound * res.diagnostics.sweeps + 256);
}

TEST_CASE("fits are deterministic under a fixed seed", "[cross][property]") {
  const Oracle f = [](std::span<const double> x) { return std::sin(x[0] + 2 * x[1]) + x[2] * x[2]; };
  CrossConfig cfg;
  cfg.ranks = {3, 3};
  const std::vector<BasisSpec> bases(3, BasisSpec(8, 1.0));
  const auto a = fit(f, bases, cfg);
  const auto b = fit(f, bases, cfg);
  for (int k = 0; k < 3; ++k) CHECK(a.tt.core(k).data == b.tt.core(k).data);
}

TEST_CASE("non-finite oracle values are reported", "[cross]") {
  const Oracle f = [](std::span<const double> x) { return x[0] > 0.5 ? std::nan("") : 1.0; };
  CrossConfig cfg;
  cfg.ranks = {1};
  CHECK_THROWS_AS(fit(f, std::vector<BasisSpec>(2, BasisSpec(3, 1.0)), cfg), NonFiniteError);
}

TEST_CASE("unreachable tolerance yields a warning flag", "[cross]") {
  const Oracle f = [](std::span<const double> x) { return std::exp(-20 * (x[0] - x[1]) * (x[0] - x[1])); };
  CrossConfig cfg;
  cfg.ranks = {1};
  cfg.max_sweeps = 2;
  cfg.residual_tol = 1e-14;
  cfg.criterion = CrossCriterion::HeldOutResidual;
  const auto res = fit(f, std::vector<BasisSpec>(2, BasisSpec(4, 1.0)), cfg);
  CHECK_FALSE(res.diagnostics.converged);
  CHECK(res.diagnostics.sweeps == 2);
}

TEST_CASE("config validation", "[cross]") {
  const Oracle f = [](std::span<const double>) { return 1.0; };
  CrossConfig cfg;
  cfg.ranks = {2, 2};
  CHECK_THROWS_AS(fit(f, std::vector<BasisSpec>(2, BasisSpec(3, 1.0)), cfg), ConfigError);
  cfg.ranks = {0};
  CHECK_THROWS_AS(fit(f, std::vector<BasisSpec>(2, BasisSpec(3, 1.0)), cfg), ConfigError);
  cfg.ranks = {1};
  cfg.max_sweeps = 0;
  CHECK_THROWS_AS(fit(f, std::vector<BasisSpec>(2, BasisSpec(3, 1.0)), cfg), ConfigError);
}
