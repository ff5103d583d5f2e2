#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"
#include "ttmfg/benchmarks.hpp"
#include "ttmfg/grid_reference.hpp"
#include "ttmfg/legendre.hpp"
#include "ttmfg/metrics.hpp"
#include "ttmfg/tt_cross.hpp"

using namespace ttmfg;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

using SpaceTime = std::function<double(std::span<const double>, double)>;

// Fourth-order five-point stencils.
constexpr double kH = 1e-3;

double d_dt(const SpaceTime& f, std::span<const double> x, double t) {
  return (-f(x, t + 2 * kH) + 8 * f(x, t + kH) - 8 * f(x, t - kH) + f(x, t - 2 * kH)) / (12 * kH);
}

double d_dx(const SpaceTime& f, std::vector<double> x, double t, int i) {
  const double x0 = x[i];
  double s = 0.0;
  const double c[4] = {1, -8, 8, -1};
  const double o[4] = {-2, -1, 1, 2};
  for (int j = 0; j < 4; ++j) {
    x[i] = x0 + o[j] * kH;
    s += c[j] * f(x, t);
  }
  return s / (12 * kH);
}

double d2_dx2(const SpaceTime& f, std::vector<double> x, double t, int i) {
  const double x0 = x[i];
  double s = -30 * f(x, t);
  const double c[4] = {-1, 16, 16, -1};
  const double o[4] = {-2, -1, 1, 2};
  for (int j = 0; j < 4; ++j) {
    x[i] = x0 + o[j] * kH;
    s += c[j] * f(x, t);
  }
  return s / (12 * kH * kH);
}

double laplacian(const SpaceTime& f, const std::vector<double>& x, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += d2_dx2(f, x, t, static_cast<int>(i));
  return s;
}

// m_t - nu Lap m - div(m grad u) for an MFG pair.
double fp_residual(const MfgProblem& p, const std::vector<double>& x, double t) {
  double div = 0.0;
  for (int i = 0; i < p.dim; ++i) {
    const SpaceTime flux = [&](std::span<const double> y, double s) {
      std::vector<double> z(y.begin(), y.end());
      return p.exact_m(y, s) * d_dx(p.exact_u, z, s, i);
    };
    div += d_dx(flux, x, t, i);
  }
  return d_dt(p.exact_m, x, t) - p.nu * laplacian(p.exact_m, x, t) - div;
}

double hjb_residual(const MfgProblem& p, const std::vector<double>& x, double t, double running_cost) {
  double grad2 = 0.0;
  for (int i = 0; i < p.dim; ++i) {
    const double g = d_dx(p.exact_u, x, t, i);
    grad2 += g * g;
  }
  return -d_dt(p.exact_u, x, t) - p.nu * laplacian(p.exact_u, x, t) + 0.5 * grad2 - running_cost;
}

std::vector<double> point(std::mt19937_64& rng, int d, double l) { return testing_support::random_point(rng, d, l); }

}  // namespace

TEST_CASE("advection-diffusion exact solution satisfies its PDE", "[benchmarks][property]") {
  std::mt19937_64 rng(1);
  for (bool positivity : {false, true}) {
    const auto b = advection_diffusion_problem(3, 0.1, {}, positivity);
    const auto& p = b.problem;
    for (int n = 0; n < 100; ++n) {
      const auto x = point(rng, 3, 1.0);
      const double t = std::uniform_real_distribution<double>(0.01, p.horizon)(rng);
      double adv = 0.0;
      for (int i = 0; i < 3; ++i) adv += d_dx(p.exact_m, x, t, i);
      CHECK(std::abs(d_dt(p.exact_m, x, t) - p.nu * laplacian(p.exact_m, x, t) + adv) <= 1e-6);
    }
  }
}

TEST_CASE("local MFG exact pair satisfies both equations", "[benchmarks][property]") {
  std::mt19937_64 rng(2);
  struct Case {
    int d;
    double nu, beta, gamma, l;
  };
  for (const Case c : {Case{3, 1.0, 1.0, 0.1, 1.0}, Case{3, 0.01, 1.0, 0.0, 0.1}, Case{6, 1.0, 0.1, 0.1, 1.0}}) {
    const auto b = local_mfg_problem(c.d, c.nu, c.beta, c.gamma, 1.0, c.l);
    const auto& p = b.problem;
    for (int n = 0; n < 100; ++n) {
      const auto x = point(rng, c.d, c.l);
      const double t = std::uniform_real_distribution<double>(0.01, 0.99)(rng);
      double r2 = 0.0;
      for (double v : x) r2 += v * v;
      const double cost = 0.5 * c.beta * r2 + c.gamma * std::log(p.exact_m(x, t));
      CHECK(std::abs(hjb_residual(p, x, t, cost)) <= 1e-6);
      CHECK(std::abs(fp_residual(p, x, t)) <= 1e-6 * std::max(1.0, p.exact_m(x, t)));
    }
  }
}

TEST_CASE("non-local MFG exact pair satisfies both equations", "[benchmarks][property]") {
  std::mt19937_64 rng(3);
  const std::vector<double> mu0{0.1, -0.2, 0.3};
  for (double nu : {0.0, 1e-3, 0.1}) {
    const auto b = nonlocal_mfg_problem(3, nu, mu0, {0.5, 0.4, 0.6});
    const auto& p = b.problem;
    for (int n = 0; n < 100; ++n) {
      const auto x = point(rng, 3, 1.5);
      const double t = std::uniform_real_distribution<double>(0.01, 0.24)(rng);
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += (x[i] - mu0[i]) * (x[i] - mu0[i]);
      CHECK(std::abs(hjb_residual(p, x, t, 0.5 * s)) <= 1e-6);
      CHECK(std::abs(fp_residual(p, x, t)) <= 1e-6);
    }
  }
}

TEST_CASE("advection-diffusion examples", "[benchmarks]") {
  const auto b = advection_diffusion_problem(3, 0.1);
  CHECK_THAT(b.problem.horizon, WithinAbs(0.23411, 1e-5));
  CHECK_THAT(b.problem.horizon / 2, WithinAbs(0.1171, 1e-4));
  // sum(x_i - s_i) = 0 with s = (0, 1/3, 2/3).
  CHECK_THAT(b.problem.exact_m(std::vector<double>{0.5, 0.0, 0.5}, 0.0), WithinAbs(2.0, 1e-14));
  CHECK_THROWS_AS(advection_diffusion_problem(0, 0.1), ConfigError);

  const auto pos = advection_diffusion_problem(8, 0.1, {}, true);
  const double T = pos.problem.horizon;
  const auto probes = positivity_probe_points(8, T);
  REQUIRE(probes.size() == 8);
  CHECK_THAT(probes.front()[0], WithinAbs(T - 1.0 - 1.0 / 16, 1e-15));
  const double lo = positivity_probe([&](std::span<const double> x) { return pos.problem.exact_m(x, T); }, probes);
  CHECK_THAT(lo, WithinAbs(0.0, 1e-12));
}

TEST_CASE("local MFG examples", "[benchmarks]") {
  const auto c0 = local_mfg_constants(3, 0.01, 4.0, 0.0);
  CHECK_THAT(c0.alpha, WithinAbs(2.0, 1e-12));
  const auto b = local_mfg_problem(3, 1.0, 1.0, 0.1);
  const std::vector<double> x{0.3, -0.2, 0.5};
  CHECK(b.problem.exact_m(x, 0.0) == b.problem.exact_m(x, 0.7));
  const double alpha = local_mfg_constants(3, 1.0, 1.0, 0.1).alpha;
  // Whole-space mass is one; box mass of the same Gaussian on a wide box.
  CHECK_THAT(std::pow(detail::gaussian_box_mass(0.0, 1.0 / alpha, 40.0), 3), WithinAbs(1.0, 1e-14));
  CHECK(b.exact_box_mass(0.0) < 1.0);
  CHECK_THROWS_AS(local_mfg_problem(2, 1.0, -1.0, 0.1), DomainError);
  CHECK_THROWS_AS(local_mfg_problem(2, 0.0, 1.0, 0.1), ConfigError);
  // Exact log density replaces the iterate when none is supplied.
  CHECK_THAT(b.problem.coupling(x, DensityView()),
             WithinAbs(0.5 * 0.38 + 0.1 * std::log(b.problem.exact_m(x, 0.0)), 1e-12));
}

TEST_CASE("non-local covariance matches an ODE oracle", "[benchmarks][oracle]") {
  // Under q = -tanh(T - t)(x - mu0) the variance obeys v' = -2 tanh(T - t) v + 2 nu.
  const double T = 0.25, s0 = 0.5;
  for (double nu : {0.0, 1e-3}) {
    const auto b = nonlocal_mfg_problem(1, nu, {0.0}, {s0}, T, 6.0);
    const int steps = 4000;
    const double h = T / steps;
    auto rhs = [&](double t, double v) { return -2 * std::tanh(T - t) * v + 2 * nu; };
    double v = s0;
    for (int k = 0; k < steps; ++k) {
      const double t = k * h;
      const double k1 = rhs(t, v), k2 = rhs(t + h / 2, v + h / 2 * k1), k3 = rhs(t + h / 2, v + h / 2 * k2),
                   k4 = rhs(t + h, v + h * k3);
      v += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    const double peak = b.problem.exact_m(std::vector<double>{0.0}, T);
    CHECK_THAT(1.0 / (2 * std::numbers::pi * peak * peak), WithinRel(v, 1e-10));
    if (nu == 0.0) CHECK_THAT(v, WithinRel(s0 / std::pow(std::cosh(T), 2), 1e-10));
  }
  const auto b = nonlocal_mfg_problem(3, 1e-3, {0.1}, {0.5});
  CHECK(b.problem.exact_u(std::vector<double>{0.4, -1.0, 2.0}, 0.25) == 0.0);
  CHECK_THROWS_AS(nonlocal_mfg_problem(2, 0.0, {0.1}, {-0.5}), ConfigError);
  CHECK_THROWS_AS(nonlocal_mfg_problem(2, 0.0, {0.1, 0.2, 0.3}, {0.5}), ConfigError);
}

TEST_CASE("box integrals of Gaussians", "[benchmarks][oracle]") {
  const auto [nodes, weights] = legendre::gauss_legendre(200);
  for (const auto& [mean, var, l] : {std::tuple{0.1, 0.5, 2.5}, std::tuple{0.3, 0.2, 1.0}, std::tuple{-0.7, 1.5, 1.0}}) {
    double mass = 0.0, first = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double y = l * nodes[i];
      const double g = std::exp(-0.5 * (y - mean) * (y - mean) / var) / std::sqrt(2 * std::numbers::pi * var);
      mass += l * weights[i] * g;
      first += l * weights[i] * y * g;
    }
    CHECK_THAT(detail::gaussian_box_mass(mean, var, l), WithinAbs(mass, 1e-14));
    CHECK_THAT(detail::gaussian_box_first(mean, var, l), WithinAbs(first, 1e-14));
  }
}

TEST_CASE("the exact non-local density keeps its mean", "[benchmarks]") {
  const std::vector<double> mu0{0.1, -0.2};
  const auto b = nonlocal_mfg_problem(2, 1e-3, mu0, {0.5});
  const double T = b.problem.horizon;
  CrossConfig cfg;
  cfg.ranks = {2};
  auto r = fit([&](std::span<const double> x) { return b.problem.exact_m(x, T); },
               std::vector<BasisSpec>(2, BasisSpec(40, 2.5)), cfg);
  const DensityView view(std::make_shared<const TensorTrain>(std::move(r.tt)), true);
  for (int i = 0; i < 2; ++i) CHECK_THAT(view.centered_mean()[i], WithinAbs(mu0[i], 1e-8));
  // Refit of the exact density: conservation defects at fit accuracy.
  const auto defects = conservation_defects(view.mass(), view.first_moment(), b.exact_box_mass(T), b.exact_box_first_moment(T));
  CHECK(defects.mass <= 1e-8);
  CHECK(defects.moment <= 1e-8);
}

TEST_CASE("error metrics", "[benchmarks][metrics]") {
  const auto v = make_validation_set(3, 1.0, 5000, 4);
  const auto f = [](std::span<const double> x) { return 2.0 + x[0] * x[1] - x[2]; };
  const auto e0 = compute_errors(f, f, v);
  CHECK(e0.e2 == 0.0);
  CHECK(e0.einf == 0.0);
  const auto e1 = compute_errors([&](std::span<const double> x) { return 1.01 * f(x); }, f, v);
  CHECK_THAT(e1.einf, WithinAbs(0.01, 1e-12));
  CHECK_THAT(e1.e2, WithinAbs(0.01, 1e-12));

  const auto zero = [](std::span<const double>) { return 0.0; };
  const auto ez = compute_errors(f, zero, v);
  CHECK(ez.absolute);
  CHECK(std::isnan(ez.einf));

  // Points where the exact value vanishes are left out of E_inf and counted.
  const auto g = [](std::span<const double> x) { return x[0] > 0.0 ? 1.0 : 0.0; };
  const auto eg = compute_errors([](std::span<const double>) { return 1.0; }, g, v);
  CHECK(eg.guard_excluded > 0);
  CHECK(eg.einf == 0.0);
}

TEST_CASE("validation sets are seeded", "[benchmarks][metrics]") {
  const auto a = make_validation_set(4, 2.5), b = make_validation_set(4, 2.5), c = make_validation_set(4, 2.5, kValidationPoints, 99);
  CHECK(a.size() == 100000);
  CHECK(a.points == b.points);
  CHECK(a.points != c.points);
  for (double x : a.points) CHECK((x >= -2.5 && x <= 2.5));
  CHECK_THROWS_AS(make_validation_set(0, 1.0), ConfigError);
}

TEST_CASE("convergence orders", "[benchmarks][metrics]") {
  CHECK_THAT(convergence_order(std::vector<double>{4e-4, 1e-4})[0], WithinAbs(2.0, 1e-14));
  const auto o = convergence_order(std::vector<double>{1.25e-4, 3.02e-5, 7.43e-6, 1.84e-6, 4.59e-7});
  const double printed[4] = {2.05, 2.02, 2.01, 2.00};
  for (int i = 0; i < 4; ++i) CHECK_THAT(o[i], WithinAbs(printed[i], 0.011));
  CHECK(convergence_order(std::vector<double>{3e-3, 3e-3})[0] == 0.0);
  CHECK(std::isnan(convergence_order(std::vector<double>{1e-3, 0.0})[0]));
  CHECK_THROWS_AS(convergence_order(std::vector<double>{1e-3}), ConfigError);
}

TEST_CASE("scaling fits", "[benchmarks][metrics]") {
  const std::vector<double> d{3, 4, 5, 6, 7, 8};
  std::vector<double> cubic, expo;
  for (double v : d) {
    cubic.push_back(2 * v * v * v);
    expo.push_back(0.5 * std::exp(0.7 * v));
  }
  const auto fc = fit_scaling(d, cubic);
  CHECK_THAT(fc.power.b, WithinAbs(3.0, 1e-12));
  CHECK_THAT(fc.power.a, WithinRel(2.0, 1e-12));
  CHECK_THAT(fc.power.r2, WithinAbs(1.0, 1e-12));
  CHECK(fc.prefers_power());
  const auto fe = fit_scaling(d, expo);
  CHECK_THAT(fe.exponential.b, WithinAbs(0.7, 1e-12));
  CHECK_THAT(fe.exponential.r2, WithinAbs(1.0, 1e-12));
  CHECK_FALSE(fe.prefers_power());

  const std::vector<double> sl2p{1.02, 3.03, 7.17, 16.43, 30.05, 51.78};
  const auto fp = fit_scaling(d, sl2p);
  CHECK_THAT(fp.power.b, WithinAbs(4.03, 0.3));
  CHECK(fp.prefers_power());

  CHECK(std::isnan(fit_scaling(d, std::vector<double>(6, 1.5)).power.r2));
  CHECK_THROWS_AS(fit_scaling(std::vector<double>{3, 4}, std::vector<double>{1, 2}), ConfigError);
  CHECK_THROWS_AS(fit_scaling(d, std::vector<double>{1, 2, 3, 4, 5, -6}), ConfigError);
}

TEST_CASE("grid reference", "[benchmarks][grid]") {
  SECTION("constant terminal data is reproduced exactly") {
    for (auto interp : {GridInterpolation::Multilinear, GridInterpolation::CubicLagrange}) {
      auto b = local_mfg_problem(2, 0.1, 1.0, 0.0, 0.5, 1.0);
      b.problem.terminal = [](std::span<const double>, const DensityView&) { return 3.0; };
      b.problem.exact_u = [](std::span<const double>, double) { return 3.0; };
      b.problem.coupling = [](std::span<const double>, const DensityView&) { return 0.0; };
      GridReferenceConfig cfg;
      cfg.points_per_axis = 6;
      cfg.interpolation = interp;
      const auto r = grid_sl_reference(b.problem, cfg, make_validation_set(2, 1.0, 2000));
      CHECK(r.errors.e2 <= 1e-14);
      CHECK(r.converged);
    }
  }
  SECTION("cubic Lagrange interpolation is exact on cubics") {
    GridFunction g(2, 7, 1.5, GridInterpolation::CubicLagrange);
    std::vector<double> x(2);
    auto f = [](double a, double b) { return a * a * a - 2 * a * b * b + b - 0.5; };
    for (std::size_t p = 0; p < g.size(); ++p) {
      g.node(p, x);
      g.values()[p] = f(x[0], x[1]);
    }
    std::mt19937_64 rng(4);
    std::vector<double> grad(2);
    for (int n = 0; n < 50; ++n) {
      const auto y = point(rng, 2, 1.5);
      CHECK_THAT(g.evaluate(y), WithinAbs(f(y[0], y[1]), 1e-12));
      g.gradient(y, grad);
      CHECK_THAT(grad[0], WithinAbs(3 * y[0] * y[0] - 2 * y[1] * y[1], 1e-11));
      CHECK_THAT(grad[1], WithinAbs(-4 * y[0] * y[1] + 1, 1e-11));
    }
  }
  SECTION("refuses d > 3") {
    const auto b = local_mfg_problem(4, 0.01, 1.0, 0.0, 0.02, 0.1);
    CHECK_THROWS_AS(grid_sl_reference(b.problem, {}, make_validation_set(4, 0.1, 10)), ConfigError);
  }
  SECTION("coarsest printed HJB setting") {
    const auto b = local_mfg_problem(3, 0.01, 1.0, 0.0, 0.02, 0.1);
    GridReferenceConfig cfg;
    cfg.points_per_axis = 10;
    cfg.time_steps = 4;
    const auto r = grid_sl_reference(b.problem, cfg, make_validation_set(3, 0.1));
    CHECK(r.errors.e2 <= 2 * 9.36e-5);
    CHECK(r.errors.e2 >= 9.36e-5 / 2);
  }
}
