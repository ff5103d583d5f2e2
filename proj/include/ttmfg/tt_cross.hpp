#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ttmfg/errors.hpp"
#include "ttmfg/legendre.hpp"
#include "ttmfg/parallel.hpp"
#include "ttmfg/tensor_train.hpp"

namespace ttmfg {

using Oracle = std::function<double(std::span<const double>)>;

/// Row indices of a locally maximal-volume square submatrix of `a`
/// (rows >= cols). Starts from partial-pivoting rows and swaps until no
/// entry of a * a[I]^-1 exceeds 1 + tol in magnitude.
inline std::vector<int> maxvol(const Eigen::MatrixXd& a, double tol = 1e-2, int max_swaps = 200) {
  const int n = static_cast<int>(a.rows());
  const int r = static_cast<int>(a.cols());
  if (r == 0) return {};
  if (n < r) throw DomainError("maxvol: matrix must have at least as many rows as columns");

  Eigen::MatrixXd work = a;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  for (int c = 0; c < r; ++c) {
    Eigen::Index best = 0;
    const double pivot = work.col(c).tail(n - c).cwiseAbs().maxCoeff(&best);
    if (!(pivot > 1e-12 * scale))
      throw RankDeficientError("maxvol: matrix is numerically rank deficient (column " + std::to_string(c) +
                               "); lower the bond rank");
    const int p = c + static_cast<int>(best);
    work.row(c).swap(work.row(p));
    std::swap(perm[c], perm[p]);
    for (int i = c + 1; i < n; ++i) {
      const double f = work(i, c) / work(c, c);
      work.row(i).tail(r - c) -= f * work.row(c).tail(r - c);
    }
  }
  std::vector<int> rows(perm.begin(), perm.begin() + r);

  for (int iter = 0; iter < max_swaps; ++iter) {
    Eigen::MatrixXd sub(r, r);
    for (int j = 0; j < r; ++j) sub.row(j) = a.row(rows[j]);
    const Eigen::MatrixXd b = sub.transpose().partialPivLu().solve(a.transpose()).transpose();
    Eigen::Index i = 0, j = 0;
    const double big = b.cwiseAbs().maxCoeff(&i, &j);
    if (!(big > 1.0 + tol)) break;
    rows[j] = static_cast<int>(i);
  }
  return rows;
}

enum class CrossCriterion { CoreChange, HeldOutResidual };

struct CrossConfig {
  int max_sweeps = 8;
  double residual_tol = 1e-8;
  std::vector<int> ranks;  // d - 1 bond ranks; empty means all ones
  int oversampling = -1;   // extra candidate nodes per axis; -1 selects degree + 1
  std::uint64_t seed = 0x5eed;
  CrossCriterion criterion = CrossCriterion::CoreChange;
  int holdout_points = 256;

  void validate(int d) const {
    if (max_sweeps < 1) throw ConfigError("CrossConfig: max_sweeps must be >= 1");
    if (!(residual_tol > 0.0)) throw ConfigError("CrossConfig: residual_tol must be positive");
    if (!ranks.empty() && static_cast<int>(ranks.size()) != d - 1)
      throw ConfigError("CrossConfig: expected " + std::to_string(d - 1) + " bond ranks");
    for (int r : ranks)
      if (r < 1) throw ConfigError("CrossConfig: ranks must be >= 1");
    if (oversampling < -1) throw ConfigError("CrossConfig: oversampling must be >= 0");
    if (holdout_points < 1) throw ConfigError("CrossConfig: holdout_points must be >= 1");
  }
};

/// Cross-interpolation pivots. left[k] holds r_k multi-indices over axes
/// 0..k-1 and right[k] holds r_k multi-indices over axes k..d-1, both as
/// positions in the per-axis candidate grids.
struct AdaptiveSampleSet {
  std::vector<std::vector<double>> grids;
  std::vector<std::vector<std::vector<int>>> left;
  std::vector<std::vector<std::vector<int>>> right;

  [[nodiscard]] bool empty() const { return grids.empty(); }

  /// Physical points at which core k was last sampled.
  [[nodiscard]] std::vector<std::vector<double>> fiber_points(int k) const {
    std::vector<std::vector<double>> pts;
    const int d = static_cast<int>(grids.size());
    for (const auto& l : left[k])
      for (double g : grids[k])
        for (const auto& r : right[k + 1]) {
          std::vector<double> x(d);
          for (int i = 0; i < k; ++i) x[i] = grids[i][l[i]];
          x[k] = g;
          for (int i = k + 1; i < d; ++i) x[i] = grids[i][r[i - k - 1]];
          pts.push_back(std::move(x));
        }
    return pts;
  }
};

struct CrossDiagnostics {
  int sweeps = 0;
  double core_change = 0.0;
  double holdout_residual = 0.0;
  std::size_t oracle_calls = 0;
  std::size_t max_calls_per_pass = 0;
  bool converged = false;
};

struct CrossResult {
  TensorTrain tt;
  AdaptiveSampleSet samples;
  CrossDiagnostics diagnostics;
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class CrossEngine {
 public:
  CrossEngine(const Oracle& oracle, const std::vector<BasisSpec>& bases, const CrossConfig& config)
      : oracle_(oracle), bases_(bases), config_(config), d_(static_cast<int>(bases.size())) {
    config_.validate(d_);
    grids_.resize(d_);
    projector_.resize(d_);
    for (int k = 0; k < d_; ++k) {
      const int n = bases_[k].size();
      const int extra = config_.oversampling < 0 ? n : config_.oversampling;
      const int m = n + extra;
      auto [nodes, weights] = legendre::gauss_legendre(m);
      grids_[k].resize(m);
      for (int j = 0; j < m; ++j) grids_[k][j] = nodes[j] * bases_[k].half_width;
      // Discrete L2 projection onto degree n; exact for polynomials of degree <= n.
      RowMatrix p(n, m);
      std::vector<double> psi(n);
      for (int j = 0; j < m; ++j) {
        legendre::values(bases_[k].degree, nodes[j], psi);
        for (int i = 0; i < n; ++i) p(i, j) = (2.0 * i + 1.0) / 2.0 * weights[j] * psi[i];
      }
      projector_[k] = std::move(p);
    }
    ranks_.assign(d_ + 1, 1);
    for (int k = 1; k < d_; ++k) ranks_[k] = config_.ranks.empty() ? 1 : config_.ranks[k - 1];
    clip_ranks();
  }

  CrossResult run(const std::optional<std::pair<TensorTrain, AdaptiveSampleSet>>& warm) {
    left_.assign(d_ + 1, {});
    right_.assign(d_ + 1, {});
    left_[0] = {{}};
    right_[d_] = {{}};
    std::mt19937_64 rng(config_.seed);
    if (warm && compatible(warm->second)) {
      right_ = warm->second.right;
    } else {
      for (int k = d_ - 1; k >= 1; --k) right_[k] = random_indices(rng, k);
    }

    // Held-out points and their oracle values are drawn independently of the pivots.
    std::mt19937_64 hold_rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
    const int nh = config_.holdout_points;
    holdout_.assign(static_cast<std::size_t>(nh) * d_, 0.0);
    for (int p = 0; p < nh; ++p)
      for (int k = 0; k < d_; ++k) {
        std::uniform_real_distribution<double> u(-bases_[k].half_width, bases_[k].half_width);
        holdout_[static_cast<std::size_t>(p) * d_ + k] = u(hold_rng);
      }
    bool have_holdout_values = false;

    CrossDiagnostics diag;
    std::optional<TensorTrain> previous;
    TensorTrain current;
    for (int sweep = 1; sweep <= config_.max_sweeps; ++sweep) {
      const TensorTrain forward = left_to_right(diag);
      const double change_in_sweep = previous ? relative_difference(forward, previous) : 0.0;
      current = right_to_left(diag);
      const double change = std::max(change_in_sweep, relative_difference(current, forward));
      diag.sweeps = sweep;
      diag.core_change = change;
      previous = current;
      double gate = change;
      if (config_.criterion == CrossCriterion::HeldOutResidual) {
        if (!have_holdout_values) {
          holdout_values_ = evaluate_batch(holdout_, diag, false);
          have_holdout_values = true;
        }
        gate = holdout_residual(current);
      }
      if (gate < config_.residual_tol) {
        diag.converged = true;
        break;
      }
    }
    if (!have_holdout_values) holdout_values_ = evaluate_batch(holdout_, diag, false);
    diag.holdout_residual = holdout_residual(current);

    AdaptiveSampleSet samples;
    samples.grids = grids_;
    samples.left = left_;
    samples.right = right_;
    return {std::move(current), std::move(samples), diag};
  }

 private:
  void clip_ranks() {
    // r_k cannot exceed the number of distinct left or right multi-indices.
    for (int k = 1; k < d_; ++k) {
      double left = 1.0, right = 1.0;
      for (int i = 0; i < k; ++i) left *= static_cast<double>(grids_[i].size());
      for (int i = k; i < d_; ++i) right *= static_cast<double>(grids_[i].size());
      ranks_[k] = static_cast<int>(std::min<double>(ranks_[k], std::min(left, right)));
    }
    for (int k = 1; k < d_; ++k) {
      ranks_[k] = std::min<int>(ranks_[k], ranks_[k - 1] * static_cast<int>(grids_[k - 1].size()));
    }
    for (int k = d_ - 1; k >= 1; --k) {
      ranks_[k] = std::min<int>(ranks_[k], ranks_[k + 1] * static_cast<int>(grids_[k].size()));
    }
  }

  bool compatible(const AdaptiveSampleSet& s) const {
    if (s.grids != grids_ || static_cast<int>(s.right.size()) != d_ + 1) return false;
    for (int k = 1; k < d_; ++k)
      if (static_cast<int>(s.right[k].size()) != ranks_[k]) return false;
    return true;
  }

  std::vector<std::vector<int>> random_indices(std::mt19937_64& rng, int k) {
    std::vector<std::vector<int>> out;
    int attempts = 0;
    while (static_cast<int>(out.size()) < ranks_[k]) {
      std::vector<int> idx(d_ - k);
      for (int i = k; i < d_; ++i) {
        std::uniform_int_distribution<int> u(0, static_cast<int>(grids_[i].size()) - 1);
        idx[i - k] = u(rng);
      }
      if (std::find(out.begin(), out.end(), idx) == out.end() || ++attempts > 1000) out.push_back(std::move(idx));
    }
    return out;
  }

  std::vector<double> evaluate_batch(const std::vector<double>& points, CrossDiagnostics& diag,
                                     bool count_in_pass) {
    const std::size_t n = points.size() / d_;
    std::vector<double> values(n);
    parallel_for(n, [&](std::size_t p) {
      const std::span<const double> x(points.data() + p * d_, d_);
      const double v = oracle_(x);
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "tt_cross: oracle returned " << v << " at (";
        for (int i = 0; i < d_; ++i) msg << (i ? ", " : "") << x[i];
        msg << ")";
        throw NonFiniteError(msg.str());
      }
      values[p] = v;
    });
    diag.oracle_calls += n;
    if (count_in_pass) pass_calls_ += n;
    return values;
  }

  // Fiber tensor C[a, j, b] = f(left_[k][a], grid_k[j], right_[k+1][b]).
  RowMatrix sample_fiber(int k, CrossDiagnostics& diag) {
    const auto& lset = left_[k];
    const auto& rset = right_[k + 1];
    const int m = static_cast<int>(grids_[k].size());
    const std::size_t count = lset.size() * m * rset.size();
    std::vector<double> pts(count * d_);
    std::size_t p = 0;
    for (const auto& l : lset)
      for (int j = 0; j < m; ++j)
        for (const auto& r : rset) {
          double* x = pts.data() + p * d_;
          for (int i = 0; i < k; ++i) x[i] = grids_[i][l[i]];
          x[k] = grids_[k][j];
          for (int i = k + 1; i < d_; ++i) x[i] = grids_[i][r[i - k - 1]];
          ++p;
        }
    const auto values = evaluate_batch(pts, diag, true);
    RowMatrix c(static_cast<Eigen::Index>(lset.size()) * m, static_cast<Eigen::Index>(rset.size()));
    std::copy(values.begin(), values.end(), c.data());
    return c;
  }

  Core to_coefficients(int k, const RowMatrix& node_values, int left, int right) const {
    const int m = static_cast<int>(grids_[k].size());
    const int n = bases_[k].size();
    Core core(left, n, right);
    for (int a = 0; a < left; ++a) {
      const auto block = node_values.block(static_cast<Eigen::Index>(a) * m, 0, m, right);
      const RowMatrix coeff = projector_[k] * block;
      for (int i = 0; i < n; ++i)
        for (int b = 0; b < right; ++b) core(a, i, b) = coeff(i, b);
    }
    return core;
  }

  TensorTrain left_to_right(CrossDiagnostics& diag) {
    pass_calls_ = 0;
    std::vector<Core> cores(d_);
    for (int k = 0; k < d_; ++k) {
      const RowMatrix c = sample_fiber(k, diag);
      const int rl = static_cast<int>(left_[k].size());
      const int m = static_cast<int>(grids_[k].size());
      if (k == d_ - 1) {
        cores[k] = to_coefficients(k, c, rl, 1);
        last_fiber_ = c;
        break;
      }
      const int rr = static_cast<int>(c.cols());
      Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(c)};
      const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(c.rows(), rr);
      const auto rows = maxvol(q);
      Eigen::MatrixXd sub(rr, rr);
      for (int j = 0; j < rr; ++j) sub.row(j) = q.row(rows[j]);
      const RowMatrix interp = sub.transpose().partialPivLu().solve(q.transpose()).transpose();
      cores[k] = to_coefficients(k, interp, rl, rr);
      std::vector<std::vector<int>> next;
      for (int row : rows) {
        auto idx = left_[k][row / m];
        idx.push_back(row % m);
        next.push_back(std::move(idx));
      }
      left_[k + 1] = std::move(next);
    }
    diag.max_calls_per_pass = std::max(diag.max_calls_per_pass, pass_calls_);
    return TensorTrain(bases_, std::move(cores));
  }

  TensorTrain right_to_left(CrossDiagnostics& diag) {
    pass_calls_ = 0;
    std::vector<Core> cores(d_);
    for (int k = d_ - 1; k >= 0; --k) {
      // The last fiber of the forward pass is reused.
      const RowMatrix c = k == d_ - 1 ? last_fiber_ : sample_fiber(k, diag);
      const int rl = static_cast<int>(left_[k].size());
      const int rr = static_cast<int>(right_[k + 1].size());
      const int m = static_cast<int>(grids_[k].size());
      if (k == 0) {
        cores[k] = to_coefficients(k, c, 1, rr);
        break;
      }
      // Unfold as (m * rr) x rl: row index j * rr + b.
      Eigen::MatrixXd ct(static_cast<Eigen::Index>(m) * rr, rl);
      for (int a = 0; a < rl; ++a)
        for (int j = 0; j < m; ++j)
          for (int b = 0; b < rr; ++b) ct(static_cast<Eigen::Index>(j) * rr + b, a) = c(static_cast<Eigen::Index>(a) * m + j, b);
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(ct);
      const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(ct.rows(), rl);
      const auto rows = maxvol(q);
      Eigen::MatrixXd sub(rl, rl);
      for (int j = 0; j < rl; ++j) sub.row(j) = q.row(rows[j]);
      const Eigen::MatrixXd interp = sub.transpose().partialPivLu().solve(q.transpose()).transpose();
      // Back to (a, j, b) layout with a the new left index.
      RowMatrix values(static_cast<Eigen::Index>(rl) * m, rr);
      for (int a = 0; a < rl; ++a)
        for (int j = 0; j < m; ++j)
          for (int b = 0; b < rr; ++b) values(static_cast<Eigen::Index>(a) * m + j, b) = interp(static_cast<Eigen::Index>(j) * rr + b, a);
      cores[k] = to_coefficients(k, values, rl, rr);
      std::vector<std::vector<int>> next;
      for (int row : rows) {
        std::vector<int> idx{row / rr};
        const auto& tail = right_[k + 1][row % rr];
        idx.insert(idx.end(), tail.begin(), tail.end());
        next.push_back(std::move(idx));
      }
      right_[k] = std::move(next);
    }
    diag.max_calls_per_pass = std::max(diag.max_calls_per_pass, pass_calls_);
    return TensorTrain(bases_, std::move(cores));
  }

  double relative_difference(const TensorTrain& a, const std::optional<TensorTrain>& b) const {
    if (!b) return std::numeric_limits<double>::infinity();
    if (b->bases() != a.bases()) return std::numeric_limits<double>::infinity();
    double num = 0.0, den = 0.0;
    const std::size_t n = holdout_.size() / d_;
    for (std::size_t p = 0; p < n; ++p) {
      const std::span<const double> x(holdout_.data() + p * d_, d_);
      const double va = a.expansion(x);
      const double vb = b->expansion(x);
      num += (va - vb) * (va - vb);
      den += va * va;
    }
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num / den);
  }

  double holdout_residual(const TensorTrain& tt) const {
    double num = 0.0, den = 0.0;
    const std::size_t n = holdout_.size() / d_;
    for (std::size_t p = 0; p < n; ++p) {
      const std::span<const double> x(holdout_.data() + p * d_, d_);
      const double diff = tt.expansion(x) - holdout_values_[p];
      num += diff * diff;
      den += holdout_values_[p] * holdout_values_[p];
    }
    if (den == 0.0) return std::sqrt(num / n);
    return std::sqrt(num / den);
  }

  const Oracle& oracle_;
  std::vector<BasisSpec> bases_;
  CrossConfig config_;
  int d_;
  std::vector<std::vector<double>> grids_;
  std::vector<RowMatrix> projector_;
  std::vector<int> ranks_;
  std::vector<std::vector<std::vector<int>>> left_, right_;
  std::vector<double> holdout_, holdout_values_;
  RowMatrix last_fiber_;
  std::size_t pass_calls_ = 0;
};

}  // namespace detail

/// Builds a TT approximation of `oracle` from point samples by alternating
/// fiber interpolation with maxvol pivots. Each sweep is a forward and a
/// backward pass; the warm start reuses the pivots of a previous fit.
inline CrossResult fit(const Oracle& oracle, const std::vector<BasisSpec>& bases, const CrossConfig& config,
                       const std::optional<std::pair<TensorTrain, AdaptiveSampleSet>>& warm = std::nullopt) {
  if (bases.empty()) throw ConfigError("tt_cross::fit: at least one axis required");
  detail::CrossEngine engine(oracle, bases, config);
  return engine.run(warm);
}

}  // namespace ttmfg
