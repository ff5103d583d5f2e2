#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttmfg/errors.hpp"
#include "ttmfg/legendre.hpp"

namespace ttmfg {

/// Order-3 TT core with shape (left, modes, right), stored row-major so that
/// entry (a, i, b) sits at (a * modes + i) * right + b.
struct Core {
  int left = 1;
  int modes = 1;
  int right = 1;
  std::vector<double> data;

  Core() : data(1, 0.0) {}
  Core(int left_, int modes_, int right_)
      : left(left_), modes(modes_), right(right_), data(static_cast<std::size_t>(left_) * modes_ * right_, 0.0) {}

  double& operator()(int a, int i, int b) { return data[(static_cast<std::size_t>(a) * modes + i) * right + b]; }
  double operator()(int a, int i, int b) const {
    return data[(static_cast<std::size_t>(a) * modes + i) * right + b];
  }
};

/// A d-variate function v(x) = sum_i c[i_1..i_d] psi_{i_1}(x_1/L_1) ... psi_{i_d}(x_d/L_d)
/// whose coefficient tensor is held as a tensor train. With log_form set the
/// represented function is exp of that expansion.
///
/// Points outside [-L, L] are evaluated by extending the polynomial up to a
/// relative margin; beyond the margin the reference coordinate is clamped.
class TensorTrain {
 public:
  static constexpr double kDefaultMargin = 0.1;

  TensorTrain() = default;

  TensorTrain(std::vector<BasisSpec> bases, std::vector<Core> cores, bool log_form = false,
              double extrapolation_margin = kDefaultMargin)
      : bases_(std::move(bases)), cores_(std::move(cores)), log_form_(log_form), margin_(extrapolation_margin) {
    validate();
  }

  /// All-zero TT with the given bond ranks (ranks.size() == d - 1).
  static TensorTrain zeros(std::vector<BasisSpec> bases, const std::vector<int>& bond_ranks) {
    const int d = static_cast<int>(bases.size());
    if (d < 1) throw ConfigError("TensorTrain: dimension must be positive");
    if (static_cast<int>(bond_ranks.size()) != d - 1) throw ConfigError("TensorTrain::zeros: need d-1 bond ranks");
    std::vector<Core> cores;
    for (int k = 0; k < d; ++k) {
      const int l = k == 0 ? 1 : bond_ranks[k - 1];
      const int r = k == d - 1 ? 1 : bond_ranks[k];
      cores.emplace_back(l, bases[k].size(), r);
    }
    return TensorTrain(std::move(bases), std::move(cores));
  }

  static TensorTrain constant(std::vector<BasisSpec> bases, double value) {
    TensorTrain tt = zeros(bases, std::vector<int>(bases.size() - 1, 1));
    for (auto& c : tt.cores_) c(0, 0, 0) = 1.0;
    tt.cores_[0](0, 0, 0) = value;
    return tt;
  }

  /// Rank-1 TT: product over axes of sum_i coeffs[k][i] psi_i.
  static TensorTrain separable(std::vector<BasisSpec> bases, const std::vector<std::vector<double>>& coeffs) {
    TensorTrain tt = zeros(bases, std::vector<int>(bases.size() - 1, 1));
    for (std::size_t k = 0; k < bases.size(); ++k) {
      if (static_cast<int>(coeffs[k].size()) > bases[k].size())
        throw ConfigError("TensorTrain::separable: too many coefficients for axis " + std::to_string(k));
      for (std::size_t i = 0; i < coeffs[k].size(); ++i) tt.cores_[k](0, static_cast<int>(i), 0) = coeffs[k][i];
    }
    return tt;
  }

  [[nodiscard]] int dim() const { return static_cast<int>(cores_.size()); }
  [[nodiscard]] const std::vector<BasisSpec>& bases() const { return bases_; }
  [[nodiscard]] const BasisSpec& basis(int k) const { return bases_[k]; }
  [[nodiscard]] const std::vector<Core>& cores() const { return cores_; }
  [[nodiscard]] const Core& core(int k) const { return cores_[k]; }
  [[nodiscard]] bool log_form() const { return log_form_; }
  [[nodiscard]] double extrapolation_margin() const { return margin_; }

  void set_log_form(bool value) { log_form_ = value; }
  void set_extrapolation_margin(double margin) {
    if (!(margin >= 0.0)) throw ConfigError("TensorTrain: extrapolation margin must be >= 0");
    margin_ = margin;
  }

  /// Bond ranks r_0..r_d (r_0 = r_d = 1).
  [[nodiscard]] std::vector<int> ranks() const {
    std::vector<int> r;
    r.reserve(cores_.size() + 1);
    for (const auto& c : cores_) r.push_back(c.left);
    r.push_back(1);
    return r;
  }

  [[nodiscard]] int max_rank() const {
    const auto r = ranks();
    return *std::max_element(r.begin(), r.end());
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& c : cores_) n += c.data.size();
    return n;
  }

  /// Reference coordinate used for evaluation: x / L, clamped to 1 + margin.
  [[nodiscard]] double reference_coordinate(int k, double x) const {
    if (!std::isfinite(x)) throw NonFiniteError("TensorTrain: non-finite coordinate on axis " + std::to_string(k));
    const double s = x / bases_[k].half_width;
    const double limit = 1.0 + margin_;
    return std::clamp(s, -limit, limit);
  }

  /// The polynomial expansion itself (the exponent when log_form is set).
  [[nodiscard]] double expansion(std::span<const double> x) const {
    check_point(x);
    thread_local std::vector<double> psi, vec, next;
    vec.assign(1, 1.0);
    for (int k = 0; k < dim(); ++k) {
      const Core& c = cores_[k];
      psi.resize(c.modes);
      legendre::values(bases_[k].degree, reference_coordinate(k, x[k]), psi);
      contract_row(c, vec, psi, next);
      std::swap(vec, next);
    }
    return vec[0];
  }

  [[nodiscard]] double evaluate(std::span<const double> x) const {
    const double g = expansion(x);
    return log_form_ ? std::exp(g) : g;
  }

  /// Gradient in physical coordinates. All partials share prefix/suffix
  /// contractions, so the cost is O(d n R^2).
  void gradient(std::span<const double> x, std::span<double> grad) const {
    derivatives(x, grad, nullptr, nullptr);
  }

  [[nodiscard]] std::vector<double> gradient(std::span<const double> x) const {
    std::vector<double> g(dim());
    gradient(x, g);
    return g;
  }

  [[nodiscard]] double laplacian(std::span<const double> x) const {
    thread_local std::vector<double> grad;
    grad.resize(dim());
    double lap = 0.0;
    derivatives(x, grad, &lap, nullptr);
    return lap;
  }

  /// Gradient plus optional Laplacian and value of the represented function
  /// (exponentiated when log_form is set) in a single pass.
  void derivatives(std::span<const double> x, std::span<double> grad, double* laplacian_out,
                   double* value_out) const {
    check_point(x);
    const int d = dim();
    const bool want_lap = laplacian_out != nullptr;
    thread_local std::vector<std::vector<double>> val, der, der2, prefix, suffix;
    thread_local std::vector<double> tmp, tmp2;
    val.resize(d);
    der.resize(d);
    der2.resize(d);
    prefix.resize(d + 1);
    suffix.resize(d + 1);
    for (int k = 0; k < d; ++k) {
      const int m = cores_[k].modes;
      val[k].resize(m);
      der[k].resize(m);
      der2[k].resize(m);
      const double s = reference_coordinate(k, x[k]);
      if (want_lap)
        legendre::values_and_two_derivatives(bases_[k].degree, s, val[k], der[k], der2[k]);
      else
        legendre::values_and_derivatives(bases_[k].degree, s, val[k], der[k]);
    }
    prefix[0].assign(1, 1.0);
    for (int k = 0; k < d; ++k) contract_row(cores_[k], prefix[k], val[k], prefix[k + 1]);
    suffix[d].assign(1, 1.0);
    for (int k = d - 1; k >= 0; --k) contract_col(cores_[k], val[k], suffix[k + 1], suffix[k]);

    const double g = prefix[d][0];
    double lap = 0.0;
    for (int k = 0; k < d; ++k) {
      const double inv_l = 1.0 / bases_[k].half_width;
      contract_row(cores_[k], prefix[k], der[k], tmp);
      grad[k] = dot(tmp, suffix[k + 1]) * inv_l;
      if (want_lap) {
        contract_row(cores_[k], prefix[k], der2[k], tmp2);
        lap += dot(tmp2, suffix[k + 1]) * inv_l * inv_l;
      }
    }
    if (log_form_) {
      const double e = std::exp(g);
      double grad_sq = 0.0;
      for (int k = 0; k < d; ++k) grad_sq += grad[k] * grad[k];
      for (int k = 0; k < d; ++k) grad[k] *= e;
      lap = e * (lap + grad_sq);
      if (value_out) *value_out = e;
    } else if (value_out) {
      *value_out = g;
    }
    if (want_lap) *laplacian_out = lap;
  }

  /// Integral over [-L, L]^d of x_axis^p v(x); with no axis, p applies to no
  /// coordinate and the result is the total integral.
  [[nodiscard]] double moment(int p, std::optional<int> axis = std::nullopt) const {
    if (log_form_)
      throw UnsupportedRepresentation(
          "TensorTrain::moment: log-form TT; integrate via moment_of_log_form (refit) instead");
    if (p < 0) throw DomainError("TensorTrain::moment: p must be non-negative");
    if (axis && (*axis < 0 || *axis >= dim())) throw DomainError("TensorTrain::moment: axis out of range");
    std::vector<double> vec(1, 1.0), next, weights;
    for (int k = 0; k < dim(); ++k) {
      const int pk = (axis && *axis == k) ? p : 0;
      const double l = bases_[k].half_width;
      const auto& mv = moment_vector(bases_[k], pk);
      weights.assign(mv.begin(), mv.end());
      const double jac = std::pow(l, pk + 1);
      for (auto& w : weights) w *= jac;
      contract_row(cores_[k], vec, weights, next);
      std::swap(vec, next);
    }
    return vec[0];
  }

  /// Same integral restricted to the sub-box prod_k [lo_k, hi_k].
  [[nodiscard]] double window_moment(std::span<const double> lo, std::span<const double> hi, int p,
                                     std::optional<int> axis = std::nullopt) const {
    if (log_form_) throw UnsupportedRepresentation("TensorTrain::window_moment: log-form TT");
    if (p < 0) throw DomainError("TensorTrain::window_moment: p must be non-negative");
    if (static_cast<int>(lo.size()) != dim() || static_cast<int>(hi.size()) != dim())
      throw DomainError("TensorTrain::window_moment: bounds have wrong length");
    std::vector<double> vec(1, 1.0), next, weights, psi;
    for (int k = 0; k < dim(); ++k) {
      const BasisSpec& b = bases_[k];
      const double l = b.half_width;
      if (!(-l <= lo[k] && lo[k] <= hi[k] && hi[k] <= l))
        throw DomainError("TensorTrain::window_moment: window outside the box");
      const int pk = (axis && *axis == k) ? p : 0;
      const int count = (b.degree + pk) / 2 + 2;
      const auto [nodes, gw] = legendre::gauss_legendre(count);
      weights.assign(b.size(), 0.0);
      psi.resize(b.size());
      const double mid = 0.5 * (hi[k] + lo[k]), half = 0.5 * (hi[k] - lo[k]);
      for (int q = 0; q < count; ++q) {
        const double x = mid + half * nodes[q];
        legendre::values(b.degree, x / l, psi);
        const double w = gw[q] * half * std::pow(x, pk);
        for (int i = 0; i < b.size(); ++i) weights[i] += w * psi[i];
      }
      contract_row(cores_[k], vec, weights, next);
      std::swap(vec, next);
    }
    return vec[0];
  }

  /// TT-SVD rounding: right-to-left orthogonalization, then left-to-right
  /// truncated SVDs with per-bond threshold tol * ||A|| / sqrt(d - 1).
  [[nodiscard]] TensorTrain round(double tol) const {
    if (!(tol > 0.0)) throw DomainError("TensorTrain::round: tol must be positive");
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const int d = dim();
    std::vector<Core> cores = cores_;
    if (d == 1) return *this;

    for (int k = d - 1; k >= 1; --k) {
      Core& c = cores[k];
      Eigen::Map<RowMatrix> m(c.data.data(), c.left, static_cast<Eigen::Index>(c.modes) * c.right);
      const Eigen::MatrixXd mt = m.transpose();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(mt);
      const int rank = static_cast<int>(std::min(mt.rows(), mt.cols()));
      const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(mt.rows(), rank);
      const Eigen::MatrixXd r = qr.matrixQR().topRows(rank).triangularView<Eigen::Upper>();
      Core nc(rank, c.modes, c.right);
      Eigen::Map<RowMatrix>(nc.data.data(), rank, static_cast<Eigen::Index>(c.modes) * c.right) = q.transpose();
      Core& p = cores[k - 1];
      Eigen::Map<RowMatrix> pm(p.data.data(), static_cast<Eigen::Index>(p.left) * p.modes, p.right);
      const RowMatrix updated = pm * r.transpose();
      Core np(p.left, p.modes, rank);
      Eigen::Map<RowMatrix>(np.data.data(), static_cast<Eigen::Index>(p.left) * p.modes, rank) = updated;
      c = std::move(nc);
      p = std::move(np);
    }

    double norm = 0.0;
    for (double v : cores[0].data) norm += v * v;
    norm = std::sqrt(norm);
    const double delta = tol * norm / std::sqrt(static_cast<double>(d - 1));

    for (int k = 0; k < d - 1; ++k) {
      Core& c = cores[k];
      Eigen::Map<RowMatrix> m(c.data.data(), static_cast<Eigen::Index>(c.left) * c.modes, c.right);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(m), Eigen::ComputeThinU | Eigen::ComputeThinV);
      const auto& s = svd.singularValues();
      int rank = static_cast<int>(s.size());
      double tail = 0.0;
      while (rank > 1) {
        const double next_tail = tail + s(rank - 1) * s(rank - 1);
        if (std::sqrt(next_tail) > delta) break;
        tail = next_tail;
        --rank;
      }
      Core nc(c.left, c.modes, rank);
      Eigen::Map<RowMatrix>(nc.data.data(), static_cast<Eigen::Index>(c.left) * c.modes, rank) =
          svd.matrixU().leftCols(rank);
      const Eigen::MatrixXd sv = s.head(rank).asDiagonal() * svd.matrixV().leftCols(rank).transpose();
      Core& n = cores[k + 1];
      Eigen::Map<RowMatrix> nm(n.data.data(), n.left, static_cast<Eigen::Index>(n.modes) * n.right);
      const RowMatrix updated = sv * nm;
      Core nn(rank, n.modes, n.right);
      Eigen::Map<RowMatrix>(nn.data.data(), rank, static_cast<Eigen::Index>(n.modes) * n.right) = updated;
      c = std::move(nc);
      n = std::move(nn);
    }
    return TensorTrain(bases_, std::move(cores), log_form_, margin_);
  }

 private:
  static double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }

  // out[b] = sum_{a,i} row[a] w[i] core(a,i,b)
  static void contract_row(const Core& c, const std::vector<double>& row, std::span<const double> w,
                           std::vector<double>& out) {
    out.assign(c.right, 0.0);
    const double* data = c.data.data();
    for (int a = 0; a < c.left; ++a) {
      const double ra = row[a];
      if (ra == 0.0) continue;
      for (int i = 0; i < c.modes; ++i) {
        const double coef = ra * w[i];
        const double* slice = data + (static_cast<std::size_t>(a) * c.modes + i) * c.right;
        for (int b = 0; b < c.right; ++b) out[b] += coef * slice[b];
      }
    }
  }

  // out[a] = sum_{i,b} core(a,i,b) w[i] col[b]
  static void contract_col(const Core& c, std::span<const double> w, const std::vector<double>& col,
                           std::vector<double>& out) {
    out.assign(c.left, 0.0);
    const double* data = c.data.data();
    for (int a = 0; a < c.left; ++a) {
      double acc = 0.0;
      for (int i = 0; i < c.modes; ++i) {
        const double* slice = data + (static_cast<std::size_t>(a) * c.modes + i) * c.right;
        double inner = 0.0;
        for (int b = 0; b < c.right; ++b) inner += slice[b] * col[b];
        acc += w[i] * inner;
      }
      out[a] = acc;
    }
  }

  void check_point(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim())
      throw DomainError("TensorTrain: point has " + std::to_string(x.size()) + " coordinates, expected " +
                        std::to_string(dim()));
  }

  void validate() const {
    const int d = dim();
    if (d < 1) throw ConfigError("TensorTrain: dimension must be positive");
    if (static_cast<int>(bases_.size()) != d) throw ConfigError("TensorTrain: one basis per core required");
    if (!(margin_ >= 0.0)) throw ConfigError("TensorTrain: extrapolation margin must be >= 0");
    if (cores_.front().left != 1 || cores_.back().right != 1)
      throw ConfigError("TensorTrain: boundary ranks must be 1");
    for (int k = 0; k < d; ++k) {
      const Core& c = cores_[k];
      if (c.left < 1 || c.right < 1) throw ConfigError("TensorTrain: ranks must be positive");
      if (c.modes != bases_[k].size())
        throw ConfigError("TensorTrain: core " + std::to_string(k) + " mode size does not match its basis");
      if (c.data.size() != static_cast<std::size_t>(c.left) * c.modes * c.right)
        throw ConfigError("TensorTrain: core " + std::to_string(k) + " payload has wrong size");
      if (k + 1 < d && c.right != cores_[k + 1].left)
        throw ConfigError("TensorTrain: rank chain broken between cores " + std::to_string(k) + " and " +
                          std::to_string(k + 1));
    }
  }

  std::vector<BasisSpec> bases_;
  std::vector<Core> cores_;
  bool log_form_ = false;
  double margin_ = kDefaultMargin;
};

namespace detail {

/// Block-diagonal TT sum a + b (ranks add). Both operands must share bases.
inline TensorTrain tt_add(const TensorTrain& a, const TensorTrain& b) {
  if (a.bases() != b.bases()) throw ConfigError("tt_add: bases differ");
  if (a.log_form() || b.log_form()) throw UnsupportedRepresentation("tt_add: log-form operands");
  const int d = a.dim();
  std::vector<Core> cores;
  for (int k = 0; k < d; ++k) {
    const Core& ca = a.core(k);
    const Core& cb = b.core(k);
    if (d == 1) {
      Core c(1, ca.modes, 1);
      for (int i = 0; i < ca.modes; ++i) c(0, i, 0) = ca(0, i, 0) + cb(0, i, 0);
      cores.push_back(std::move(c));
      continue;
    }
    const int l = k == 0 ? 1 : ca.left + cb.left;
    const int r = k == d - 1 ? 1 : ca.right + cb.right;
    Core c(l, ca.modes, r);
    const int la = k == 0 ? 0 : ca.left;
    const int ra = k == d - 1 ? 0 : ca.right;
    for (int x = 0; x < ca.left; ++x)
      for (int i = 0; i < ca.modes; ++i)
        for (int y = 0; y < ca.right; ++y) c(x, i, y) = ca(x, i, y);
    for (int x = 0; x < cb.left; ++x)
      for (int i = 0; i < cb.modes; ++i)
        for (int y = 0; y < cb.right; ++y) c(la + x, i, ra + y) = cb(x, i, y);
    cores.push_back(std::move(c));
  }
  return TensorTrain(a.bases(), std::move(cores), false, a.extrapolation_margin());
}

inline TensorTrain tt_scale(const TensorTrain& a, double factor) {
  if (a.log_form()) throw UnsupportedRepresentation("tt_scale: log-form operand");
  std::vector<Core> cores = a.cores();
  for (double& v : cores[0].data) v *= factor;
  return TensorTrain(a.bases(), std::move(cores), false, a.extrapolation_margin());
}

}  // namespace detail

}  // namespace ttmfg
