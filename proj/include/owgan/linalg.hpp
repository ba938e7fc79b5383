#pragma once

// Dense real linear algebra: the Matrix carrier plus the handful of kernels
// the rest of the library needs (products, norms, SVD, power iteration, LU).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace owgan {

/// Raised when a numerical routine cannot produce a meaningful result
/// (singular system, degenerate factorization, non-finite values).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major dense matrix of doubles.
///
/// A default-constructed Matrix is an empty placeholder (0x0); every other
/// constructor requires positive dimensions. Constructing from explicit data
/// rejects non-finite entries.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_size(rows, cols)) {
      throw std::invalid_argument("Matrix: data length does not match rows*cols");
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw std::invalid_argument("Matrix: non-finite entry");
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  /// Column vector (n x 1).
  static Matrix column(std::span<const double> v) {
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
  }

  /// Row vector (1 x n).
  static Matrix row_vector(std::span<const double> v) {
    return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same_shape(o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }
  friend Matrix operator-(Matrix a) { return a *= -1.0; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_size(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("Matrix: dimensions must be positive");
    return rows * cols;
  }

  void require_same_shape(const Matrix& o, const char* what) const {
    if (!same_shape(o)) throw std::invalid_argument(std::string("Matrix::") + what + ": shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Trans { No, Yes };

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

namespace detail {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EigenRowMajor> view(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

inline Eigen::Map<EigenRowMajor> view(Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

}  // namespace detail

/// op(a) * op(b), where op is identity or transpose.
inline Matrix matmul(const Matrix& a, const Matrix& b, Trans ta = Trans::No, Trans tb = Trans::No) {
  const std::size_t ar = ta == Trans::No ? a.rows() : a.cols();
  const std::size_t ac = ta == Trans::No ? a.cols() : a.rows();
  const std::size_t br = tb == Trans::No ? b.rows() : b.cols();
  const std::size_t bc = tb == Trans::No ? b.cols() : b.rows();
  if (ac != br) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix c(ar, bc);
  auto cv = detail::view(c);
  const auto av = detail::view(a);
  const auto bv = detail::view(b);
  if (ta == Trans::No && tb == Trans::No) cv.noalias() = av * bv;
  else if (ta == Trans::No) cv.noalias() = av * bv.transpose();
  else if (tb == Trans::No) cv.noalias() = av.transpose() * bv;
  else cv.noalias() = av.transpose() * bv.transpose();
  return c;
}

/// a^T a, computed as a symmetric rank-k update.
inline Matrix gram(const Matrix& a) {
  Matrix g(a.cols(), a.cols());
  auto gv = detail::view(g);
  gv.selfadjointView<Eigen::Lower>().rankUpdate(detail::view(a).transpose());
  gv.triangularView<Eigen::StrictlyUpper>() = gv.transpose();
  return g;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("hadamard: shape mismatch");
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] *= bd[i];
  return c;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const Matrix& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

/// Largest singular value by power iteration on w^T w.
///
/// Starts from the normalized all-ones vector, so the result is a pure
/// function of `w`. Stops when the estimate changes by less than `tol`
/// relative, or after `max_iters` iterations. A zero matrix yields 0.
inline double spectral_norm(const Matrix& w, int max_iters = 1000, double tol = 1e-12) {
  if (w.empty()) throw std::invalid_argument("spectral_norm: empty matrix");
  if (max_iters < 1 || !(tol > 0.0)) throw std::invalid_argument("spectral_norm: bad iteration controls");
  const std::size_t n = w.rows(), m = w.cols();
  std::vector<double> v(m, 1.0 / std::sqrt(static_cast<double>(m)));
  std::vector<double> y(n), z(m);
  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      auto r = w.row(i);
      y[i] = std::inner_product(r.begin(), r.end(), v.begin(), 0.0);
    }
    const double ny = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
    if (ny == 0.0) return 0.0;
    std::fill(z.begin(), z.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto r = w.row(i);
      for (std::size_t j = 0; j < m; ++j) z[j] += r[j] * y[i];
    }
    const double nz = std::sqrt(std::inner_product(z.begin(), z.end(), z.begin(), 0.0));
    // ||w v|| is a lower bound that converges to sigma_max for unit v.
    const double next = ny;
    for (std::size_t j = 0; j < m; ++j) v[j] = z[j] / nz;
    if (it > 0 && std::abs(next - sigma) < tol * next) return next;
    sigma = next;
  }
  return sigma;
}

struct SvdResult {
  Matrix u;                   // n x r
  std::vector<double> sigma;  // r, descending
  Matrix v;                   // m x r
};

namespace detail {

// One-sided Jacobi on a tall matrix (n >= m). Works on the transpose so
// that each column is a contiguous row.
inline SvdResult jacobi_svd_tall(const Matrix& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Matrix at = transpose(a);           // m x n, row j = column j of a
  Matrix vt = Matrix::identity(m);    // row j = column j of v
  constexpr double kEps = 1e-15;
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        auto ap = at.row(p);
        auto aq = at.row(q);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          alpha += ap[i] * ap[i];
          beta += aq[i] * aq[i];
          gamma += ap[i] * aq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < n; ++i) {
          const double x = ap[i], y = aq[i];
          ap[i] = c * x - s * y;
          aq[i] = s * x + c * y;
        }
        auto vp = vt.row(p);
        auto vq = vt.row(q);
        for (std::size_t i = 0; i < m; ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(m);
  for (std::size_t j = 0; j < m; ++j) {
    auto r = at.row(j);
    norms[j] = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdResult out{Matrix(n, m), std::vector<double>(m), Matrix(m, m)};
  const double smax = norms[order[0]];
  const double negligible = smax * static_cast<double>(std::max(n, m)) * 1e-15;
  std::vector<std::vector<double>> ucols;
  ucols.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    std::vector<double> col(n);
    if (norms[j] > negligible && norms[j] > 0.0) {
      auto r = at.row(j);
      for (std::size_t i = 0; i < n; ++i) col[i] = r[i] / norms[j];
    } else {
      // Null direction: complete the basis with a unit vector orthogonal to
      // the columns found so far.
      for (std::size_t e = 0; e < n; ++e) {
        std::fill(col.begin(), col.end(), 0.0);
        col[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
          for (const auto& u : ucols) {
            const double d = std::inner_product(u.begin(), u.end(), col.begin(), 0.0);
            for (std::size_t i = 0; i < n; ++i) col[i] -= d * u[i];
          }
        }
        const double nc = std::sqrt(std::inner_product(col.begin(), col.end(), col.begin(), 0.0));
        if (nc > 1e-6) {
          for (double& x : col) x /= nc;
          break;
        }
      }
    }
    // Sign convention: largest-magnitude entry of each u column is nonnegative.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::abs(col[i]) > std::abs(col[arg])) arg = i;
    const double sign = col[arg] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) out.u(i, k) = sign * col[i];
    auto vr = vt.row(j);
    for (std::size_t i = 0; i < m; ++i) out.v(i, k) = sign * vr[i];
    for (double& x : col) x *= sign;
    ucols.push_back(std::move(col));
  }
  return out;
}

}  // namespace detail

/// Thin SVD m = u diag(sigma) v^T via one-sided Jacobi rotations.
///
/// sigma is sorted descending; each column of u has its largest-magnitude
/// entry nonnegative (v is flipped along with it).
inline SvdResult svd(const Matrix& m) {
  if (m.empty()) throw std::invalid_argument("svd: empty matrix");
  if (m.rows() >= m.cols()) return detail::jacobi_svd_tall(m);
  SvdResult t = detail::jacobi_svd_tall(transpose(m));
  // Now m = v diag(sigma) u^T; re-apply the sign convention on the new u.
  SvdResult out{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  for (std::size_t k = 0; k < out.sigma.size(); ++k) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < out.u.rows(); ++i)
      if (std::abs(out.u(i, k)) > std::abs(out.u(arg, k))) arg = i;
    if (out.u(arg, k) < 0.0) {
      for (std::size_t i = 0; i < out.u.rows(); ++i) out.u(i, k) = -out.u(i, k);
      for (std::size_t i = 0; i < out.v.rows(); ++i) out.v(i, k) = -out.v(i, k);
    }
  }
  return out;
}

/// Solves a x = b by LU with partial pivoting. Throws NumericalError
/// ("singular system") when a pivot falls below 1e-12 in magnitude.
inline Matrix solve_linear(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("solve_linear: matrix is not square");
  if (b.rows() != n) throw std::invalid_argument("solve_linear: right-hand side row count mismatch");
  const Eigen::PartialPivLU<detail::EigenRowMajor> lu(detail::view(a));
  if (lu.matrixLU().diagonal().cwiseAbs().minCoeff() < 1e-12) throw NumericalError("singular system");
  Matrix x(n, b.cols());
  detail::view(x) = lu.solve(detail::view(b));
  return x;
}

}  // namespace owgan
