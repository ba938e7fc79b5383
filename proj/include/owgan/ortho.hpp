#pragma once

// Orthogonality machinery for weight matrices.
//
// A tall matrix (rows > cols) is orthogonal when W^T W = I, a wide one when
// W W^T = I, a square one when both hold. Every operation here handles wide
// inputs by transposing, working on the tall form, and transposing back.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "owgan/linalg.hpp"

namespace owgan {

enum class Orientation { Tall, Wide, Square };

inline Orientation orientation(const Matrix& w) noexcept {
  if (w.rows() > w.cols()) return Orientation::Tall;
  if (w.rows() < w.cols()) return Orientation::Wide;
  return Orientation::Square;
}

inline const char* to_string(Orientation o) noexcept {
  switch (o) {
    case Orientation::Tall:
      return "tall";
    case Orientation::Wide:
      return "wide";
    case Orientation::Square:
      return "square";
  }
  return "?";
}

/// Thrown by bjorck_orthogonalize when the iteration budget runs out.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double deviation) : NumericalError(what), deviation_(deviation) {}
  double deviation() const noexcept { return deviation_; }

 private:
  double deviation_;
};

namespace detail {

// I - W^T W for tall/square W, I - W W^T for wide W.
inline Matrix gram_residual(const Matrix& w) {
  Matrix g = orientation(w) == Orientation::Wide ? gram(transpose(w)) : gram(w);
  Matrix q = Matrix::identity(g.rows());
  q -= g;
  return q;
}

}  // namespace detail

/// ||I - W^T W||_2 (tall/square) or ||I - W W^T||_2 (wide).
inline double gram_deviation(const Matrix& w, int max_iters = 2000, double tol = 1e-13) {
  return spectral_norm(detail::gram_residual(w), max_iters, tol);
}

/// W (I + strength/2 (I - W^T W)). strength = 1 is one first-order Bjorck
/// step; smaller values blend the update toward the identity map.
inline Matrix bjorck_blend(const Matrix& w, double strength) {
  if (orientation(w) == Orientation::Wide) return transpose(bjorck_blend(transpose(w), strength));
  Matrix q = detail::gram_residual(w);
  q *= 0.5 * strength;
  Matrix out = w;
  out += matmul(w, q);
  return out;
}

/// One Bjorck-Bowie step of order p in {1, 2}:
/// W (I + sum_{i=1..p} (-1)^i binom(-1/2, i) Q^i) with Q = I - W^T W,
/// i.e. W (I + Q/2) for p = 1 and W (I + Q/2 + 3/8 Q^2) for p = 2.
inline Matrix bjorck_step(const Matrix& w, int p = 1) {
  if (p != 1 && p != 2) throw std::invalid_argument("bjorck_step: order must be 1 or 2");
  if (p == 1) return bjorck_blend(w, 1.0);
  if (orientation(w) == Orientation::Wide) return transpose(bjorck_step(transpose(w), p));
  const Matrix q = detail::gram_residual(w);
  Matrix poly = matmul(q, q) * 0.375;
  poly += q * 0.5;
  Matrix out = w;
  out += matmul(w, poly);
  return out;
}

/// Iterates first-order Bjorck steps until gram_deviation < tol.
///
/// If ||w||_2 >= sqrt(3) - 0.05 the input is first divided by its spectral
/// norm; the p = 1 map diverges for singular values at or above sqrt(3).
/// Throws ConvergenceError carrying the final deviation when max_iters is
/// exhausted. `iterations`, when given, receives the number of steps taken.
inline Matrix bjorck_orthogonalize(const Matrix& w, double tol = 1e-10, int max_iters = 100,
                                   int* iterations = nullptr) {
  if (!(tol > 0.0)) throw std::invalid_argument("bjorck_orthogonalize: tol must be positive");
  Matrix cur = w;
  const double norm = spectral_norm(cur);
  if (norm >= std::sqrt(3.0) - 0.05) cur *= 1.0 / norm;
  double dev = gram_deviation(cur);
  int it = 0;
  while (!(dev < tol)) {
    if (it >= max_iters || !std::isfinite(dev))
      throw ConvergenceError("bjorck_orthogonalize: no convergence, deviation " + std::to_string(dev), dev);
    cur = bjorck_step(cur, 1);
    dev = gram_deviation(cur);
    ++it;
  }
  if (iterations) *iterations = it;
  return cur;
}

struct OrthoPenalty {
  double value = 0.0;
  Matrix grad;
};

/// lambda ||W^T W - I||_F^2 and its gradient 4 lambda W (W^T W - I)
/// (wide inputs use W W^T and 4 lambda (W W^T - I) W).
inline OrthoPenalty ortho_penalty(const Matrix& w, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("ortho_penalty: lambda must be nonnegative");
  if (orientation(w) == Orientation::Wide) {
    OrthoPenalty t = ortho_penalty(transpose(w), lambda);
    return {t.value, transpose(t.grad)};
  }
  Matrix r = -detail::gram_residual(w);  // W^T W - I
  const double f = frobenius_norm(r);
  Matrix grad = matmul(w, r);
  grad *= 4.0 * lambda;
  return {lambda * f * f, std::move(grad)};
}

/// Skew-symmetric generator A = G W^T - W G^T (rows x rows, tall form).
inline Matrix cayley_generator(const Matrix& w, const Matrix& grad) {
  if (!w.same_shape(grad)) throw std::invalid_argument("cayley_generator: shape mismatch");
  Matrix m = matmul(grad, w, Trans::No, Trans::Yes);
  Matrix a = m;
  a -= transpose(m);
  return a;
}

/// Cayley retraction W <- (I + tau/2 A)^{-1} (I - tau/2 A) W with
/// A = G W^T - W G^T. A descent step on the objective whose gradient is G;
/// orthogonal inputs stay orthogonal.
inline Matrix cayley_update(const Matrix& w, const Matrix& grad, double tau) {
  if (!std::isfinite(tau)) throw std::invalid_argument("cayley_update: tau must be finite");
  if (orientation(w) == Orientation::Wide) return transpose(cayley_update(transpose(w), transpose(grad), tau));
  const Matrix a = cayley_generator(w, grad);
  const std::size_t n = a.rows();
  Matrix lhs = Matrix::identity(n);
  Matrix rhs_op = Matrix::identity(n);
  const double h = 0.5 * tau;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      lhs(i, j) += h * a(i, j);
      rhs_op(i, j) -= h * a(i, j);
    }
  }
  try {
    return solve_linear(lhs, matmul(rhs_op, w));
  } catch (const NumericalError&) {
    // I + tau/2 A has eigenvalues 1 + i tau/2 lambda for skew A; unreachable.
    throw NumericalError("cayley solve singular");
  }
}

/// lambda U V^T from the SVD of m: every singular value replaced by lambda.
inline Matrix svd_reinit(const Matrix& m, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("svd_reinit: lambda must be positive");
  const SvdResult s = svd(m);
  if (s.sigma.back() < 1e-12) throw NumericalError("degenerate init matrix");
  Matrix out = matmul(s.u, s.v, Trans::No, Trans::Yes);
  out *= lambda;
  return out;
}

/// 4-D convolution kernel, dims (n, m, l, k) = (filter height, filter width,
/// input channels, output channels), stored row-major in that index order.
struct ConvTensor {
  std::size_t n = 0, m = 0, l = 0, k = 0;
  std::vector<double> data;

  double& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) { return data[((a * m + b) * l + c) * k + d]; }
  double at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data[((a * m + b) * l + c) * k + d];
  }

  friend bool operator==(const ConvTensor&, const ConvTensor&) = default;
};

struct ConvDims {
  std::size_t n, m, l, k;
};

/// (n*m*l) x k matrix whose column j is output kernel j flattened in
/// (n, m, l) row-major order.
inline Matrix reshape_conv(const ConvTensor& t) {
  if (t.n == 0 || t.m == 0 || t.l == 0 || t.k == 0 || t.data.size() != t.n * t.m * t.l * t.k)
    throw std::invalid_argument("reshape_conv: data length does not match dims");
  // Row index (a, b, c), column d: identical to the tensor's memory order.
  return Matrix(t.n * t.m * t.l, t.k, t.data);
}

inline ConvTensor unreshape_conv(const Matrix& w, ConvDims dims) {
  if (w.rows() != dims.n * dims.m * dims.l || w.cols() != dims.k)
    throw std::invalid_argument("unreshape_conv: matrix shape does not match dims");
  return ConvTensor{dims.n, dims.m, dims.l, dims.k, std::vector<double>(w.data().begin(), w.data().end())};
}

}  // namespace owgan
