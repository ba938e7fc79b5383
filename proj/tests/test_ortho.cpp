#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "owgan/ortho.hpp"
#include "owgan/rng.hpp"

using owgan::Matrix;
using owgan::Rng;

namespace {

/// Random r x c matrix with singular values drawn from [lo, hi].
Matrix with_spectrum(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  const auto s = owgan::svd(rng.normal_matrix(r, c));
  std::vector<double> sig(s.sigma.size());
  for (double& v : sig) v = rng.uniform(lo, hi);
  return oracle::naive_matmul(oracle::naive_matmul(s.u, Matrix::diagonal(sig)), oracle::naive_transpose(s.v));
}

}  // namespace

TEST(GramDeviation, HandValues) {
  EXPECT_EQ(owgan::gram_deviation(Matrix::identity(3)), 0.0);
  // W = 2I: I - W^T W = -3I.
  EXPECT_NEAR(owgan::gram_deviation(Matrix::identity(2) * 2.0), 3.0, 1e-12);
}

TEST(GramDeviation, WideUsesRowGram) {
  const Matrix w = Matrix::from_rows({{0.6, 0.8, 0.0}});
  EXPECT_EQ(owgan::orientation(w), owgan::Orientation::Wide);
  EXPECT_NEAR(owgan::gram_deviation(w), 0.0, 1e-15);
  EXPECT_NEAR(owgan::gram_deviation(oracle::naive_transpose(w)), 0.0, 1e-15);
}

TEST(Bjorck, ScalarMap) {
  // 0.5 (3 - 0.25) / 2 = 0.6875.
  EXPECT_DOUBLE_EQ(owgan::bjorck_step(Matrix(1, 1, 0.5))(0, 0), 0.6875);
  // Second order: sigma (1 + q/2 + 3 q^2 / 8), q = 1 - sigma^2 = 0.75.
  EXPECT_DOUBLE_EQ(owgan::bjorck_step(Matrix(1, 1, 0.5), 2)(0, 0), 0.5 * (1.0 + 0.375 + 0.375 * 0.5625));
  EXPECT_THROW(owgan::bjorck_step(Matrix(1, 1, 0.5), 3), std::invalid_argument);
}

TEST(Bjorck, DiagonalSpectrumFollowsCubicMap) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(1 + rng.index(6));
    for (double& v : d) v = rng.uniform(0.0, 1.7);
    const Matrix out = owgan::bjorck_step(Matrix::diagonal(d));
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(out(i, i), d[i] * (3.0 - d[i] * d[i]) / 2.0, 1e-12);
  }
  const Matrix out = owgan::bjorck_step(Matrix::from_rows({{0.5, 0}, {0, 1.2}}));
  EXPECT_NEAR(out(0, 0), 0.6875, 1e-15);
  EXPECT_NEAR(out(1, 1), 0.936, 1e-15);
}

TEST(Bjorck, BlendStrengthZeroIsIdentity) {
  Rng rng(2);
  const Matrix w = rng.normal_matrix(5, 3);
  EXPECT_EQ(owgan::bjorck_blend(w, 0.0), w);
  EXPECT_LT(oracle::max_abs_diff(owgan::bjorck_blend(w, 1.0), owgan::bjorck_step(w)), 1e-15);
}

TEST(Bjorck, OrthogonalizeConvergesToPolarFactor) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t c = 1 + rng.index(8);
    const std::size_t r = c + rng.index(8);
    const Matrix w = with_spectrum(rng, r, c, 0.1, 1.3);
    int iters = 0;
    const Matrix q = owgan::bjorck_orthogonalize(w, 1e-10, 100, &iters);
    EXPECT_LT(owgan::gram_deviation(q), 1e-8);
    Matrix d = q;
    d -= owgan::svd_reinit(w, 1.0);
    EXPECT_LT(owgan::frobenius_norm(d), 1e-6);
    EXPECT_LE(iters, 40);
  }
}

TEST(Bjorck, OrthogonalizeWideAndLargeNorm) {
  Rng rng(4);
  const Matrix wide = with_spectrum(rng, 3, 7, 0.2, 1.2);
  EXPECT_LT(owgan::gram_deviation(owgan::bjorck_orthogonalize(wide)), 1e-8);
  // Spectral norm above sqrt(3) is prescaled first.
  const Matrix big = with_spectrum(rng, 6, 4, 1.5, 5.0);
  EXPECT_LT(owgan::gram_deviation(owgan::bjorck_orthogonalize(big)), 1e-8);
}

TEST(Bjorck, ReportsNonConvergence) {
  Rng rng(5);
  const Matrix w = with_spectrum(rng, 6, 4, 0.01, 0.02);
  try {
    owgan::bjorck_orthogonalize(w, 1e-10, 3);
    FAIL() << "expected ConvergenceError";
  } catch (const owgan::ConvergenceError& e) {
    EXPECT_GT(e.deviation(), 1e-10);
  }
}

TEST(OrthoPenalty, HandValue) {
  const auto p = owgan::ortho_penalty(Matrix::identity(2) * 2.0, 10.0);
  EXPECT_DOUBLE_EQ(p.value, 180.0);
  const auto z = owgan::ortho_penalty(oracle::rotation(4, {0.4, 1.0}), 3.0);
  EXPECT_NEAR(z.value, 0.0, 1e-25);
  EXPECT_LT(owgan::max_abs(z.grad), 1e-14);
}

TEST(OrthoPenalty, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + rng.index(7), c = 1 + rng.index(7);
    const Matrix w = rng.normal_matrix(r, c);
    const double lambda = rng.uniform(0.1, 10.0);
    const auto p = owgan::ortho_penalty(w, lambda);
    // Independent value: lambda ||G - I||_F^2 with G the smaller Gram matrix.
    const auto value = [&](const Matrix& m) {
      const Matrix g = m.rows() < m.cols() ? oracle::naive_matmul(m, oracle::naive_transpose(m))
                                           : oracle::naive_matmul(oracle::naive_transpose(m), m);
      double s = 0.0;
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) {
          const double e = g(i, j) - (i == j ? 1.0 : 0.0);
          s += e * e;
        }
      return lambda * s;
    };
    EXPECT_NEAR(p.value, value(w), 1e-10 * std::max(1.0, p.value));
    std::vector<double> fd(w.size());
    Matrix work = w;
    const double h = 1e-6;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double v = work.data()[k];
      work.data()[k] = v + h;
      const double up = value(work);
      work.data()[k] = v - h;
      const double dn = value(work);
      work.data()[k] = v;
      fd[k] = (up - dn) / (2.0 * h);
    }
    EXPECT_LT(oracle::rel_error(oracle::flatten(p.grad), fd), 1e-6);
  }
}

TEST(Cayley, ZeroGradientLeavesWeightsUnchanged) {
  const Matrix w = oracle::rotation(4, {0.2, -0.7});
  EXPECT_EQ(owgan::cayley_update(w, Matrix(4, 4), 0.5), w);
}

TEST(Cayley, GeneratorIsExactlySkew) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix w = rng.normal_matrix(6, 3), g = rng.normal_matrix(6, 3);
    const Matrix a = owgan::cayley_generator(w, g);
    Matrix sum = a;
    sum += oracle::naive_transpose(a);
    EXPECT_EQ(owgan::max_abs(sum), 0.0);
    // A = G W^T - W G^T.
    Matrix ref = oracle::naive_matmul(g, oracle::naive_transpose(w));
    ref -= oracle::naive_matmul(w, oracle::naive_transpose(g));
    EXPECT_LT(oracle::max_abs_diff(a, ref), 1e-13);
  }
}

TEST(Cayley, PreservesOrthogonality) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng.index(6);
    const std::size_t r = c + rng.index(6);
    const Matrix w = owgan::svd_reinit(rng.normal_matrix(r, c), 1.0);
    const double before = owgan::gram_deviation(w);
    const Matrix y = owgan::cayley_update(w, rng.normal_matrix(r, c), 0.01);
    EXPECT_LT(owgan::gram_deviation(y), 1e-10);
    EXPECT_LE(owgan::gram_deviation(y), before + 1e-9);
  }
}

TEST(Cayley, WideInputKeepsOrthonormalRows) {
  Rng rng(9);
  const Matrix w = owgan::svd_reinit(rng.normal_matrix(2, 5), 1.0);
  EXPECT_LT(owgan::gram_deviation(owgan::cayley_update(w, rng.normal_matrix(2, 5), 0.1)), 1e-10);
}

TEST(Cayley, SmallStepDescendsAlongGradient) {
  // For f(W) = <G, W> the retraction moves against G to first order.
  Rng rng(10);
  const Matrix w = owgan::svd_reinit(rng.normal_matrix(5, 3), 1.0);
  const Matrix g = rng.normal_matrix(5, 3);
  const auto inner = [&](const Matrix& m) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) s += m.data()[k] * g.data()[k];
    return s;
  };
  EXPECT_LT(inner(owgan::cayley_update(w, g, 1e-3)), inner(w));
}

TEST(SvdReinit, DiagonalAndNorm) {
  const Matrix r = owgan::svd_reinit(Matrix::from_rows({{3, 0}, {0, 1}}), 1.1);
  EXPECT_LT(oracle::max_abs_diff(r, Matrix::identity(2) * 1.1), 1e-14);
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = rng.normal_matrix(2 + rng.index(8), 2 + rng.index(8));
    EXPECT_LT(owgan::gram_deviation(owgan::svd_reinit(m, 1.0)), 1e-10);
    const double lambda = rng.uniform(0.5, 2.0);
    EXPECT_NEAR(owgan::spectral_norm(owgan::svd_reinit(m, lambda)), lambda, 1e-9);
  }
}

TEST(SvdReinit, RankDeficientThrows) {
  try {
    owgan::svd_reinit(Matrix::from_rows({{1, 2}, {2, 4}}), 1.0);
    FAIL() << "expected NumericalError";
  } catch (const owgan::NumericalError& e) {
    EXPECT_STREQ(e.what(), "degenerate init matrix");
  }
  EXPECT_THROW(owgan::svd_reinit(Matrix::identity(2), 0.0), std::invalid_argument);
}

TEST(ConvReshape, ShapeAndLayout) {
  owgan::ConvTensor t{3, 3, 2, 4, std::vector<double>(72)};
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<double>(i) * 0.5 - 7.0;
  const Matrix m = owgan::reshape_conv(t);
  EXPECT_EQ(m.rows(), 18u);
  EXPECT_EQ(m.cols(), 4u);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(m((a * 3 + b) * 2 + c, k), t.at(a, b, c, k));
  const owgan::ConvTensor back = owgan::unreshape_conv(m, {3, 3, 2, 4});
  EXPECT_EQ(back.data, t.data);
}

TEST(ConvReshape, SingleKernelAndMismatch) {
  owgan::ConvTensor t{2, 2, 1, 1, {1, 2, 3, 4}};
  const Matrix m = owgan::reshape_conv(t);
  EXPECT_EQ(m, Matrix::from_rows({{1}, {2}, {3}, {4}}));
  EXPECT_THROW(owgan::unreshape_conv(m, {2, 2, 2, 1}), std::invalid_argument);
  EXPECT_THROW(owgan::reshape_conv(owgan::ConvTensor{2, 2, 1, 1, {1, 2, 3}}), std::invalid_argument);
}
