#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "oracles.hpp"
#include "owgan/linalg.hpp"
#include "owgan/rng.hpp"

using owgan::Matrix;
using owgan::Rng;
using owgan::Trans;

TEST(Matrix, RejectsBadConstruction) {
  EXPECT_THROW(Matrix(0, 3), std::invalid_argument);
  EXPECT_THROW(Matrix(2, 0), std::invalid_argument);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(Matrix(1, 2, std::vector<double>{1, std::numeric_limits<double>::quiet_NaN()}), std::invalid_argument);
  EXPECT_THROW(Matrix(1, 1, std::vector<double>{std::numeric_limits<double>::infinity()}), std::invalid_argument);
}

TEST(Matrix, ShapeMismatchThrows) {
  Matrix a(2, 3), b(3, 2);
  EXPECT_THROW(a += b, std::invalid_argument);
  EXPECT_THROW(owgan::matmul(a, a), std::invalid_argument);
}

TEST(Matmul, MatchesNaiveProductForAllTransposes) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.index(9), k = 1 + rng.index(9), m = 1 + rng.index(9);
    const Matrix a = rng.normal_matrix(n, k), b = rng.normal_matrix(k, m);
    const Matrix ref = oracle::naive_matmul(a, b);
    const Matrix at = oracle::naive_transpose(a), bt = oracle::naive_transpose(b);
    EXPECT_LT(oracle::max_abs_diff(owgan::matmul(a, b), ref), 1e-12);
    EXPECT_LT(oracle::max_abs_diff(owgan::matmul(at, b, Trans::Yes), ref), 1e-12);
    EXPECT_LT(oracle::max_abs_diff(owgan::matmul(a, bt, Trans::No, Trans::Yes), ref), 1e-12);
    EXPECT_LT(oracle::max_abs_diff(owgan::matmul(at, bt, Trans::Yes, Trans::Yes), ref), 1e-12);
  }
}

TEST(Matmul, GramIsSymmetricProduct) {
  Rng rng(4);
  const Matrix a = rng.normal_matrix(11, 5);
  const Matrix g = owgan::gram(a);
  EXPECT_LT(oracle::max_abs_diff(g, oracle::naive_matmul(oracle::naive_transpose(a), a)), 1e-12);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(g(i, j), g(j, i));
}

TEST(SpectralNorm, OuterProductHasNormProductOfFactors) {
  // u = (1, 2, 2), v = (2, 0): ||u v^T||_2 = ||u|| ||v|| = 3 * 2.
  const Matrix w = Matrix::from_rows({{2, 0}, {4, 0}, {4, 0}});
  EXPECT_NEAR(owgan::spectral_norm(w), 6.0, 1e-12);
}

TEST(SpectralNorm, ZeroMatrixIsZero) { EXPECT_EQ(owgan::spectral_norm(Matrix(3, 4)), 0.0); }

TEST(SpectralNorm, AgreesWithLargestSingularValue) {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t r = 1 + rng.index(64), c = 1 + rng.index(64);
    const Matrix w = rng.normal_matrix(r, c);
    const double sn = owgan::spectral_norm(w);
    const double smax = owgan::svd(w).sigma.front();
    EXPECT_LT(std::abs(sn - smax) / smax, 1e-8) << r << "x" << c;
  }
}

TEST(SpectralNorm, IsAbsolutelyHomogeneous) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix w = rng.normal_matrix(1 + rng.index(30), 1 + rng.index(30));
    const double c = rng.uniform(-5.0, 5.0);
    const double base = owgan::spectral_norm(w);
    EXPECT_LT(std::abs(owgan::spectral_norm(w * c) - std::abs(c) * base) / (std::abs(c) * base), 1e-10);
  }
}

TEST(Svd, DiagonalInput) {
  const auto s = owgan::svd(Matrix::from_rows({{5, 0}, {0, 2}}));
  ASSERT_EQ(s.sigma.size(), 2u);
  EXPECT_NEAR(s.sigma[0], 5.0, 1e-14);
  EXPECT_NEAR(s.sigma[1], 2.0, 1e-14);
  EXPECT_LT(oracle::max_abs_diff(s.u, Matrix::identity(2)), 1e-14);
  EXPECT_LT(oracle::max_abs_diff(s.v, Matrix::identity(2)), 1e-14);
}

TEST(Svd, OrthogonalInputHasUnitSpectrum) {
  const Matrix q = oracle::rotation(6, {0.3, -1.1, 0.7, 2.0});
  for (double s : owgan::svd(q).sigma) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Svd, ReconstructsTallAndWideInputs) {
  Rng rng(7);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{6, 3}, {3, 6}, {10, 10}, {1, 5}, {5, 1}}) {
    const Matrix m = rng.normal_matrix(r, c);
    const auto s = owgan::svd(m);
    const Matrix rec = oracle::naive_matmul(oracle::naive_matmul(s.u, Matrix::diagonal(s.sigma)), oracle::naive_transpose(s.v));
    Matrix diff = rec;
    diff -= m;
    EXPECT_LT(owgan::frobenius_norm(diff) / owgan::frobenius_norm(m), 1e-9);
    for (std::size_t k = 0; k + 1 < s.sigma.size(); ++k) EXPECT_GE(s.sigma[k], s.sigma[k + 1]);
    // u and v have orthonormal columns.
    EXPECT_LT(oracle::max_abs_diff(oracle::naive_matmul(oracle::naive_transpose(s.u), s.u), Matrix::identity(s.sigma.size())), 1e-10);
    EXPECT_LT(oracle::max_abs_diff(oracle::naive_matmul(oracle::naive_transpose(s.v), s.v), Matrix::identity(s.sigma.size())), 1e-10);
  }
}

TEST(Svd, SignConventionLargestEntryNonnegative) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = rng.normal_matrix(2 + rng.index(6), 2 + rng.index(6));
    const auto s = owgan::svd(m);
    for (std::size_t k = 0; k < s.u.cols(); ++k) {
      std::size_t arg = 0;
      for (std::size_t i = 1; i < s.u.rows(); ++i)
        if (std::abs(s.u(i, k)) > std::abs(s.u(arg, k))) arg = i;
      EXPECT_GE(s.u(arg, k), 0.0);
    }
    // Same input, same factors.
    const auto again = owgan::svd(m);
    EXPECT_EQ(s.u, again.u);
    EXPECT_EQ(s.v, again.v);
  }
}

TEST(Svd, RankDeficientInputCompletesBasis) {
  const Matrix m = Matrix::from_rows({{1, 2}, {2, 4}, {3, 6}});
  const auto s = owgan::svd(m);
  EXPECT_NEAR(s.sigma[1], 0.0, 1e-12);
  EXPECT_LT(oracle::max_abs_diff(oracle::naive_matmul(oracle::naive_transpose(s.u), s.u), Matrix::identity(2)), 1e-10);
}

TEST(SolveLinear, IdentityAndDiagonal) {
  const Matrix b = Matrix::from_rows({{1, -2}, {3, 0.5}});
  EXPECT_EQ(owgan::solve_linear(Matrix::identity(2), b), b);
  const Matrix x = owgan::solve_linear(Matrix::from_rows({{2, 0}, {0, 4}}), Matrix::from_rows({{4}, {8}}));
  EXPECT_DOUBLE_EQ(x(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(x(1, 0), 2.0);
}

TEST(SolveLinear, ResidualOnWellConditionedSystems) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = rng.normal_matrix(8, 8);
    a += Matrix::identity(8) * 8.0;
    const Matrix b = rng.normal_matrix(8, 3);
    const Matrix x = owgan::solve_linear(a, b);
    Matrix r = oracle::naive_matmul(a, x);
    r -= b;
    EXPECT_LT(owgan::frobenius_norm(r) / owgan::frobenius_norm(b), 1e-9);
  }
}

TEST(SolveLinear, RecoversSolutionForModerateConditioning) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    // a = Q diag(s) R with condition number s_max / s_min < 1e6.
    const std::size_t n = 2 + rng.index(10);
    std::vector<double> ang(n * n);
    for (double& v : ang) v = rng.uniform(-3.0, 3.0);
    const Matrix q1 = oracle::rotation(n, ang);
    for (double& v : ang) v = rng.uniform(-3.0, 3.0);
    const Matrix q2 = oracle::rotation(n, ang);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = std::pow(10.0, rng.uniform(0.0, 5.9));
    const Matrix a = oracle::naive_matmul(oracle::naive_matmul(q1, Matrix::diagonal(s)), q2);
    const Matrix x = rng.normal_matrix(n, 2);
    const Matrix got = owgan::solve_linear(a, oracle::naive_matmul(a, x));
    Matrix d = got;
    d -= x;
    EXPECT_LT(owgan::frobenius_norm(d) / owgan::frobenius_norm(x), 1e-8);
  }
}

TEST(SolveLinear, SingularSystemThrows) {
  try {
    owgan::solve_linear(Matrix::from_rows({{1, 2}, {2, 4}}), Matrix::from_rows({{1}, {1}}));
    FAIL() << "expected NumericalError";
  } catch (const owgan::NumericalError& e) {
    EXPECT_STREQ(e.what(), "singular system");
  }
  EXPECT_THROW(owgan::solve_linear(Matrix(2, 3), Matrix(2, 1)), std::invalid_argument);
  EXPECT_THROW(owgan::solve_linear(Matrix::identity(2), Matrix(3, 1)), std::invalid_argument);
}
