#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "owgan/autodiff.hpp"
#include "owgan/rng.hpp"

using owgan::Matrix;
using owgan::MlpParams;
using owgan::Rng;
using owgan::Tape;

namespace {

MlpParams random_net(Rng& rng, std::size_t in, std::size_t out, std::size_t max_width, std::size_t layers) {
  std::vector<std::size_t> dims{in};
  for (std::size_t l = 0; l + 1 < layers; ++l) dims.push_back(2 + rng.index(max_width - 1));
  dims.push_back(out);
  MlpParams net = owgan::make_mlp(dims, rng);
  // Scale the uniform init up a little so gradients are O(1).
  for (auto& l : net.layers) {
    l.weight *= 1.5;
    for (double& b : l.bias) b = rng.uniform(-0.3, 0.3);
  }
  return net;
}

/// Inputs whose hidden pre-activations all sit at least `margin` from zero.
Matrix inputs_away_from_kinks(const MlpParams& net, std::size_t n, Rng& rng, double margin = 1e-3) {
  Matrix x(n, net.input_dim());
  for (std::size_t r = 0; r < n; ++r) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Matrix row = rng.normal_matrix(1, net.input_dim());
      if (oracle::kink_margin(net, row) > margin) {
        std::copy(row.data().begin(), row.data().end(), x.row(r).begin());
        break;
      }
    }
  }
  return x;
}

}  // namespace

TEST(Tape, MeanOfLinearMapHasOuterProductGradient) {
  // loss = mean(W x) with W 2x2 and x = (3, -1)^T: dloss/dW_ij = x_j / 2.
  Tape t;
  const auto w = t.constant(Matrix::from_rows({{1, 2}, {3, 4}}));
  const auto x = t.constant(Matrix::from_rows({{3}, {-1}}));
  const auto loss = t.mean(t.matmul(w, x));
  const std::vector<Tape::Var> wrt{w};
  const Matrix g = t.value(t.gradients(loss, wrt)[0]);
  EXPECT_DOUBLE_EQ(g(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(g(0, 1), -0.5);
  EXPECT_DOUBLE_EQ(g(1, 0), 1.5);
  EXPECT_DOUBLE_EQ(g(1, 1), -0.5);
}

TEST(Tape, UnreachableTargetHasExactZeroGradient) {
  Tape t;
  const auto a = t.constant(Matrix::from_rows({{1, 2}}));
  const auto b = t.constant(Matrix::from_rows({{5, 6}}));
  const auto loss = t.sum(t.square(a));
  const std::vector<Tape::Var> wrt{a, b};
  const auto g = t.gradients(loss, wrt);
  EXPECT_EQ(t.value(g[1]), Matrix(1, 2));
  EXPECT_DOUBLE_EQ(t.value(g[0])(0, 1), 4.0);
}

TEST(Tape, NonScalarRootThrows) {
  Tape t;
  const auto a = t.constant(Matrix(2, 2, 1.0));
  const std::vector<Tape::Var> wrt{a};
  EXPECT_THROW(t.gradients(t.square(a), wrt), std::invalid_argument);
}

TEST(Tape, ReluDerivativeAtZeroIsZero) {
  Tape t;
  const auto a = t.constant(Matrix::from_rows({{-1, 0, 2}}));
  const std::vector<Tape::Var> wrt{a};
  const Matrix g = t.value(t.gradients(t.sum(t.relu(a)), wrt)[0]);
  EXPECT_EQ(g, Matrix::from_rows({{0, 0, 1}}));
}

TEST(Tape, SecondDerivativeOfCubicByDoubleBackprop) {
  // f(x) = sum x^3 built as x * x^2; d/dx sum(f'(x)) = 6x.
  Tape t;
  const auto x = t.constant(Matrix::from_rows({{0.5, -2.0}}));
  const auto f = t.sum(t.mul(x, t.square(x)));
  const std::vector<Tape::Var> wrt{x};
  const auto g = t.gradients(f, wrt)[0];
  const auto gg = t.gradients(t.sum(g), wrt)[0];
  EXPECT_DOUBLE_EQ(t.value(gg)(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(t.value(gg)(0, 1), -12.0);
}

TEST(Mlp, ForwardMatchesReferenceEvaluation) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpParams net = random_net(rng, 3, 2, 12, 4);
    const Matrix x = rng.normal_matrix(7, 3);
    EXPECT_LT(oracle::max_abs_diff(owgan::forward(net, x), oracle::mlp_forward(net, x)), 1e-12);
    Tape t;
    const auto vars = owgan::bind(t, net);
    EXPECT_EQ(t.value(owgan::forward(t, vars, t.constant(x))), owgan::forward(net, x));
  }
}

TEST(Mlp, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpParams net = random_net(rng, 2, 1, 16, 4);
    const Matrix x = inputs_away_from_kinks(net, 6, rng);
    Tape t;
    const auto vars = owgan::bind(t, net);
    const auto loss = t.mean(owgan::forward(t, vars, t.constant(x)));
    const MlpParams g = owgan::param_gradients(t, loss, vars);
    const MlpParams fd = oracle::fd_params(net, [&](const MlpParams& p) { return oracle::mean_output(p, x); }, 1e-5);
    EXPECT_LT(oracle::rel_error(oracle::flatten(g), oracle::flatten(fd)), 1e-4);
  }
}

TEST(InputGradient, LinearCriticReturnsWeightsPerRow) {
  MlpParams net;
  net.layers.push_back({Matrix::from_rows({{0.3, -1.2, 2.0}}), {0.7}});
  Rng rng(3);
  const Matrix g = owgan::input_gradient(net, rng.normal_matrix(5, 3));
  for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(oracle::row_of(g, r), (std::vector<double>{0.3, -1.2, 2.0}));
}

TEST(InputGradient, AllActiveRegionIsProductOfWeights) {
  // Positive weights, biases and inputs keep every unit active, so the
  // gradient is W2 W1 for every row.
  MlpParams net;
  net.layers.push_back({Matrix::from_rows({{1, 2}, {0.5, 1}, {3, 0.25}}), {0.1, 0.1, 0.1}});
  net.layers.push_back({Matrix::from_rows({{2, -1, 0.5}}), {0.0}});
  const Matrix x = Matrix::from_rows({{1, 1}, {0.2, 3}});
  const Matrix g = owgan::input_gradient(net, x);
  // W2 W1 = (2 - 0.5 + 1.5, 4 - 1 + 0.125) = (3, 3.125).
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_DOUBLE_EQ(g(r, 0), 3.0);
    EXPECT_DOUBLE_EQ(g(r, 1), 3.125);
  }
}

TEST(InputGradient, MatchesHandBackpropAndFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpParams net = random_net(rng, 3, 1, 16, 4);
    const Matrix x = inputs_away_from_kinks(net, 5, rng);
    const Matrix g = owgan::input_gradient(net, x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      EXPECT_LT(oracle::rel_error(oracle::row_of(g, r), oracle::input_grad(net, oracle::row_of(x, r))), 1e-12);
      std::vector<double> fd(3);
      for (std::size_t c = 0; c < 3; ++c) {
        auto xp = oracle::row_of(x, r), xm = xp;
        xp[c] += 1e-5;
        xm[c] -= 1e-5;
        fd[c] = (oracle::run(net, xp).post.back()[0] - oracle::run(net, xm).post.back()[0]) / 2e-5;
      }
      EXPECT_LT(oracle::rel_error(oracle::row_of(g, r), fd), 1e-4);
    }
  }
}

TEST(InputGradient, VectorOutputThrows) {
  Rng rng(5);
  const std::vector<std::size_t> dims{2, 4, 2};
  EXPECT_THROW(owgan::input_gradient(owgan::make_mlp(dims, rng), Matrix(3, 2)), std::invalid_argument);
}

TEST(Penalty, LinearCriticScalarValues) {
  // f(x) = 2x: (2 - 1)^2 = 1 either way. f(x) = x / 2: 0.25 two-sided, 0 one-sided.
  const Matrix x = Matrix::from_rows({{0.3}, {-1.0}, {2.0}});
  for (auto [w, two, one] : {std::tuple{2.0, 1.0, 1.0}, std::tuple{0.5, 0.25, 0.0}}) {
    MlpParams net;
    net.layers.push_back({Matrix(1, 1, w), {0.0}});
    EXPECT_DOUBLE_EQ(owgan::penalty_param_gradients(net, x, false).value, two);
    EXPECT_DOUBLE_EQ(owgan::penalty_param_gradients(net, x, true).value, one);
  }
}

TEST(Penalty, UnitNormLinearCriticHasZeroPenaltyAndGradient) {
  MlpParams net;
  net.layers.push_back({Matrix::from_rows({{0.6, 0.8}}), {0.2}});
  const auto p = owgan::penalty_param_gradients(net, Matrix::from_rows({{1, 2}, {-3, 0.5}}), false);
  EXPECT_DOUBLE_EQ(p.value, 0.0);
  for (double v : oracle::flatten(p.grads)) EXPECT_EQ(v, 0.0);
}

TEST(Penalty, LinearCriticGradientByHand) {
  // f(x) = w x in 1-D: penalty (|w| - 1)^2, d/dw = 2 (|w| - 1) sign(w).
  MlpParams net;
  net.layers.push_back({Matrix(1, 1, -3.0), {1.0}});
  const auto p = owgan::penalty_param_gradients(net, Matrix::from_rows({{0.5}}), false);
  EXPECT_DOUBLE_EQ(p.value, 4.0);
  EXPECT_DOUBLE_EQ(p.grads.layers[0].weight(0, 0), -4.0);
  EXPECT_DOUBLE_EQ(p.grads.layers[0].bias[0], 0.0);
}

TEST(Penalty, SecondOrderGradientsMatchFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpParams net = random_net(rng, 2, 1, 12, 4);
    const Matrix x = inputs_away_from_kinks(net, 6, rng);
    for (bool one_sided : {false, true}) {
      const auto p = owgan::penalty_param_gradients(net, x, one_sided);
      EXPECT_NEAR(p.value, oracle::penalty(net, x, one_sided), 1e-12 * std::max(1.0, p.value));
      const MlpParams fd =
          oracle::fd_params(net, [&](const MlpParams& q) { return oracle::penalty(q, x, one_sided); }, 1e-6);
      const auto a = oracle::flatten(p.grads), b = oracle::flatten(fd);
      double nb = 0.0;
      for (double v : b) nb += v * v;
      if (nb < 1e-16) continue;  // one-sided penalty inactive everywhere
      EXPECT_LT(oracle::rel_error(a, b), 1e-3) << "one_sided=" << one_sided;
    }
  }
}

TEST(Penalty, ZeroGradientRowsAreCountedAndContributeNothing) {
  MlpParams net;
  net.layers.push_back({Matrix::from_rows({{1, 0}, {0, 1}}), {-10, -10}});
  net.layers.push_back({Matrix::from_rows({{1, 1}}), {0}});
  // Row 0: both units dead so grad_x f = 0. Row 1: both active.
  const Matrix x = Matrix::from_rows({{0, 0}, {20, 20}});
  const auto p = owgan::penalty_param_gradients(net, x, false);
  EXPECT_EQ(p.degenerate_rows, 1u);
  // Row 0 contributes (0 - 1)^2 = 1 to the value but no gradient; row 1 has ||(1, 1)|| = sqrt 2.
  const double e = std::sqrt(2.0) - 1.0;
  EXPECT_NEAR(p.value, (1.0 + e * e) / 2.0, 1e-15);
  for (double v : oracle::flatten(p.grads)) EXPECT_TRUE(std::isfinite(v));
}

TEST(Tape, Deterministic) {
  Rng a(7), b(7);
  const MlpParams na = random_net(a, 2, 1, 16, 4), nb = random_net(b, 2, 1, 16, 4);
  const Matrix xa = a.normal_matrix(16, 2), xb = b.normal_matrix(16, 2);
  const auto pa = owgan::penalty_param_gradients(na, xa, false);
  const auto pb = owgan::penalty_param_gradients(nb, xb, false);
  EXPECT_EQ(pa.value, pb.value);
  EXPECT_EQ(pa.grads, pb.grads);
}
