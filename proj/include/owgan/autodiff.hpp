#pragma once

// Reverse-mode differentiation on an eager tape, plus the MLP built on it.
//
// Every vector-Jacobian product is itself recorded as tape operations, so a
// gradient node can be differentiated again. That is how the gradient
// penalty (a function of the input gradient) gets its parameter gradient.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "owgan/linalg.hpp"
#include "owgan/rng.hpp"

namespace owgan {

class Tape {
 public:
  struct Var {
    std::size_t id = 0;
  };

  Var constant(Matrix value) { return push(Op::Leaf, {}, 0, 0.0, std::move(value)); }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const {
    const Matrix& m = value(v);
    if (m.rows() != 1 || m.cols() != 1) throw std::invalid_argument("Tape::scalar: node is not 1x1");
    return m(0, 0);
  }
  std::size_t size() const noexcept { return nodes_.size(); }

  // --- recorded operations -------------------------------------------------

  Var matmul(Var a, Var b, Trans ta = Trans::No, Trans tb = Trans::No) {
    const unsigned flags = (ta == Trans::Yes ? 1u : 0u) | (tb == Trans::Yes ? 2u : 0u);
    return push(Op::MatMul, {a.id, b.id}, 2, 0.0, owgan::matmul(value(a), value(b), ta, tb), flags);
  }

  /// x (n x k) plus the row vector b (1 x k) on every row.
  Var add_bias(Var x, Var b) {
    const Matrix& xv = value(x);
    const Matrix& bv = value(b);
    if (bv.rows() != 1 || bv.cols() != xv.cols()) throw std::invalid_argument("add_bias: shape mismatch");
    Matrix out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      auto r = out.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv(0, j);
    }
    return push(Op::AddBias, {x.id, b.id}, 2, 0.0, std::move(out));
  }

  Var relu(Var x) { return max_const(x, 0.0); }

  /// Elementwise max(x, c). The derivative at x == c is taken as 0.
  Var max_const(Var x, double c) {
    Matrix out = value(x);
    for (double& v : out.data()) v = v > c ? v : c;
    return push(Op::MaxConst, {x.id}, 1, c, std::move(out));
  }

  /// g where ref > c, 0 elsewhere. The mask is constant with respect to ref.
  Var mask_mul(Var g, Var ref, double c) {
    const Matrix& rv = value(ref);
    Matrix out = value(g);
    if (!out.same_shape(rv)) throw std::invalid_argument("mask_mul: shape mismatch");
    auto od = out.data();
    auto rd = rv.data();
    for (std::size_t i = 0; i < od.size(); ++i)
      if (!(rd[i] > c)) od[i] = 0.0;
    return push(Op::MaskMul, {g.id, ref.id}, 2, c, std::move(out));
  }

  Var add(Var a, Var b) { return push(Op::Add, {a.id, b.id}, 2, 0.0, value(a) + value(b)); }
  Var sub(Var a, Var b) { return push(Op::Sub, {a.id, b.id}, 2, 0.0, value(a) - value(b)); }
  Var scale(Var x, double c) { return push(Op::Scale, {x.id}, 1, c, value(x) * c); }
  Var mul(Var a, Var b) { return push(Op::Mul, {a.id, b.id}, 2, 0.0, hadamard(value(a), value(b))); }

  Var add_scalar(Var x, double c) {
    Matrix out = value(x);
    for (double& v : out.data()) v += c;
    return push(Op::AddScalar, {x.id}, 1, c, std::move(out));
  }

  Var square(Var x) { return push(Op::Square, {x.id}, 1, 0.0, hadamard(value(x), value(x))); }

  /// a / b elementwise, with 0 wherever b == 0.
  Var safe_div(Var a, Var b) {
    const Matrix& bv = value(b);
    Matrix out = value(a);
    if (!out.same_shape(bv)) throw std::invalid_argument("safe_div: shape mismatch");
    auto od = out.data();
    auto bd = bv.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = bd[i] != 0.0 ? od[i] / bd[i] : 0.0;
    return push(Op::SafeDiv, {a.id, b.id}, 2, 0.0, std::move(out));
  }

  Var sum(Var x) {
    double s = 0.0;
    for (double v : value(x).data()) s += v;
    return push(Op::SumAll, {x.id}, 1, 0.0, Matrix(1, 1, s));
  }

  Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(value(x).size())); }

  /// Column sums: n x k -> 1 x k.
  Var col_sum(Var x) {
    const Matrix& xv = value(x);
    Matrix out(1, xv.cols());
    for (std::size_t i = 0; i < xv.rows(); ++i) {
      auto r = xv.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) out(0, j) += r[j];
    }
    return push(Op::ColSum, {x.id}, 1, 0.0, std::move(out));
  }

  /// Row sums: n x k -> n x 1.
  Var row_sum(Var x) {
    const Matrix& xv = value(x);
    Matrix out(xv.rows(), 1);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
      double s = 0.0;
      for (double v : xv.row(i)) s += v;
      out(i, 0) = s;
    }
    return push(Op::RowSum, {x.id}, 1, 0.0, std::move(out));
  }

  /// Euclidean norm of every row: n x k -> n x 1.
  Var row_norm(Var x) {
    const Matrix& xv = value(x);
    Matrix out(xv.rows(), 1);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
      double s = 0.0;
      for (double v : xv.row(i)) s += v * v;
      out(i, 0) = std::sqrt(s);
    }
    return push(Op::RowNorm, {x.id}, 1, 0.0, std::move(out));
  }

  /// Row i of x (n x k) times s(i) for s (n x 1).
  Var row_scale(Var x, Var s) {
    const Matrix& sv = value(s);
    Matrix out = value(x);
    if (sv.cols() != 1 || sv.rows() != out.rows()) throw std::invalid_argument("row_scale: shape mismatch");
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (double& v : out.row(i)) v *= sv(i, 0);
    return push(Op::RowScale, {x.id, s.id}, 2, 0.0, std::move(out));
  }

  /// Repeats the 1 x k row vector n times.
  Var broadcast_rows(Var x, std::size_t n) {
    const Matrix& xv = value(x);
    if (xv.rows() != 1) throw std::invalid_argument("broadcast_rows: expects a row vector");
    Matrix out(n, xv.cols());
    for (std::size_t i = 0; i < n; ++i) std::copy(xv.row(0).begin(), xv.row(0).end(), out.row(i).begin());
    return push(Op::BroadcastRows, {x.id}, 1, 0.0, std::move(out));
  }

  /// Repeats the n x 1 column vector k times.
  Var broadcast_cols(Var x, std::size_t k) {
    const Matrix& xv = value(x);
    if (xv.cols() != 1) throw std::invalid_argument("broadcast_cols: expects a column vector");
    Matrix out(xv.rows(), k);
    for (std::size_t i = 0; i < xv.rows(); ++i)
      for (double& v : out.row(i)) v = xv(i, 0);
    return push(Op::BroadcastCols, {x.id}, 1, 0.0, std::move(out));
  }

  /// Fills an r x c matrix with the value of a 1 x 1 node.
  Var broadcast_scalar(Var s, std::size_t r, std::size_t c) {
    return push(Op::BroadcastScalar, {s.id}, 1, 0.0, Matrix(r, c, scalar(s)), 0, r, c);
  }

  // --- differentiation -----------------------------------------------------

  /// Gradients of the scalar node `root` with respect to each node in `wrt`.
  ///
  /// The adjoints are recorded on this tape, so the returned nodes can be
  /// fed into further operations and differentiated again. Targets that
  /// `root` does not depend on get an exact zero matrix.
  std::vector<Var> gradients(Var root, std::span<const Var> wrt) {
    const Matrix& rv = value(root);
    if (rv.rows() != 1 || rv.cols() != 1) throw std::invalid_argument("Tape::gradients: root is not a scalar node");
    const std::size_t n = root.id + 1;

    std::vector<char> needed(n, 0);
    for (Var w : wrt)
      if (w.id < n) needed[w.id] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const Node& nd = nodes_[i];
      for (int k = 0; k < nd.arity; ++k)
        if (needed[nd.in[k]]) needed[i] = 1;
    }

    std::vector<std::optional<std::size_t>> adj(n);
    adj[root.id] = constant(Matrix(1, 1, 1.0)).id;
    for (std::size_t i = n; i-- > 0;) {
      if (!adj[i] || !needed[i]) continue;
      const Node nd = header(i);
      for (int k = 0; k < nd.arity; ++k) {
        const std::size_t input = nd.in[k];
        if (!needed[input]) continue;
        std::optional<Var> contrib = vjp(nd, i, k, Var{*adj[i]});
        if (!contrib) continue;
        adj[input] = adj[input] ? add(Var{*adj[input]}, *contrib).id : contrib->id;
      }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (Var w : wrt) {
      if (w.id < n && adj[w.id]) {
        out.push_back(Var{*adj[w.id]});
      } else {
        const Matrix& wv = value(w);
        out.push_back(constant(Matrix(wv.rows(), wv.cols())));
      }
    }
    return out;
  }

 private:
  enum class Op {
    Leaf,
    MatMul,
    AddBias,
    MaxConst,
    MaskMul,
    Add,
    Sub,
    Scale,
    Mul,
    AddScalar,
    Square,
    SafeDiv,
    SumAll,
    ColSum,
    RowSum,
    RowNorm,
    RowScale,
    BroadcastRows,
    BroadcastCols,
    BroadcastScalar,
  };

  struct Node {
    Op op = Op::Leaf;
    std::array<std::size_t, 2> in{};
    int arity = 0;
    double c = 0.0;
    unsigned flags = 0;
    std::size_t r = 0, k = 0;
    Matrix value;
  };

  Var push(Op op, std::array<std::size_t, 2> in, int arity, double c, Matrix value, unsigned flags = 0,
           std::size_t r = 0, std::size_t k = 0) {
    for (int i = 0; i < arity; ++i)
      if (in[i] >= nodes_.size()) throw std::invalid_argument("Tape: input node does not exist");
    nodes_.push_back(Node{op, in, arity, c, flags, r, k, std::move(value)});
    return Var{nodes_.size() - 1};
  }

  // Copy of a node without its value; safe to hold while the tape grows.
  Node header(std::size_t i) const {
    const Node& n = nodes_[i];
    return Node{n.op, n.in, n.arity, n.c, n.flags, n.r, n.k, Matrix()};
  }

  std::size_t rows_of(std::size_t id) const { return nodes_[id].value.rows(); }
  std::size_t cols_of(std::size_t id) const { return nodes_[id].value.cols(); }

  // Contribution of output adjoint g to input slot k of node `self`.
  std::optional<Var> vjp(const Node& nd, std::size_t self, int k, Var g) {
    const Var a{nd.in[0]};
    const Var b{nd.in[1]};
    switch (nd.op) {
      case Op::Leaf:
        return std::nullopt;
      case Op::MatMul: {
        const bool ta = nd.flags & 1u;
        const bool tb = nd.flags & 2u;
        const auto T = [](bool t) { return t ? Trans::Yes : Trans::No; };
        if (k == 0) {
          // C = op(a) op(b)
          if (!ta) return matmul(g, b, Trans::No, T(!tb));
          return matmul(b, g, T(tb), Trans::Yes);
        }
        if (!tb) return matmul(a, g, T(!ta), Trans::No);
        return matmul(g, a, Trans::Yes, T(ta));
      }
      case Op::AddBias:
        return k == 0 ? g : col_sum(g);
      case Op::MaxConst:
        return mask_mul(g, a, nd.c);
      case Op::MaskMul:
        if (k == 0) return mask_mul(g, b, nd.c);
        return std::nullopt;
      case Op::Add:
        return g;
      case Op::Sub:
        return k == 0 ? g : scale(g, -1.0);
      case Op::Scale:
        return scale(g, nd.c);
      case Op::Mul:
        return k == 0 ? mul(g, b) : mul(g, a);
      case Op::AddScalar:
        return g;
      case Op::Square:
        return scale(mul(g, a), 2.0);
      case Op::SafeDiv:
        if (k == 0) return safe_div(g, b);
        return scale(mul(g, safe_div(Var{self}, b)), -1.0);
      case Op::SumAll:
        return broadcast_scalar(g, rows_of(a.id), cols_of(a.id));
      case Op::ColSum:
        return broadcast_rows(g, rows_of(a.id));
      case Op::RowSum:
        return broadcast_cols(g, cols_of(a.id));
      case Op::RowNorm:
        // d||x|| / dx = x / ||x||; rows with zero norm get zero gradient.
        return row_scale(a, safe_div(g, Var{self}));
      case Op::RowScale:
        if (k == 0) return row_scale(g, b);
        return row_sum(mul(g, a));
      case Op::BroadcastRows:
        return col_sum(g);
      case Op::BroadcastCols:
        return row_sum(g);
      case Op::BroadcastScalar:
        return sum(g);
    }
    return std::nullopt;
  }

  std::vector<Node> nodes_;
};

using Var = Tape::Var;

// --- multilayer perceptron ---------------------------------------------------

/// One affine layer: y = x W^T + b, with W stored as (out x in).
struct Layer {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Feedforward ReLU network with a linear output layer. Also used as the
/// container for parameter gradients, which share its shape.
struct MlpParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("MlpParams: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].bias.size() != layers[i].out_dim())
        throw std::invalid_argument("MlpParams: bias length differs from layer output dim");
      if (i + 1 < layers.size() && layers[i].out_dim() != layers[i + 1].in_dim())
        throw std::invalid_argument("MlpParams: consecutive layer dimensions do not chain");
    }
  }

  /// Zero-valued parameters of the same shape.
  MlpParams zeros_like() const {
    MlpParams z;
    for (const Layer& l : layers) z.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim())});
    return z;
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Layer widths dims[0] -> dims[1] -> ... with weights and biases drawn
/// uniformly from +-1/sqrt(fan_in).
inline MlpParams make_mlp(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output dims");
  MlpParams net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    Layer l{rng.uniform_matrix(dims[i + 1], dims[i], -bound, bound), std::vector<double>(dims[i + 1])};
    for (double& b : l.bias) b = rng.uniform(-bound, bound);
    net.layers.push_back(std::move(l));
  }
  return net;
}

/// Straight-line evaluation, no tape.
inline Matrix forward(const MlpParams& net, const Matrix& x) {
  if (x.cols() != net.input_dim()) throw std::invalid_argument("forward: input width does not match first layer");
  Matrix h = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    Matrix z = matmul(h, layer.weight, Trans::No, Trans::Yes);
    const bool hidden = l + 1 < net.layers.size();
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto r = z.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) {
        r[j] += layer.bias[j];
        if (hidden && !(r[j] > 0.0)) r[j] = 0.0;
      }
    }
    h = std::move(z);
  }
  return h;
}

/// Parameter leaves of one network on a tape.
struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;

  std::vector<Var> all() const {
    std::vector<Var> v;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      v.push_back(weights[i]);
      v.push_back(biases[i]);
    }
    return v;
  }
};

inline MlpVars bind(Tape& tape, const MlpParams& net) {
  net.validate();
  MlpVars vars;
  for (const Layer& l : net.layers) {
    vars.weights.push_back(tape.constant(l.weight));
    vars.biases.push_back(tape.constant(Matrix::row_vector(l.bias)));
  }
  return vars;
}

inline Var forward(Tape& tape, const MlpVars& net, Var x) {
  if (tape.value(x).cols() != tape.value(net.weights.front()).cols())
    throw std::invalid_argument("forward: input width does not match first layer");
  Var h = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    h = tape.add_bias(tape.matmul(h, net.weights[l], Trans::No, Trans::Yes), net.biases[l]);
    if (l + 1 < net.weights.size()) h = tape.relu(h);
  }
  return h;
}

/// Reverse-mode gradients of `loss` with respect to every parameter in `net`.
inline MlpParams param_gradients(Tape& tape, Var loss, const MlpVars& net) {
  const std::vector<Var> wrt = net.all();
  const std::vector<Var> g = tape.gradients(loss, wrt);
  MlpParams out;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Matrix& gb = tape.value(g[2 * l + 1]);
    out.layers.push_back({tape.value(g[2 * l]), std::vector<double>(gb.data().begin(), gb.data().end())});
  }
  return out;
}

/// Per-row gradient of a scalar-output network with respect to its input,
/// recorded on the tape so it can be differentiated again.
inline Var input_gradient(Tape& tape, const MlpVars& net, Var x) {
  if (tape.value(net.weights.back()).rows() != 1)
    throw std::invalid_argument("input_gradient: network output dim must be 1");
  // Rows are independent, so d(sum of outputs)/dx holds each row's gradient.
  const Var total = tape.sum(forward(tape, net, x));
  const Var wrt[] = {x};
  return tape.gradients(total, wrt).front();
}

inline Matrix input_gradient(const MlpParams& net, const Matrix& x) {
  if (net.output_dim() != 1) throw std::invalid_argument("input_gradient: network output dim must be 1");
  Tape tape;
  const MlpVars vars = bind(tape, net);
  const Var xv = tape.constant(x);
  return tape.value(input_gradient(tape, vars, xv));
}

/// Mean over rows of (||grad_x f|| - 1)^2, or of max(0, ||grad_x f|| - 1)^2
/// when one-sided, as a tape node.
///
/// Rows whose input gradient is exactly zero contribute no parameter
/// gradient (the norm is not differentiable there); their count is written
/// to `degenerate_rows` when given.
inline Var gradient_penalty(Tape& tape, const MlpVars& net, Var x_hat, bool one_sided,
                            std::size_t* degenerate_rows = nullptr) {
  const Var grad = input_gradient(tape, net, x_hat);
  const Var norms = tape.row_norm(grad);
  if (degenerate_rows) {
    std::size_t zeros = 0;
    for (double v : tape.value(norms).data())
      if (v == 0.0) ++zeros;
    *degenerate_rows = zeros;
  }
  Var excess = tape.add_scalar(norms, -1.0);
  if (one_sided) excess = tape.max_const(excess, 0.0);
  return tape.mean(tape.square(excess));
}

struct PenaltyGradients {
  double value = 0.0;
  MlpParams grads;
  std::size_t degenerate_rows = 0;
};

/// Gradient-norm penalty and its gradient with respect to the critic's
/// parameters, by differentiating through the input-gradient pass.
inline PenaltyGradients penalty_param_gradients(const MlpParams& net, const Matrix& x_hat, bool one_sided) {
  Tape tape;
  const MlpVars vars = bind(tape, net);
  const Var x = tape.constant(x_hat);
  PenaltyGradients out;
  const Var pen = gradient_penalty(tape, vars, x, one_sided, &out.degenerate_rows);
  out.value = tape.scalar(pen);
  out.grads = param_gradients(tape, pen, vars);
  return out;
}

}  // namespace owgan
