#pragma once

// Wasserstein-GAN training under the seven Lipschitz-enforcement schemes.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "owgan/autodiff.hpp"
#include "owgan/data.hpp"
#include "owgan/eval.hpp"
#include "owgan/linalg.hpp"
#include "owgan/ortho.hpp"
#include "owgan/rng.hpp"

namespace owgan {

enum class Scheme { Clip, Gp, Ttur, OrthoReg, OrthoCayley, OrthoBjorck, Proposed };

inline constexpr Scheme kAllSchemes[] = {Scheme::Clip,        Scheme::Gp,          Scheme::Ttur,    Scheme::OrthoReg,
                                         Scheme::OrthoCayley, Scheme::OrthoBjorck, Scheme::Proposed};

inline const char* to_string(Scheme s) noexcept {
  switch (s) {
    case Scheme::Clip:
      return "clip";
    case Scheme::Gp:
      return "gp";
    case Scheme::Ttur:
      return "ttur";
    case Scheme::OrthoReg:
      return "ortho_reg";
    case Scheme::OrthoCayley:
      return "ortho_cayley";
    case Scheme::OrthoBjorck:
      return "ortho_bjorck";
    case Scheme::Proposed:
      return "proposed";
  }
  return "?";
}

inline std::string valid_scheme_names() {
  std::string s;
  for (Scheme x : kAllSchemes) {
    if (!s.empty()) s += ", ";
    s += to_string(x);
  }
  return s;
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme x : kAllSchemes)
    if (name == to_string(x)) return x;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "' (valid schemes: " + valid_scheme_names() +
                              ")");
}

/// Training run failed with non-finite values.
class DivergedError : public NumericalError {
 public:
  DivergedError() : NumericalError("diverged") {}
  explicit DivergedError(const std::string& what) : NumericalError(what) {}
};

struct AdamConfig {
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
};

struct TrainConfig {
  Scheme scheme = Scheme::Proposed;
  double eta_d = 3e-4;
  double eta_g = 1e-4;
  std::size_t batch = 64;
  int n_critic = 1;
  double lambda_gp = 10.0;
  double lambda_ortho = 10.0;
  double clip_c = 0.01;
  long iters = 1000;            // n; the schedule midpoint is k = n / 10
  double init_lambda = 1.1;
  std::uint64_t seed = 0;
  double budget_seconds = 0.0;  // > 0 selects a wall-clock budget
  std::size_t hidden = 512;
  std::size_t latent_dim = 8;
  std::size_t layers = 4;       // linear layers per network
  AdamConfig adam;
  double tau_scale = 1.0;       // Cayley step tau = tau_scale * eta_d
  std::size_t lipschitz_points = 256;
  long diag_every = 100;

  /// Scheme-specific defaults for n_critic and learning rates.
  static TrainConfig for_scheme(Scheme s) {
    TrainConfig c;
    c.scheme = s;
    if (s == Scheme::Clip || s == Scheme::Gp) {
      c.n_critic = 5;
      c.eta_d = 1e-4;
      c.eta_g = 1e-4;
    }
    return c;
  }

  long k() const noexcept { return iters / 10; }

  void validate() const {
    if (!(eta_d > 0.0 && eta_g > 0.0)) throw std::invalid_argument("TrainConfig: learning rates must be positive");
    if (!(lambda_gp > 0.0 && lambda_ortho > 0.0)) throw std::invalid_argument("TrainConfig: lambdas must be positive");
    if (!(clip_c > 0.0)) throw std::invalid_argument("TrainConfig: clip bound must be positive");
    if (!(init_lambda > 0.0)) throw std::invalid_argument("TrainConfig: init_lambda must be positive");
    if (batch < 2) throw std::invalid_argument("TrainConfig: batch must be >= 2");
    if (n_critic < 1) throw std::invalid_argument("TrainConfig: n_critic must be >= 1");
    if (iters < 1) throw std::invalid_argument("TrainConfig: iters must be >= 1");
    if (k() >= iters) throw std::invalid_argument("TrainConfig: k must be smaller than n");
    if (hidden < 1 || latent_dim < 1 || layers < 2) throw std::invalid_argument("TrainConfig: bad architecture");
    if (budget_seconds < 0.0) throw std::invalid_argument("TrainConfig: budget must be nonnegative");
    if (!(tau_scale > 0.0)) throw std::invalid_argument("TrainConfig: tau_scale must be positive");
    if (lipschitz_points < 1 || diag_every < 1) throw std::invalid_argument("TrainConfig: bad diagnostic settings");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0))
      throw std::invalid_argument("TrainConfig: bad Adam constants");
  }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// --- Adam ---------------------------------------------------------------------

/// Adam moments for one network. direction() returns the bias-corrected
/// m_hat / (sqrt(v_hat) + eps); callers scale by the learning rate and add
/// (critic ascent) or subtract (generator descent).
class Adam {
 public:
  Adam() = default;
  Adam(const MlpParams& shape, AdamConfig cfg) : cfg_(cfg), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

  MlpParams direction(const MlpParams& grads) {
    for (const Layer& l : grads.layers) {
      if (!all_finite(l.weight) ||
          !std::all_of(l.bias.begin(), l.bias.end(), [](double x) { return std::isfinite(x); }))
        throw DivergedError();
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    MlpParams out = grads;
    for (std::size_t l = 0; l < grads.layers.size(); ++l) {
      update(m_.layers[l].weight.data(), v_.layers[l].weight.data(), grads.layers[l].weight.data(),
             out.layers[l].weight.data(), c1, c2);
      update(m_.layers[l].bias, v_.layers[l].bias, grads.layers[l].bias, out.layers[l].bias, c1, c2);
    }
    return out;
  }

  long t() const noexcept { return t_; }
  const MlpParams& first_moment() const noexcept { return m_; }
  const MlpParams& second_moment() const noexcept { return v_; }

 private:
  void update(std::span<double> m, std::span<double> v, std::span<const double> g, std::span<double> out, double c1,
              double c2) const {
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      out[i] = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }

  AdamConfig cfg_;
  MlpParams m_, v_;
  long t_ = 0;
};

/// params += sign * lr * step, elementwise over every tensor.
inline void apply_step(MlpParams& params, const MlpParams& step, double lr, double sign) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto w = params.layers[l].weight.data();
    auto sw = step.layers[l].weight.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += sign * lr * sw[i];
    auto& b = params.layers[l].bias;
    const auto& sb = step.layers[l].bias;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += sign * lr * sb[i];
  }
}

inline void scale_params(MlpParams& params, double c) {
  for (Layer& l : params.layers) {
    l.weight *= c;
    for (double& b : l.bias) b *= c;
  }
}

/// One Adam update; returns the step lr * direction that the caller applies.
inline MlpParams adam_step(Adam& state, const MlpParams& grads, double lr) {
  MlpParams step = state.direction(grads);
  scale_params(step, lr);
  return step;
}

// --- critic objective -----------------------------------------------------------

struct CriticObjective {
  Var objective;             // maximized by the critic
  double wasserstein = 0.0;  // E f(real) - E f(fake)
  double penalty = 0.0;      // weighted penalty subtracted from it
  std::size_t degenerate_rows = 0;
};

inline constexpr double kPenaltySkipSigma = 1e-3;

/// Soft orthogonality term lambda ||W^T W - I||_F^2 on the tape
/// (W W^T for wide weights).
inline Var ortho_penalty_node(Tape& tape, Var w, double lambda) {
  const Matrix& wv = tape.value(w);
  const bool wide = orientation(wv) == Orientation::Wide;
  const Var gram = wide ? tape.matmul(w, w, Trans::No, Trans::Yes) : tape.matmul(w, w, Trans::Yes, Trans::No);
  const Var eye = tape.constant(Matrix::identity(tape.value(gram).rows()));
  return tape.scale(tape.sum(tape.square(tape.sub(gram, eye))), lambda);
}

/// E[f(x_real)] - E[f(x_fake)] minus the scheme's penalty, on the tape.
///
/// gp and ttur subtract lambda_gp times the two-sided gradient penalty at
/// x_hat; ortho_reg subtracts the soft orthogonality term of every weight;
/// proposed subtracts lambda_gp * sigma times the one-sided penalty unless
/// sigma < 1e-3. The other schemes use the bare difference.
inline CriticObjective critic_objective(Tape& tape, const TrainConfig& cfg, const MlpVars& critic, const Matrix& x_real,
                                        const Matrix& x_fake, const Matrix* x_hat, double sigma) {
  const Var fr = tape.mean(forward(tape, critic, tape.constant(x_real)));
  const Var ff = tape.mean(forward(tape, critic, tape.constant(x_fake)));
  const Var w = tape.sub(fr, ff);
  CriticObjective out{w, tape.scalar(w), 0.0, 0};

  std::optional<Var> pen;
  switch (cfg.scheme) {
    case Scheme::Gp:
    case Scheme::Ttur: {
      if (!x_hat) throw std::invalid_argument("critic_objective: scheme needs interpolates");
      pen = tape.scale(gradient_penalty(tape, critic, tape.constant(*x_hat), false, &out.degenerate_rows),
                       cfg.lambda_gp);
      break;
    }
    case Scheme::Proposed: {
      if (sigma < kPenaltySkipSigma) break;
      if (!x_hat) throw std::invalid_argument("critic_objective: scheme needs interpolates");
      pen = tape.scale(gradient_penalty(tape, critic, tape.constant(*x_hat), true, &out.degenerate_rows),
                       cfg.lambda_gp * sigma);
      break;
    }
    case Scheme::OrthoReg: {
      for (Var wt : critic.weights) {
        const Var term = ortho_penalty_node(tape, wt, cfg.lambda_ortho);
        pen = pen ? tape.add(*pen, term) : term;
      }
      break;
    }
    default:
      break;
  }
  if (pen) {
    out.penalty = tape.scalar(*pen);
    out.objective = tape.sub(w, *pen);
  }
  return out;
}

// --- training -----------------------------------------------------------------

struct MetricRow {
  long iter = 0;
  double wall_clock_s = 0.0;
  double critic_loss = 0.0;  // negated critic objective of the last critic step
  double gen_loss = 0.0;     // -E f(g(z))
  double gen_grad_norm = 0.0;  // mean ||grad_{g(z)} f(g(z))||
  std::optional<double> lipschitz_est;
  std::optional<double> penalty_est;
  std::optional<double> mean_gram_dev;
  double iters_per_sec = 0.0;
};

struct MetricLog {
  std::vector<MetricRow> rows;
};

enum class RunStatus { Completed, Diverged };

struct TrainState {
  TrainConfig config;
  DatasetSpec data;
  MlpParams critic;
  MlpParams generator;
  Adam critic_adam;
  Adam generator_adam;
  long iter = 0;
  Rng rng;
  Rng diag_rng;
  MetricLog log;
  RunStatus status = RunStatus::Completed;
  std::string message;
  long calibrated_iters = 0;  // set when a wall-clock budget fixed n
};

inline std::vector<std::size_t> mlp_dims(std::size_t in, std::size_t hidden, std::size_t out, std::size_t layers) {
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 0; i + 1 < layers; ++i) dims.push_back(hidden);
  dims.push_back(out);
  return dims;
}

/// Steps one training run. Owns its state; single-threaded.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const DatasetSpec& data) {
    cfg.validate();
    data.validate();
    s_.config = cfg;
    s_.data = data;
    s_.rng = Rng(cfg.seed);
    s_.diag_rng = s_.rng.split();
    const auto gdims = mlp_dims(cfg.latent_dim, cfg.hidden, DatasetSpec::dim, cfg.layers);
    const auto cdims = mlp_dims(DatasetSpec::dim, cfg.hidden, 1, cfg.layers);
    s_.generator = make_mlp(gdims, s_.rng);
    s_.critic = make_mlp(cdims, s_.rng);
    std::optional<double> ortho_init;
    if (cfg.scheme == Scheme::Proposed) ortho_init = cfg.init_lambda;
    if (cfg.scheme == Scheme::OrthoBjorck || cfg.scheme == Scheme::OrthoCayley) ortho_init = 1.0;
    if (ortho_init) {
      for (Layer& l : s_.critic.layers)
        l.weight = svd_reinit(s_.rng.normal_matrix(l.out_dim(), l.in_dim()), *ortho_init);
    }
    s_.critic_adam = Adam(s_.critic, cfg.adam);
    s_.generator_adam = Adam(s_.generator, cfg.adam);
    start_ = Clock::now();
  }

  const TrainState& state() const noexcept { return s_; }
  TrainState& mutable_state() noexcept { return s_; }
  TrainState release() { return std::move(s_); }

  /// sigma = sigmoid(i - k) for iteration i (1-based).
  double schedule(long i) const { return sigmoid(static_cast<double>(i - s_.config.k())); }

  /// One critic update at schedule value sigma. Returns the objective
  /// value before the update.
  double critic_step(double sigma) {
    const TrainConfig& c = s_.config;
    const Matrix real = sample_real(s_.data, c.batch, s_.rng);
    const Matrix fake = forward(s_.generator, sample_latent(c.batch, c.latent_dim, s_.rng));
    std::optional<Matrix> x_hat;
    const bool needs_hat = c.scheme == Scheme::Gp || c.scheme == Scheme::Ttur ||
                           (c.scheme == Scheme::Proposed && sigma >= kPenaltySkipSigma);
    if (needs_hat) x_hat = interpolates(real, fake, s_.rng);

    Tape tape;
    const MlpVars vars = bind(tape, s_.critic);
    const CriticObjective obj = critic_objective(tape, c, vars, real, fake, x_hat ? &*x_hat : nullptr, sigma);
    const double value = tape.scalar(obj.objective);
    if (!std::isfinite(value)) throw DivergedError("diverged: non-finite critic objective");
    const MlpParams grads = param_gradients(tape, obj.objective, vars);
    MlpParams dir = s_.critic_adam.direction(grads);

    switch (c.scheme) {
      case Scheme::OrthoCayley: {
        for (std::size_t l = 0; l < s_.critic.layers.size(); ++l) {
          Layer& layer = s_.critic.layers[l];
          for (std::size_t j = 0; j < layer.bias.size(); ++j) layer.bias[j] += c.eta_d * dir.layers[l].bias[j];
          if (orientation(layer.weight) == Orientation::Wide) {
            layer.weight += dir.layers[l].weight * c.eta_d;
            normalize_rows(layer.weight);
          } else {
            // Retraction descends along G; ascent uses G = -direction.
            layer.weight = cayley_update(layer.weight, -dir.layers[l].weight, c.tau_scale * c.eta_d);
          }
        }
        break;
      }
      default:
        apply_step(s_.critic, dir, c.eta_d, +1.0);
        break;
    }

    if (c.scheme == Scheme::Clip) {
      for (Layer& l : s_.critic.layers) {
        for (double& v : l.weight.data()) v = std::clamp(v, -c.clip_c, c.clip_c);
        for (double& v : l.bias) v = std::clamp(v, -c.clip_c, c.clip_c);
      }
    } else if (c.scheme == Scheme::OrthoBjorck) {
      for (Layer& l : s_.critic.layers) l.weight = bjorck_step(l.weight, 1);
    } else if (c.scheme == Scheme::Proposed) {
      const double strength = 1.0 - sigma;
      if (strength != 0.0)
        for (Layer& l : s_.critic.layers) l.weight = bjorck_blend(l.weight, strength);
    }
    for (const Layer& l : s_.critic.layers)
      if (!all_finite(l.weight)) throw DivergedError("diverged: non-finite critic weights");
    return value;
  }

  struct GeneratorStepResult {
    double loss = 0.0;
    double grad_norm = 0.0;
  };

  GeneratorStepResult generator_step() {
    const TrainConfig& c = s_.config;
    const Matrix z = sample_latent(c.batch, c.latent_dim, s_.rng);
    Tape tape;
    const MlpVars gvars = bind(tape, s_.generator);
    const MlpVars cvars = bind(tape, s_.critic);
    const Var x = forward(tape, gvars, tape.constant(z));
    const Var loss = tape.scale(tape.mean(forward(tape, cvars, x)), -1.0);
    GeneratorStepResult r;
    r.loss = tape.scalar(loss);
    if (!std::isfinite(r.loss)) throw DivergedError("diverged: non-finite generator loss");

    std::vector<Var> wrt = gvars.all();
    wrt.push_back(x);
    const std::vector<Var> g = tape.gradients(loss, wrt);
    // d loss / d x_i = -(1/batch) grad f(x_i).
    const Matrix& gx = tape.value(g.back());
    for (std::size_t i = 0; i < gx.rows(); ++i) {
      double s = 0.0;
      for (double v : gx.row(i)) s += v * v;
      r.grad_norm += std::sqrt(s) * static_cast<double>(c.batch);
    }
    r.grad_norm /= static_cast<double>(gx.rows());

    MlpParams grads;
    for (std::size_t l = 0; l < gvars.weights.size(); ++l) {
      const Matrix& gb = tape.value(g[2 * l + 1]);
      grads.layers.push_back({tape.value(g[2 * l]), std::vector<double>(gb.data().begin(), gb.data().end())});
    }
    apply_step(s_.generator, s_.generator_adam.direction(grads), c.eta_g, -1.0);
    return r;
  }

  /// One full iteration: n_critic critic updates then one generator update.
  void step() {
    const long i = s_.iter + 1;
    const double sigma = schedule(i);
    double objective = 0.0;
    for (int k = 0; k < s_.config.n_critic; ++k) objective = critic_step(sigma);
    const GeneratorStepResult g = generator_step();
    s_.iter = i;

    MetricRow row;
    row.iter = i;
    row.critic_loss = -objective;
    row.gen_loss = g.loss;
    row.gen_grad_norm = g.grad_norm;
    if (i % s_.config.diag_every == 0) diagnostics(row);
    row.wall_clock_s = std::chrono::duration<double>(Clock::now() - start_).count();
    row.iters_per_sec = row.wall_clock_s > 0.0 ? static_cast<double>(i) / row.wall_clock_s : 0.0;
    s_.log.rows.push_back(row);
  }

  /// Lipschitz estimate, mean penalty and mean gram deviation of the
  /// current critic, drawn from the diagnostics stream.
  void diagnostics(MetricRow& row) {
    const TrainConfig& c = s_.config;
    const std::size_t n = c.lipschitz_points;
    const Matrix real = sample_real(s_.data, n, s_.diag_rng);
    const Matrix fake = generate(s_.generator, n, s_.diag_rng);
    const LipschitzEstimate est = estimate_lipschitz_detail(s_.critic, real, fake, n, s_.diag_rng);
    row.lipschitz_est = est.lipschitz;
    row.penalty_est = est.penalty;
    row.mean_gram_dev = mean_gram_deviation(s_.critic, 500, 1e-10);
  }

 private:
  using Clock = std::chrono::steady_clock;

  static void normalize_rows(Matrix& w) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
      auto r = w.row(i);
      double s = 0.0;
      for (double v : r) s += v * v;
      const double n = std::sqrt(s);
      if (n > 0.0)
        for (double& v : r) v /= n;
    }
  }

  TrainState s_;
  Clock::time_point start_;
};

/// Runs the configured scheme until the budget is spent.
///
/// With budget_seconds > 0, n is first estimated from a 200-iteration
/// calibration run and then fixed, so k = n / 10 is known up front.
/// Divergence stops the run and is reported through the returned status;
/// the partial metric log is kept.
inline TrainState train(TrainConfig cfg, const DatasetSpec& data) {
  cfg.validate();
  if (cfg.budget_seconds > 0.0) {
    TrainConfig probe = cfg;
    probe.iters = 200;
    probe.budget_seconds = 0.0;
    Trainer t(probe, data);
    const auto t0 = std::chrono::steady_clock::now();
    long done = 0;
    try {
      for (; done < probe.iters; ++done) t.step();
    } catch (const NumericalError&) {
    }
    const double per_iter =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / static_cast<double>(std::max(1L, done));
    cfg.iters = std::max(1L, static_cast<long>(std::floor(cfg.budget_seconds / per_iter)));
  }
  Trainer trainer(cfg, data);
  try {
    while (trainer.state().iter < cfg.iters) trainer.step();
  } catch (const NumericalError& e) {
    TrainState s = trainer.release();
    s.status = RunStatus::Diverged;
    s.message = e.what();
    if (cfg.budget_seconds > 0.0) s.calibrated_iters = cfg.iters;
    return s;
  }
  TrainState s = trainer.release();
  if (cfg.budget_seconds > 0.0) s.calibrated_iters = cfg.iters;
  return s;
}

}  // namespace owgan
