#pragma once

// Diagnostics and metrics for trained critic/generator pairs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "owgan/autodiff.hpp"
#include "owgan/data.hpp"
#include "owgan/linalg.hpp"
#include "owgan/ortho.hpp"
#include "owgan/rng.hpp"

namespace owgan {

// --- Lipschitz constant -------------------------------------------------------

struct LipschitzEstimate {
  double lipschitz = 0.0;  // max input-gradient norm over the interpolates
  double penalty = 0.0;    // mean (||grad|| - 1)^2 over the same points
  double mean_norm = 0.0;
};

/// Gradient norms of the critic at n_points random interpolates between
/// rows of x_real and x_fake (pairs and mixing weights drawn from rng).
inline LipschitzEstimate estimate_lipschitz_detail(const MlpParams& critic, const Matrix& x_real, const Matrix& x_fake,
                                                   std::size_t n_points, Rng& rng) {
  if (n_points == 0) throw std::invalid_argument("estimate_lipschitz: n_points must be >= 1");
  if (x_real.cols() != x_fake.cols()) throw std::invalid_argument("estimate_lipschitz: dimension mismatch");
  Matrix pts(n_points, x_real.cols());
  for (std::size_t p = 0; p < n_points; ++p) {
    const std::size_t i = rng.index(x_real.rows());
    const std::size_t j = rng.index(x_fake.rows());
    const double e = rng.uniform();
    for (std::size_t c = 0; c < pts.cols(); ++c) pts(p, c) = e * x_real(i, c) + (1.0 - e) * x_fake(j, c);
  }
  const Matrix g = input_gradient(critic, pts);
  LipschitzEstimate out;
  for (std::size_t p = 0; p < n_points; ++p) {
    double s = 0.0;
    for (double v : g.row(p)) s += v * v;
    const double norm = std::sqrt(s);
    out.lipschitz = std::max(out.lipschitz, norm);
    out.penalty += (norm - 1.0) * (norm - 1.0);
    out.mean_norm += norm;
  }
  out.penalty /= static_cast<double>(n_points);
  out.mean_norm /= static_cast<double>(n_points);
  return out;
}

/// Largest critic gradient norm over the interpolates; a Lipschitz constant
/// is a supremum, so the max is reported rather than a mean.
inline double estimate_lipschitz(const MlpParams& critic, const Matrix& x_real, const Matrix& x_fake,
                                 std::size_t n_points, Rng& rng) {
  return estimate_lipschitz_detail(critic, x_real, x_fake, n_points, rng).lipschitz;
}

// --- Wasserstein estimates and the generalization tournament ------------------

inline double mean_output(const MlpParams& critic, const Matrix& x) {
  const Matrix f = forward(critic, x);
  // Neumaier summation: outputs can share a large offset that cancels in W and w_hat.
  double s = 0.0, comp = 0.0;
  for (double v : f.data()) {
    const double t = s + v;
    comp += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  return (s + comp) / static_cast<double>(f.size());
}

/// E[f(real)] - E[f(fake)] over the given samples.
inline double wasserstein_estimate(const MlpParams& critic, const Matrix& real, const Matrix& fake) {
  return mean_output(critic, real) - mean_output(critic, fake);
}

inline Matrix generate(const MlpParams& generator, std::size_t n, Rng& rng) {
  return forward(generator, sample_latent(n, generator.input_dim(), rng));
}

/// E[f(real)] - E[f(g(z))] with n_gen latent draws.
inline double wasserstein_estimate(const MlpParams& critic, const MlpParams& generator, const Matrix& real,
                                   std::size_t n_gen, Rng& rng) {
  if (n_gen == 0) throw std::invalid_argument("wasserstein_estimate: n_gen must be >= 1");
  return wasserstein_estimate(critic, real, generate(generator, n_gen, rng));
}

struct GanModel {
  MlpParams critic;
  MlpParams generator;
};

struct TournamentResult {
  std::size_t n_models = 0;
  Matrix w_raw;                // W_ij: critic i, generator j, unseen real data
  std::vector<double> w_hat;   // critic i against its own generator on training data
  Matrix w_rel;                // (W_ij - w_hat_i) / |w_hat_i|
  std::vector<double> s;       // row sums of w_rel
  std::vector<bool> excluded;  // |w_hat_i| <= 1e-9: row left at zero
};

inline constexpr double kDegenerateBaseline = 1e-9;

/// Relative scores from raw estimates: w_rel(i, j) = (w_raw(i, j) - w_hat[i]) / |w_hat[i]|,
/// s[i] = sum_j w_rel(i, j). Rows with a degenerate baseline are excluded.
inline TournamentResult score_tournament(Matrix w_raw, std::vector<double> w_hat) {
  const std::size_t n = w_hat.size();
  if (w_raw.rows() != n || w_raw.cols() != n) throw std::invalid_argument("score_tournament: shape mismatch");
  TournamentResult r;
  r.n_models = n;
  r.w_raw = std::move(w_raw);
  r.w_hat = std::move(w_hat);
  r.w_rel = Matrix(n, n);
  r.s.assign(n, 0.0);
  r.excluded.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(r.w_hat[i]) <= kDegenerateBaseline) {
      r.excluded[i] = true;
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) {
      r.w_rel(i, j) = (r.w_raw(i, j) - r.w_hat[i]) / std::abs(r.w_hat[i]);
      r.s[i] += r.w_rel(i, j);
    }
  }
  return r;
}

/// Cross-evaluates every critic against every generator.
///
/// Each generator's samples for the test-side matrix are drawn once and
/// shared by all critics; baseline samples are drawn separately.
inline TournamentResult tournament(std::span<const GanModel> models, const Matrix& train_data, const Matrix& test_data,
                                   std::size_t n_gen, Rng& rng) {
  const std::size_t n = models.size();
  if (n < 2) throw std::invalid_argument("tournament: need at least two models");
  for (const GanModel& m : models) {
    if (m.critic.input_dim() != m.generator.output_dim() || m.critic.input_dim() != test_data.cols() ||
        m.critic.output_dim() != 1)
      throw std::invalid_argument("tournament: incompatible model dimensions");
  }
  std::vector<double> w_hat(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix fake = generate(models[i].generator, n_gen, rng);
    w_hat[i] = wasserstein_estimate(models[i].critic, train_data, fake);
  }
  std::vector<Matrix> test_fakes;
  test_fakes.reserve(n);
  for (std::size_t j = 0; j < n; ++j) test_fakes.push_back(generate(models[j].generator, n_gen, rng));

  Matrix w_raw(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double real_mean = mean_output(models[i].critic, test_data);
    for (std::size_t j = 0; j < n; ++j) w_raw(i, j) = real_mean - mean_output(models[i].critic, test_fakes[j]);
  }
  return score_tournament(std::move(w_raw), std::move(w_hat));
}

// --- Voronoi-cell mode statistics -------------------------------------------

struct ModeBin {
  std::size_t train_count = 0;
  std::size_t gen_count = 0;
  double z = 0.0;
  bool significant = false;
  bool skipped = false;  // no training samples in the cell
};

struct ModeReport {
  std::size_t K = 0;
  std::size_t significant_bins = 0;
  std::size_t skipped_bins = 0;
  std::vector<ModeBin> per_bin;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline std::size_t nearest(const Matrix& centers, std::span<const double> x) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = sq_dist(centers.row(c), x);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// k-means++ seeding followed by up to `iters` Lloyd iterations.
inline Matrix kmeans(const Matrix& x, std::size_t k, Rng& rng, int iters = 50) {
  if (k == 0 || k > x.rows()) throw std::invalid_argument("kmeans: need 1 <= k <= number of points");
  const std::size_t n = x.rows(), d = x.cols();
  Matrix centers(k, d);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.index(n);
  std::copy(x.row(first).begin(), x.row(first).end(), centers.row(0).begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], detail::sq_dist(x.row(i), centers.row(c - 1)));
      total += dist[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= dist[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
  }

  std::vector<std::size_t> assign(n, k);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = detail::nearest(centers, x.row(i));
      if (a != assign[i]) {
        assign[i] = a;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto s = sums.row(assign[i]);
      for (std::size_t j = 0; j < d; ++j) s[j] += x(i, j);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keep the previous center
      for (std::size_t j = 0; j < d; ++j) centers(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
  }
  return centers;
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Counts Voronoi cells (k-means on `train`) whose share of generated
/// samples is significantly lower than their share of training samples,
/// using a one-sided pooled two-proportion z-test at level alpha.
inline ModeReport ndb_modes(const Matrix& train, const Matrix& generated, std::size_t K, double alpha, Rng& rng) {
  if (K < 1 || K > std::min<std::size_t>(100, train.rows()))
    throw std::invalid_argument("ndb_modes: need 1 <= K <= min(100, train size)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ndb_modes: alpha must lie in (0, 1)");
  if (train.cols() != generated.cols()) throw std::invalid_argument("ndb_modes: dimension mismatch");
  const Matrix centers = kmeans(train, K, rng);
  ModeReport rep;
  rep.K = K;
  rep.per_bin.assign(K, ModeBin{});
  for (std::size_t i = 0; i < train.rows(); ++i) ++rep.per_bin[detail::nearest(centers, train.row(i))].train_count;
  for (std::size_t i = 0; i < generated.rows(); ++i)
    ++rep.per_bin[detail::nearest(centers, generated.row(i))].gen_count;

  const double nt = static_cast<double>(train.rows());
  const double ng = static_cast<double>(generated.rows());
  for (ModeBin& b : rep.per_bin) {
    if (b.train_count == 0) {
      b.skipped = true;
      ++rep.skipped_bins;
      continue;
    }
    const double pt = b.train_count / nt;
    const double pg = b.gen_count / ng;
    const double pooled = (b.train_count + b.gen_count) / (nt + ng);
    const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / nt + 1.0 / ng));
    b.z = se > 0.0 ? (pg - pt) / se : 0.0;
    b.significant = se > 0.0 && normal_cdf(b.z) < alpha;
    if (b.significant) ++rep.significant_bins;
  }
  return rep;
}

inline const std::vector<std::size_t>& default_ndb_sweep() {
  static const std::vector<std::size_t> ks{1, 2, 5, 10, 20, 50, 100};
  return ks;
}

// --- spectra ---------------------------------------------------------------------

/// Descending singular values of every weight matrix.
inline std::vector<std::vector<double>> singular_spectrum(const MlpParams& params) {
  std::vector<std::vector<double>> out;
  for (const Layer& l : params.layers) out.push_back(svd(l.weight).sigma);
  return out;
}

/// Fraction of singular values within [0.5 sigma_max, sigma_max] of their
/// own layer, pooled over all layers. Flatter spectra give larger values.
inline double spectrum_flatness(const std::vector<std::vector<double>>& spectra) {
  std::size_t in_band = 0, total = 0;
  for (const auto& s : spectra) {
    if (s.empty()) continue;
    const double top = s.front();
    for (double v : s)
      if (v >= 0.5 * top) ++in_band;
    total += s.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(in_band) / static_cast<double>(total);
}

// --- exact small-sample transport cost ------------------------------------------

/// Minimum-cost perfect matching (Hungarian method with potentials).
/// Returns assignment[i] = column matched to row i.
inline std::vector<std::size_t> min_cost_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw std::invalid_argument("min_cost_assignment: cost matrix must be square");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

inline constexpr std::size_t kMaxExactW1Samples = 256;

/// Exact 1-Wasserstein distance between two equal-size, equal-weight
/// empirical measures under Euclidean ground cost.
inline double exact_w1(const Matrix& x, const Matrix& y) {
  if (!x.same_shape(y)) throw std::invalid_argument("exact_w1: sample sets must have equal shape");
  const std::size_t n = x.rows();
  if (n > kMaxExactW1Samples) throw std::invalid_argument("exact_w1: at most 256 samples");
  Matrix cost(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = std::sqrt(detail::sq_dist(x.row(i), y.row(j)));
  const auto a = min_cost_assignment(cost);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost(i, a[i]);
  return total / static_cast<double>(n);
}

/// Mean gram deviation over the network's weight matrices.
inline double mean_gram_deviation(const MlpParams& net, int max_iters = 2000, double tol = 1e-13) {
  double s = 0.0;
  for (const Layer& l : net.layers) s += gram_deviation(l.weight, max_iters, tol);
  return s / static_cast<double>(net.layers.size());
}

}  // namespace owgan
