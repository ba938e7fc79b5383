#pragma once

// Synthetic 2-D target distributions and the interpolate sampler.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include "owgan/linalg.hpp"
#include "owgan/rng.hpp"

namespace owgan {

enum class DatasetKind { Spiral, GaussianRing };

inline const char* to_string(DatasetKind k) noexcept {
  return k == DatasetKind::Spiral ? "spiral" : "gaussian_ring";
}

inline DatasetKind parse_dataset_kind(std::string_view s) {
  if (s == "spiral") return DatasetKind::Spiral;
  if (s == "gaussian_ring" || s == "ring") return DatasetKind::GaussianRing;
  throw std::invalid_argument("unknown dataset '" + std::string(s) + "' (valid: spiral, gaussian_ring)");
}

/// Two-armed Archimedean spiral: t ~ U[0, 2 pi turns], arm a ~ U{0, 1},
/// x = r(t) (cos(t + a pi), sin(t + a pi)) + N(0, noise^2 I), r(t) = t / (2 pi turns).
///
/// Gaussian ring: `modes` centers equally spaced on a circle of `radius`,
/// each sample a uniformly chosen center plus N(0, mode_sigma^2 I).
struct DatasetSpec {
  DatasetKind kind = DatasetKind::Spiral;
  double turns = 2.0;
  double noise_sigma = 0.05;
  int modes = 8;
  double radius = 2.0;
  double mode_sigma = 0.02;

  static constexpr std::size_t dim = 2;

  void validate() const {
    if (kind == DatasetKind::Spiral) {
      if (!(turns > 0.0)) throw std::invalid_argument("DatasetSpec: spiral turns must be positive");
      if (!(noise_sigma >= 0.0)) throw std::invalid_argument("DatasetSpec: noise sigma must be nonnegative");
    } else {
      if (modes < 1) throw std::invalid_argument("DatasetSpec: ring needs at least one mode");
      if (!(radius > 0.0)) throw std::invalid_argument("DatasetSpec: ring radius must be positive");
      if (!(mode_sigma >= 0.0)) throw std::invalid_argument("DatasetSpec: mode sigma must be nonnegative");
    }
  }

  /// Ring centers as an (modes x 2) matrix.
  Matrix ring_centers() const {
    Matrix c(static_cast<std::size_t>(modes), 2);
    for (int i = 0; i < modes; ++i) {
      const double a = 2.0 * std::numbers::pi * i / modes;
      c(i, 0) = radius * std::cos(a);
      c(i, 1) = radius * std::sin(a);
    }
    return c;
  }
};

inline Matrix sample_real(const DatasetSpec& spec, std::size_t m, Rng& rng) {
  if (m == 0) throw std::invalid_argument("sample_real: need at least one sample");
  spec.validate();
  Matrix x(m, DatasetSpec::dim);
  if (spec.kind == DatasetKind::Spiral) {
    const double span = 2.0 * std::numbers::pi * spec.turns;
    for (std::size_t i = 0; i < m; ++i) {
      const double t = rng.uniform(0.0, span);
      const double arm = static_cast<double>(rng.index(2));
      const double r = t / span;
      const double a = t + arm * std::numbers::pi;
      x(i, 0) = r * std::cos(a) + spec.noise_sigma * rng.normal();
      x(i, 1) = r * std::sin(a) + spec.noise_sigma * rng.normal();
    }
  } else {
    const Matrix c = spec.ring_centers();
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t k = rng.index(static_cast<std::uint64_t>(spec.modes));
      x(i, 0) = c(k, 0) + spec.mode_sigma * rng.normal();
      x(i, 1) = c(k, 1) + spec.mode_sigma * rng.normal();
    }
  }
  return x;
}

/// Standard-normal latent batch.
inline Matrix sample_latent(std::size_t m, std::size_t dim, Rng& rng) { return rng.normal_matrix(m, dim); }

/// Row i = e_i x_real[i] + (1 - e_i) x_fake[i] with e_i ~ U[0, 1].
inline Matrix interpolates(const Matrix& x_real, const Matrix& x_fake, Rng& rng) {
  if (!x_real.same_shape(x_fake)) throw std::invalid_argument("interpolates: shape mismatch");
  Matrix out(x_real.rows(), x_real.cols());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double e = rng.uniform();
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = e * x_real(i, j) + (1.0 - e) * x_fake(i, j);
  }
  return out;
}

}  // namespace owgan
