#pragma once

#include <cstdint>

#include "pmg/common.hpp"
#include "pmg/predictor.hpp"
#include "pmg/schedule.hpp"

namespace pmg {

/// Affine k-dimensional subspace of R^D: { basis * z + offset }.
class LinearManifold {
 public:
  /// basis must be D x k with orthonormal columns (to 1e-10) and k < D.
  LinearManifold(Mat basis, Vec offset);

  /// Basis from QR-orthonormalization of a seeded Gaussian D x k matrix.
  static LinearManifold random(int ambient_dim, int intrinsic_dim, std::uint64_t seed);
  static LinearManifold random(int ambient_dim, int intrinsic_dim, std::uint64_t seed, Vec offset);

  int ambient_dim() const { return static_cast<int>(basis_.rows()); }
  int intrinsic_dim() const { return static_cast<int>(basis_.cols()); }
  const Mat& basis() const { return basis_; }
  const Vec& offset() const { return offset_; }
  /// basis * basis^T.
  Mat projector() const { return basis_ * basis_.transpose(); }

 private:
  Mat basis_;
  Vec offset_;
};

/// Exact encoder/decoder pair of a linear manifold.
class LinearAutoencoder {
 public:
  explicit LinearAutoencoder(LinearManifold m);

  const LinearManifold& manifold() const { return m_; }
  int data_dim() const { return m_.ambient_dim(); }
  int latent_dim() const { return m_.intrinsic_dim(); }

  /// z = basis^T (x - offset), column-wise.
  Mat encode(const Mat& x) const;
  /// x = basis z + offset, column-wise.
  Mat decode(const Mat& z) const;
  /// basis v: pushes a latent tangent vector forward (no offset).
  Mat decode_tangent(const Mat& v) const { return m_.basis() * v; }

  /// Explicit basis^T and -offset, so taped re-computations of encode match bitwise.
  const Mat& encoder_matrix() const { return bt_; }
  const Vec& negative_offset() const { return neg_offset_; }

 private:
  LinearManifold m_;
  Mat bt_;
  Vec neg_offset_;
};

/// N(mean, cov) over manifold coordinates. A degenerate distribution
/// (zero covariance) must be requested explicitly.
class LatentGaussian {
 public:
  LatentGaussian(Vec mean, Mat cov);
  static LatentGaussian standard(int k);
  static LatentGaussian degenerate(Vec mean);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }
  bool is_degenerate() const { return degenerate_; }

 private:
  LatentGaussian() = default;
  Vec mean_;
  Mat cov_;
  bool degenerate_ = false;
};

/// n points decode(z_i) with z_i ~ g, one per column. Deterministic per seed.
Mat sample_manifold_data(const LinearManifold& m, const LatentGaussian& g, int n, std::uint64_t seed);

/// Closed-form grad log p_t(x_t) of the forward-diffused manifold Gaussian,
/// N(sqrt(ab) (B mu + o), ab B C B^T + (1 - ab) I). Columns are independent points.
Mat analytic_score(const LinearManifold& m, const LatentGaussian& g, const NoiseSchedule& s,
                   const Mat& x_t, int t);

/// E[x0 | x_t] for the same model, by Gaussian conditioning.
Mat analytic_posterior_mean(const LinearManifold& m, const LatentGaussian& g, const NoiseSchedule& s,
                            const Mat& x_t, int t);

/// Noise predictor implied by the analytic score, eps = -sqrt(1 - ab) * score. No taps.
class AnalyticNoisePredictor : public NoisePredictor {
 public:
  AnalyticNoisePredictor(LinearManifold m, LatentGaussian g, NoiseSchedule s)
      : m_(std::move(m)), g_(std::move(g)), s_(std::move(s)) {}
  int state_dim() const override { return m_.ambient_dim(); }
  NoisePrediction predict(const Mat& x_t, int t) const override;

 private:
  LinearManifold m_;
  LatentGaussian g_;
  NoiseSchedule s_;
};

/// Distance from x to scale * M, i.e. || (I - P)(x - scale * offset) ||.
double distance_to_manifold(const Vec& x, const LinearManifold& m, double scale);
/// Column-wise distances.
Vec distances_to_manifold(const Mat& x, const LinearManifold& m, double scale);

/// r_t = sqrt((1 - alpha_bar) (D - k)).
double concentration_radius(double alpha_bar, int ambient_dim, int intrinsic_dim);
double concentration_radius(const NoiseSchedule& s, int t, int ambient_dim, int intrinsic_dim);

/// Relative half-width of the shell around M_t holding mass >= 1 - delta.
double epsilon_band(double delta, double alpha_bar, int ambient_dim, int intrinsic_dim);
double epsilon_band(double delta, const NoiseSchedule& s, int t, int ambient_dim, int intrinsic_dim);

/// Norm of the component of decoder_basis * latent_grad outside the span
/// assumed by decoder_basis * decoder_basis^T.
double tangent_residual(const Mat& decoder_basis, const Vec& latent_grad);
double tangent_residual(const LinearAutoencoder& ae, const Vec& latent_grad);

}  // namespace pmg
