#include "pmg/manifold.hpp"

#include <cmath>

#include "pmg/random.hpp"

namespace pmg {

LinearManifold::LinearManifold(Mat basis, Vec offset) : basis_(std::move(basis)), offset_(std::move(offset)) {
  require(basis_.cols() >= 1, "manifold: intrinsic dimension must be >= 1");
  require(basis_.cols() < basis_.rows(), "manifold: need k < D");
  require(offset_.size() == basis_.rows(), "manifold: offset must have length D");
  require(basis_.allFinite() && offset_.allFinite(), "manifold: non-finite basis or offset");
  const Mat gram = basis_.transpose() * basis_;
  require((gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-10,
          "manifold: basis columns must be orthonormal");
}

LinearManifold LinearManifold::random(int ambient_dim, int intrinsic_dim, std::uint64_t seed) {
  return random(ambient_dim, intrinsic_dim, seed, Vec::Zero(std::max(ambient_dim, 0)));
}

LinearManifold LinearManifold::random(int ambient_dim, int intrinsic_dim, std::uint64_t seed, Vec offset) {
  require(ambient_dim >= 2, "manifold: D must be >= 2");
  require(intrinsic_dim >= 1 && intrinsic_dim < ambient_dim, "manifold: need 1 <= k < D");
  Rng rng(seed);
  const Mat g = standard_normal(ambient_dim, intrinsic_dim, rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(ambient_dim, intrinsic_dim);
  return LinearManifold(std::move(q), std::move(offset));
}

LinearAutoencoder::LinearAutoencoder(LinearManifold m)
    : m_(std::move(m)), bt_(m_.basis().transpose()), neg_offset_(-m_.offset()) {}

Mat LinearAutoencoder::encode(const Mat& x) const {
  require(x.rows() == m_.ambient_dim(), "encode: dimension mismatch");
  Mat centered = x;
  centered.colwise() += neg_offset_;
  return bt_ * centered;
}

Mat LinearAutoencoder::decode(const Mat& z) const {
  require(z.rows() == m_.intrinsic_dim(), "decode: dimension mismatch");
  Mat x = m_.basis() * z;
  x.colwise() += m_.offset();
  return x;
}

LatentGaussian::LatentGaussian(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  require(mean_.size() >= 1, "latent gaussian: empty mean");
  require(cov_.rows() == mean_.size() && cov_.cols() == mean_.size(), "latent gaussian: cov shape");
  require(mean_.allFinite() && cov_.allFinite(), "latent gaussian: non-finite parameters");
  require((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "latent gaussian: cov not symmetric");
  Eigen::LLT<Mat> llt(cov_);
  if (llt.info() != Eigen::Success) throw DomainError("latent gaussian: covariance not positive definite");
}

LatentGaussian LatentGaussian::standard(int k) { return LatentGaussian(Vec::Zero(k), Mat::Identity(k, k)); }

LatentGaussian LatentGaussian::degenerate(Vec mean) {
  LatentGaussian g;
  const auto k = mean.size();
  g.mean_ = std::move(mean);
  g.cov_ = Mat::Zero(k, k);
  g.degenerate_ = true;
  return g;
}

Mat sample_manifold_data(const LinearManifold& m, const LatentGaussian& g, int n, std::uint64_t seed) {
  require(n >= 1, "sample_manifold_data: n must be >= 1");
  require(g.dim() == m.intrinsic_dim(), "sample_manifold_data: latent dimension mismatch");
  Mat z = g.mean().replicate(1, n);
  if (!g.is_degenerate()) {
    Rng rng(seed);
    const Mat l = Eigen::LLT<Mat>(g.cov()).matrixL();
    z += l * standard_normal(g.dim(), n, rng);
  }
  Mat x = m.basis() * z;
  x.colwise() += m.offset();
  return x;
}

namespace {

struct MarginalParts {
  Vec mean;        // mu_t
  Mat tangent_inv; // (ab C + (1 - ab) I_k)^{-1}
  double one_minus_ab;
  double ab;
};

MarginalParts marginal_parts(const LinearManifold& m, const LatentGaussian& g, const NoiseSchedule& s, int t) {
  require(t >= 1 && t <= s.steps(), "analytic score: step out of range");
  require(g.dim() == m.intrinsic_dim(), "analytic score: latent dimension mismatch");
  MarginalParts p;
  p.ab = s.alpha_bar(t);
  p.one_minus_ab = 1.0 - p.ab;
  if (!(p.one_minus_ab > 0.0)) throw NumericalError("analytic score: singular marginal covariance");
  p.mean = std::sqrt(p.ab) * (m.basis() * g.mean() + m.offset());
  const Mat k = p.ab * g.cov() + p.one_minus_ab * Mat::Identity(g.dim(), g.dim());
  p.tangent_inv = k.llt().solve(Mat::Identity(g.dim(), g.dim()));
  return p;
}

}  // namespace

Mat analytic_score(const LinearManifold& m, const LatentGaussian& g, const NoiseSchedule& s,
                   const Mat& x_t, int t) {
  require(x_t.rows() == m.ambient_dim(), "analytic score: dimension mismatch");
  const MarginalParts p = marginal_parts(m, g, s, t);
  const Mat d = x_t.colwise() - p.mean;
  const Mat tangent = m.basis().transpose() * d;
  const Mat perp = d - m.basis() * tangent;
  return -(perp / p.one_minus_ab + m.basis() * (p.tangent_inv * tangent));
}

Mat analytic_posterior_mean(const LinearManifold& m, const LatentGaussian& g, const NoiseSchedule& s,
                            const Mat& x_t, int t) {
  require(x_t.rows() == m.ambient_dim(), "posterior mean: dimension mismatch");
  const MarginalParts p = marginal_parts(m, g, s, t);
  const Mat d = x_t.colwise() - p.mean;
  // Cov(z, x_t) = sqrt(ab) C B^T and B^T Sigma_t^{-1} = K^{-1} B^T.
  Mat z = std::sqrt(p.ab) * g.cov() * (p.tangent_inv * (m.basis().transpose() * d));
  z.colwise() += g.mean();
  Mat x0 = m.basis() * z;
  x0.colwise() += m.offset();
  return x0;
}

NoisePrediction AnalyticNoisePredictor::predict(const Mat& x_t, int t) const {
  NoisePrediction out;
  out.eps = -std::sqrt(1.0 - s_.alpha_bar(t)) * analytic_score(m_, g_, s_, x_t, t);
  return out;
}

double distance_to_manifold(const Vec& x, const LinearManifold& m, double scale) {
  require(scale > 0.0, "distance_to_manifold: scale must be > 0");
  require(x.size() == m.ambient_dim(), "distance_to_manifold: dimension mismatch");
  const Vec d = x - scale * m.offset();
  return (d - m.basis() * (m.basis().transpose() * d)).norm();
}

Vec distances_to_manifold(const Mat& x, const LinearManifold& m, double scale) {
  require(scale > 0.0, "distance_to_manifold: scale must be > 0");
  require(x.rows() == m.ambient_dim(), "distance_to_manifold: dimension mismatch");
  const Mat d = x.colwise() - scale * m.offset();
  return (d - m.basis() * (m.basis().transpose() * d)).colwise().norm().transpose();
}

double concentration_radius(double alpha_bar, int ambient_dim, int intrinsic_dim) {
  require(intrinsic_dim < ambient_dim, "concentration_radius: need k < D");
  return std::sqrt((1.0 - alpha_bar) * (ambient_dim - intrinsic_dim));
}

double concentration_radius(const NoiseSchedule& s, int t, int ambient_dim, int intrinsic_dim) {
  return concentration_radius(s.alpha_bar(t), ambient_dim, intrinsic_dim);
}

double epsilon_band(double delta, double alpha_bar, int ambient_dim, int intrinsic_dim) {
  require(delta > 0.0 && delta < 1.0, "epsilon_band: delta must lie in (0, 1)");
  require(intrinsic_dim < ambient_dim, "epsilon_band: need k < D");
  const double codim = ambient_dim - intrinsic_dim;
  const double eps_prime = -std::log(delta / 2.0) / codim;
  const double root = std::sqrt(eps_prime);
  const double inner = std::sqrt(std::max(0.0, 1.0 - 2.0 * root));
  const double tail = (1.0 + 2.0 * root + 2.0 * eps_prime - 1.0) / (std::sqrt(1.0 - alpha_bar) * codim);
  return std::min(1.0, inner + tail);
}

double epsilon_band(double delta, const NoiseSchedule& s, int t, int ambient_dim, int intrinsic_dim) {
  return epsilon_band(delta, s.alpha_bar(t), ambient_dim, intrinsic_dim);
}

double tangent_residual(const Mat& decoder_basis, const Vec& latent_grad) {
  require(decoder_basis.cols() == latent_grad.size(), "tangent_residual: dimension mismatch");
  const Vec v = decoder_basis * latent_grad;
  return (v - decoder_basis * (decoder_basis.transpose() * v)).norm();
}

double tangent_residual(const LinearAutoencoder& ae, const Vec& latent_grad) {
  return tangent_residual(ae.manifold().basis(), latent_grad);
}

}  // namespace pmg
