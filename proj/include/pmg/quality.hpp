#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pmg/common.hpp"
#include "pmg/lgdm.hpp"
#include "pmg/mlp.hpp"

namespace pmg {

enum class Pooling : std::uint8_t { concat, mean_over_time, per_layer_mean };

const char* to_string(Pooling p);
Pooling pooling_from_string(const std::string& name);

struct TapEntry {
  int t = 0;
  int layer = 0;
  Vec value;
};

struct Hyperfeatures {
  /// Sorted by timestep descending, then layer ascending.
  std::vector<TapEntry> entries;
  Vec pooled;
};

/// concat: every entry in order. mean_over_time: per layer, the average over
/// timesteps. per_layer_mean: one scalar (mean activation) per entry.
/// Throws DomainError on empty input, duplicate keys, ragged layer widths or
/// a (timestep, layer) grid that is not complete.
Hyperfeatures aggregate(std::vector<TapEntry> taps, Pooling pooling);

/// Pooled hyperfeatures of every trajectory item, one row per item. `layers`
/// restricts the taps used (empty keeps all); `steps` keeps only the listed
/// trajectory step positions (empty keeps all).
Mat hyperfeature_matrix(const Trajectory& traj, Pooling pooling, const std::vector<int>& layers = {},
                        const std::vector<int>& steps = {});

struct CorrelationReport {
  std::optional<double> plcc;
  std::optional<double> srcc;
  std::size_t n = 0;
};

/// Pearson correlation; nullopt when either input has zero variance.
std::optional<double> plcc(const Vec& xs, const Vec& ys);
/// Pearson correlation of average ranks.
std::optional<double> srcc(const Vec& xs, const Vec& ys);
/// Average ranks (1-based); ties share the mean of their positions.
Vec average_ranks(const Vec& xs);
CorrelationReport correlate(const Vec& predicted, const Vec& truth);

enum class HeadKind : std::uint8_t { ridge, mlp };

struct MlpHeadConfig {
  std::vector<int> hidden = {64, 32};
  int epochs = 500;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

/// g_phi: z-normalized features (train statistics, zero-variance columns
/// dropped) followed by ridge regression with an unpenalized intercept, or a
/// two-hidden-layer network trained on squared error.
class RegressionHead {
 public:
  HeadKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  const Vec& mean() const { return mu_; }
  const Vec& scale() const { return sigma_; }
  const std::vector<Eigen::Index>& kept() const { return kept_; }
  const Vec& weights() const { return w_; }
  double bias() const { return b_; }
  Eigen::Index input_dim() const { return input_dim_; }

  /// One prediction per row of x.
  Vec predict(const Mat& x) const;
  double predict(const Vec& h) const;

  /// Normalized and column-filtered copy of x.
  Mat normalize(const Mat& x) const;

  friend RegressionHead fit_ridge(const Mat& x, const Vec& y, double lambda);
  friend RegressionHead fit_mlp_head(const Mat& x, const Vec& y, const MlpHeadConfig& cfg);
  friend void save_head(const std::filesystem::path& path, const RegressionHead& head);
  friend RegressionHead load_head(const std::filesystem::path& path);

 private:
  HeadKind kind_ = HeadKind::ridge;
  double lambda_ = 0.0;
  Eigen::Index input_dim_ = 0;
  Vec mu_;
  Vec sigma_;
  std::vector<Eigen::Index> kept_;
  Vec w_;
  double b_ = 0.0;
  std::optional<Mlp> net_;
  double y_mu_ = 0.0;     // target standardization of the mlp head
  double y_sigma_ = 1.0;
};

/// Minimizes ||X_n w + b - y||^2 + lambda ||w||^2 over the normalized X_n.
/// Uses the dual (Gram) system when there are more features than rows.
RegressionHead fit_ridge(const Mat& x, const Vec& y, double lambda);
RegressionHead fit_mlp_head(const Mat& x, const Vec& y, const MlpHeadConfig& cfg);

struct HeadConfig {
  HeadKind kind = HeadKind::ridge;
  double lambda = 1e-3;
  MlpHeadConfig mlp;
};
RegressionHead fit_head(const Mat& x, const Vec& y, const HeadConfig& cfg);

/// Checkpoint (ridge: one identity layer holding w and b) plus JSON sidecar
/// {kind, lambda, norm_mu, norm_sigma, kept, input_dim}.
void save_head(const std::filesystem::path& path, const RegressionHead& head);
RegressionHead load_head(const std::filesystem::path& path);

}  // namespace pmg
