#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pmg/common.hpp"
#include "pmg/lgdm.hpp"
#include "pmg/manifold.hpp"
#include "pmg/perceptual.hpp"
#include "pmg/quality.hpp"
#include "pmg/scoremodel.hpp"

namespace pmg {

/// Two-level linear testbed: data space R^D, an exact autoencoder onto the
/// latent space R^L, and the data manifold Z (dimension k, through the origin)
/// inside latent space carrying a latent Gaussian.
struct TestbedSpec {
  int data_dim = 32;
  int latent_dim = 16;
  int intrinsic_dim = 4;
  std::uint64_t seed = 7;
  /// Norm of the autoencoder's data-space offset.
  double data_offset_norm = 6.0;
  /// Empty means zero mean / identity covariance.
  std::vector<double> latent_mean;
  std::vector<double> latent_cov;  // row-major k x k
};

struct Testbed {
  LinearAutoencoder ae;
  LinearManifold manifold;  // Z inside latent space
  LatentGaussian latent;
};

Testbed build_testbed(const TestbedSpec& spec);

/// Clean latent training states (points of Z), one per column.
Mat testbed_training_data(const Testbed& tb, int n, std::uint64_t seed);

enum class DistortionKind : std::uint8_t { additive_noise, coordinate_blur, off_manifold_push };

const char* to_string(DistortionKind kind);
DistortionKind distortion_from_string(const std::string& name);

/// Synthetic stand-ins for real distortion types.
///   additive_noise:    x + s * n, n Gaussian rescaled to norm sqrt(D), s the noise std
///   coordinate_blur:   x + s * (K x - x), K a Gaussian blur over the coordinate index
///   off_manifold_push: x + s * d, d a unit direction in the autoencoder range
///                      orthogonal to Z
/// Level l of L_f levels has severity s = scale_f * l / L_f. scale_f is
/// calibrated so the median latent distance to Z at the top level equals
/// target_energy, and the true quality is 100 exp(-s / tau_f) with
/// tau_f = scale_f / ln 5, so the levels span [20, 100].
struct BenchmarkSpec {
  int contents = 100;
  std::vector<DistortionKind> families = {DistortionKind::additive_noise, DistortionKind::coordinate_blur,
                                          DistortionKind::off_manifold_push};
  int levels = 9;
  /// Distorted items per family per content; level indices rotate with the content.
  int items_per_family = 3;
  /// One undistorted item per content with quality 100.
  bool control = true;
  double target_energy = 2.5;
  double blur_width = 2.0;
  std::uint64_t seed = 3;
};

struct BenchItem {
  std::uint64_t id = 0;
  int content = 0;
  int family = -1;  // index into spec.families, -1 for the control
  int level = 0;
  double severity = 0.0;
  double quality = 100.0;
};

struct Benchmark {
  BenchmarkSpec spec;
  std::vector<BenchItem> items;
  Mat measurements;  // D x n, the only part the pipeline sees
  Mat references;    // D x n clean points, withheld from the pipeline
  std::vector<double> family_scale;
  Vec quality() const;
  std::vector<std::uint64_t> ids() const;
};

Benchmark generate_benchmark(const BenchmarkSpec& spec, const Testbed& tb);

/// Quality for level l of `levels` (l = 0 gives 100).
double true_quality(int level, int levels);

struct ProtocolSpec {
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  int repeats = 10;
  std::uint64_t seed = 17;
  std::vector<double> lambda_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  /// Grid values are multiples of max(n_train, p), the mean non-zero eigenvalue
  /// of the normalized Gram matrix, instead of absolute penalties.
  bool relative_lambda = true;
  Pooling pooling = Pooling::concat;
};

/// Item indices per split. Contents never straddle splits.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

std::vector<Split> make_splits(const std::vector<BenchItem>& items, const ProtocolSpec& protocol);

/// Middle element of the sorted values (mean of the two middles for even counts).
double median(std::vector<double> values);

struct RepeatResult {
  double lambda = 0.0;  // selected grid value
  double effective_lambda = 0.0;
  double val_srcc = 0.0;
  CorrelationReport test;
};

struct EvalReport {
  std::vector<RepeatResult> repeats;
  double median_plcc = 0.0;
  double median_srcc = 0.0;
  /// Per item: median of its test predictions over the repeats that held it out (NaN if none).
  Vec predicted;
};

/// Fits the head per repeat on train, picks lambda on val (ridge), reports test.
/// Undefined correlations count as 0 in the medians.
EvalReport evaluate_features(const Mat& features, const Vec& quality, const std::vector<Split>& splits,
                             const ProtocolSpec& protocol, const HeadConfig& head);

struct PsiSpec {
  ExtractorKind kind = ExtractorKind::scorenet;
  std::uint64_t seed = 11;
  bool normalize_blocks = false;
  LossReduction reduction = LossReduction::mean;
  /// Unguided pass of the scorenet kind.
  int steps = 5;
  int t_low = 0;
  int t_high = 100;
  /// Output width of the seeded linear and mlp kinds.
  int features = 32;
};

PerceptualExtractor build_extractor(const PsiSpec& spec, std::shared_ptr<const ScoreNetwork> net,
                                    const Testbed& tb);

struct PipelineConfig {
  SamplerRunConfig sampler;
  GuidanceConfig guidance;
  PsiSpec psi;
  HeadConfig head;
  ProtocolSpec protocol;
  int chunk = 128;
};

struct ExperimentResult {
  Mat features;  // one row per item
  EvalReport hyper;
  /// Last tap layer at the final (least noisy) timestep only.
  EvalReport baseline;
  double median_wall_ms = 0.0;  // per item
};

/// Guided sampling over every benchmark item, then the split protocol on the
/// pooled hyperfeatures and on the baseline features.
ExperimentResult run_experiment(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                                const PipelineConfig& cfg);

struct AblationRow {
  std::string label;
  double value = 0.0;
  double plcc = 0.0;
  double srcc = 0.0;
  double wall_ms = 0.0;
};

struct AblationTable {
  std::string which;
  std::string value_name;
  std::vector<AblationRow> rows;
  /// Extra "# key=value" header lines.
  std::vector<std::pair<std::string, std::string>> notes;
};

AblationTable ablate_zeta2(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                           const PipelineConfig& cfg, const std::vector<double>& values = {0.0, 0.2, 0.5, 0.7, 1.0});
AblationTable ablate_steps(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                           const PipelineConfig& cfg, const std::vector<int>& values = {1, 5, 10, 50});
/// Buckets (low, high] slide toward noisier steps; the first should be the default range.
AblationTable ablate_time_range(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                                const PipelineConfig& cfg, const std::vector<std::pair<int, int>>& buckets);
std::vector<std::pair<int, int>> default_time_buckets();
/// Single-timestep run; one row per tap layer (label "layer<l>") then "all".
/// Also records whether zeroing every other layer reproduces each single-layer
/// row exactly (note "masking_equivalent").
AblationTable ablate_layers(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                            const PipelineConfig& cfg);

/// "# config_hash=..", "# seed=..", notes, then the table; wall_ms is the last column.
void write_ablation_csv(std::ostream& out, const AblationTable& table, const std::string& config_hash,
                        std::uint64_t seed);

/// item, content, family, level, true score, predicted score.
void write_items_csv(std::ostream& out, const Benchmark& bench, const Vec& predicted, const std::string& config_hash,
                     std::uint64_t seed);

}  // namespace pmg
