#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "pmg/common.hpp"
#include "pmg/manifold.hpp"
#include "pmg/mlp.hpp"
#include "pmg/sampler.hpp"
#include "pmg/scoremodel.hpp"
#include "pmg/tape.hpp"

namespace pmg {

enum class ExtractorKind : std::uint8_t { none, identity, linear, mlp, scorenet };

/// How G2 combines feature residuals: plain sum of squares, or divided by the
/// feature count.
enum class LossReduction : std::uint8_t { sum, mean };

const char* to_string(ExtractorKind kind);
ExtractorKind extractor_kind_from_string(const std::string& name);

/// Perceptual feature map psi acting on data-space points (one per column).
///
/// The scorenet kind uses the score network's own hyperfeatures: psi(x) is the
/// tap concatenation of an unguided sampling pass started from encode(x), with
/// blocks ordered by timestep (descending) then layer (ascending). Its noise is
/// drawn per item from (run.seed, item id), so psi depends on the item id.
class PerceptualExtractor {
 public:
  static PerceptualExtractor none();
  static PerceptualExtractor identity();
  static PerceptualExtractor linear(Mat m);
  static PerceptualExtractor mlp(Mlp m);
  static PerceptualExtractor scorenet(std::shared_ptr<const ScoreNetwork> net, SamplerRunConfig run,
                                      bool normalize_blocks = false);

  ExtractorKind kind() const { return kind_; }
  const Mat& matrix() const { return matrix_; }
  bool normalize_blocks() const { return normalize_blocks_; }
  LossReduction reduction() const { return reduction_; }
  PerceptualExtractor& set_reduction(LossReduction r) {
    reduction_ = r;
    return *this;
  }
  const SamplerRunConfig& run() const { return run_; }

  /// Row offsets of the feature blocks for data dimension `data_dim`; the last
  /// entry is the total feature count.
  std::vector<Eigen::Index> block_offsets(int data_dim) const;

  /// psi(x) column-wise. Empty (0 rows) for kind none.
  Mat features(const Mat& x, const LinearAutoencoder& ae, const std::vector<std::uint64_t>& item_ids) const;

  /// psi recorded on a tape with x an existing data-space node.
  NodeId record(Tape& tape, NodeId x, const LinearAutoencoder& ae,
                const std::vector<std::uint64_t>& item_ids) const;

 private:
  ExtractorKind kind_ = ExtractorKind::none;
  Mat matrix_;
  std::optional<Mlp> mlp_;
  std::shared_ptr<const ScoreNetwork> net_;
  SamplerRunConfig run_;
  bool normalize_blocks_ = false;
  LossReduction reduction_ = LossReduction::sum;
};

/// psi(y) for a batch of measurements together with per-block loss weights.
struct TargetCache {
  Mat features;                       // feature rows x items
  Mat block_weights;                  // blocks x items
  std::vector<Eigen::Index> offsets;  // block row offsets, back() = feature rows
  std::vector<std::uint64_t> item_ids;
  bool empty() const { return features.rows() == 0; }
};

/// With normalize_blocks, block b of item j is weighted by 1 / var(target block).
/// The mean reduction further divides every weight by the feature count.
TargetCache precompute_targets(const PerceptualExtractor& psi, const Mat& y, const LinearAutoencoder& ae,
                               const std::vector<std::uint64_t>& item_ids);

/// G1 = || decode(z) - y ||^2 per column, gradient 2 B^T (decode(z) - y).
LossGrad g1_value_grad(const Mat& z, const Mat& y, const LinearAutoencoder& ae);

/// G2 = sum_b w_b || psi_b(decode(z)) - psi_b(y) ||^2 per column. Identity and
/// linear kinds use the closed-form gradient, mlp and scorenet reverse mode.
/// need_grad = false skips the gradient (returned as zeros).
LossGrad g2_value_grad(const Mat& z, const PerceptualExtractor& psi, const TargetCache& targets,
                       const LinearAutoencoder& ae, bool need_grad = true);

/// Same quantity through the generic tape path for every kind.
LossGrad g2_value_grad_reverse(const Mat& z, const PerceptualExtractor& psi, const TargetCache& targets,
                               const LinearAutoencoder& ae);

struct GuidanceLossReport {
  double g1 = 0.0;
  double g2 = 0.0;
  double grad1_norm = 0.0;
  double grad2_norm = 0.0;
};

GuidanceLossReport summarize(const PmgUpdate& update, Eigen::Index column);

}  // namespace pmg
