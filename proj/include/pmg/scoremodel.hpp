#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "pmg/adam.hpp"
#include "pmg/mlp.hpp"
#include "pmg/predictor.hpp"
#include "pmg/schedule.hpp"

namespace pmg {

/// How the state enters the trunk. unit_noise divides x_t by sqrt(1 - alpha_bar_t)
/// so the injected noise has unit scale at every step.
enum class InputScaling : std::uint8_t { none = 0, unit_noise = 1 };

struct ScoreNetworkSpec {
  int state_dim = 1;
  std::vector<int> hidden = {64, 64, 64, 64};
  Activation activation = Activation::tanh;
  /// Angular frequencies applied to t/T; empty selects the default set.
  std::vector<double> frequencies;
  /// Empty selects every hidden layer.
  std::vector<int> tap_layers;
  InputScaling scaling = InputScaling::unit_noise;
  std::uint64_t seed = 0;
};

std::vector<double> default_time_frequencies();

/// Noise predictor eps_theta(x_t, t): an MLP over [scaled state; sin/cos time
/// embedding] whose hidden activations are exposed as taps.
class ScoreNetwork : public NoisePredictor {
 public:
  ScoreNetwork(Mlp trunk, std::vector<double> frequencies, std::vector<int> tap_layers,
               NoiseSchedule schedule, InputScaling scaling);

  static ScoreNetwork create(const ScoreNetworkSpec& spec, NoiseSchedule schedule);

  int state_dim() const override { return state_dim_; }
  NoisePrediction predict(const Mat& x_t, int t) const override;

  /// Trunk input for a batch with one step index per column.
  Mat trunk_input(const Mat& x_t, const std::vector<int>& steps) const;
  Vec time_embedding(int t) const;
  double input_scale(int t) const;

  const Mlp& trunk() const { return trunk_; }
  Mlp& mutable_trunk() { return trunk_; }
  const std::vector<double>& frequencies() const { return frequencies_; }
  const std::vector<int>& tap_layers() const { return tap_layers_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  InputScaling scaling() const { return scaling_; }

  /// Copy with a different tap set (must be valid layer indices).
  ScoreNetwork with_taps(std::vector<int> taps) const;

 private:
  Mlp trunk_;
  std::vector<double> frequencies_;
  std::vector<int> tap_layers_;
  NoiseSchedule schedule_;
  InputScaling scaling_;
  int state_dim_ = 0;
};

NoisePrediction predict_noise(const ScoreNetwork& net, const Mat& x_t, int t);

struct RecordedPrediction {
  NodeId eps = 0;
  std::map<int, NodeId> taps;
  RecordedMlp trunk;
};

/// Records predict_noise on `tape` with x_t as an existing node. Forward values
/// are bitwise identical to predict_noise.
RecordedPrediction record_predict_noise(Tape& tape, const ScoreNetwork& net, NodeId x_t, int t,
                                        bool trainable_params = false);

/// score = -eps / sqrt(1 - alpha_bar_t).
Mat score_from_noise(const Mat& eps, const NoiseSchedule& s, int t);

struct DsmConfig {
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  /// Steps are drawn uniformly from {t_low + 1, ..., t_high}; t_high = 0 means T.
  int t_low = 0;
  int t_high = 0;
  std::uint64_t seed = 0;
  double divergence_threshold = 1e6;
  /// Anneal the learning rate to zero along a half cosine over all batches.
  bool cosine_decay = true;
};

struct DsmResult {
  ScoreNetwork net;
  std::vector<double> loss_curve;  // mean batch loss per epoch
};

/// Denoising score matching in noise-prediction form,
/// E || eps_theta(sqrt(ab) x0 + sqrt(1 - ab) eps, t) - eps ||^2. `data` holds one
/// clean sample per column. Deterministic given cfg.seed.
DsmResult train_dsm(ScoreNetwork net, const Mat& data, const DsmConfig& cfg);

/// Monte-Carlo DSM loss, averaged over uniformly drawn steps in (t_low, t_high].
double dsm_loss(const NoisePredictor& predictor, const NoiseSchedule& s, const Mat& data,
                int t_low, int t_high, int draws_per_step, std::uint64_t seed);

/// Checkpoint plus JSON sidecar (<path>.json).
void save_score_network(const std::filesystem::path& path, const ScoreNetwork& net,
                        std::uint64_t seed);
ScoreNetwork load_score_network(const std::filesystem::path& path);

}  // namespace pmg
