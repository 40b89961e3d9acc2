#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "pmg/common.hpp"
#include "pmg/predictor.hpp"
#include "pmg/schedule.hpp"
#include "pmg/scoremodel.hpp"
#include "pmg/tape.hpp"

namespace pmg {

struct SamplerRunConfig {
  int steps = 10;
  /// Selected steps lie in (t_low, t_high].
  int t_low = 0;
  int t_high = 100;
  double eta = 0.0;
  std::uint64_t seed = 0;
  /// Forward-diffuse the encoded measurement to the top step before the loop.
  /// false starts the chain from the clean code itself.
  bool renoise = true;
};

/// `steps` evenly spaced values in (t_low, t_high], strictly decreasing.
std::vector<int> select_timesteps(const SamplerRunConfig& cfg, int schedule_steps);

/// Per-item noise streams for one run. Item j draws from mix_seed(seed, item_ids[j]):
/// first the start noise, then one vector per selected step.
struct RunNoise {
  Mat start;
  std::vector<Mat> per_step;
};
RunNoise make_run_noise(std::uint64_t seed, const std::vector<std::uint64_t>& item_ids, int dim,
                        int steps);

/// sqrt(ab_t) x0 + sqrt(1 - ab_t) noise; t = 0 returns x0.
Mat forward_diffuse(const Mat& x0, const NoiseSchedule& s, int t, const Mat& noise);

/// (x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t), evaluated as a weighted sum.
Mat tweedie_estimate(const Mat& x_t, const Mat& eps_hat, const NoiseSchedule& s, int t);
/// (x_t + (1 - ab_t) score) / sqrt(ab_t).
Mat tweedie_from_score(const Mat& x_t, const Mat& score, const NoiseSchedule& s, int t);

struct DdimCoefficients {
  double clean;  // sqrt(ab_prev)
  double eps;    // sqrt(1 - ab_prev - sigma^2)
  double noise;  // sigma
};

/// Transition t -> t_prev. The final transition (t_prev = 0, ab_0 = 1) is
/// deterministic and lands on the clean reference.
DdimCoefficients ddim_coefficients(const NoiseSchedule& s, int t, int t_prev, double eta);

/// sqrt(ab_prev) z0_ref + sqrt(1 - ab_prev - sigma^2) eps_hat + sigma noise.
Mat ddim_step(const Mat& z0_ref, const Mat& eps_hat, const NoiseSchedule& s, int t, int t_prev,
              double eta, const Mat& noise);

/// Per-column guidance loss and its gradient with respect to the clean estimate.
struct LossGrad {
  Vec value;
  Mat grad;
};
/// need_grad = false asks for the loss only; grad may then be left zero.
using GuidanceTerm = std::function<LossGrad(const Mat& z0, bool need_grad)>;

/// Where the perceptual gradient is evaluated.
enum class G2Point { tweedie, after_data_step };

struct PmgUpdate {
  Mat z0_prime;
  Mat z0_dprime;
  Vec g1;
  Vec g2;
  Mat grad1;
  Mat grad2;
};

/// z' = z_hat - zeta1 grad G1(z_hat);  z'' = z' - zeta2 grad G2(z_hat) (or at z'
/// with G2Point::after_data_step). Loss values are reported before the update.
/// A zero weight leaves its step out entirely, so z'' = z' = z_hat bitwise when
/// both weights vanish.
PmgUpdate pmg_update(const Mat& z0_hat, const GuidanceTerm& g1, const GuidanceTerm& g2, double zeta1,
                     double zeta2, G2Point point = G2Point::tweedie);

struct UnguidedPass {
  std::vector<int> timesteps;
  std::vector<Mat> states;                  // z_t at each selected step
  std::vector<std::map<int, Mat>> taps;     // per selected step
  Mat final_state;
};

/// Plain DDIM from the clean code z_start (re-noised per cfg.renoise).
UnguidedPass unguided_pass(const NoisePredictor& predictor, const NoiseSchedule& s, const Mat& z_start,
                           const SamplerRunConfig& cfg, const RunNoise& noise);

struct RecordedPass {
  std::vector<std::map<int, NodeId>> taps;
  NodeId final_state = 0;
};

/// unguided_pass recorded on a tape, z_start being an existing node.
RecordedPass record_unguided_pass(Tape& tape, const ScoreNetwork& net, NodeId z_start,
                                  const SamplerRunConfig& cfg, const RunNoise& noise);

}  // namespace pmg
