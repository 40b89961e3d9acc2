#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include "pmg/common.hpp"
#include "pmg/manifold.hpp"
#include "pmg/perceptual.hpp"
#include "pmg/predictor.hpp"
#include "pmg/sampler.hpp"

namespace pmg {

struct GuidanceConfig {
  double zeta1 = 1.0;
  double zeta2 = 0.2;
  G2Point point = G2Point::tweedie;
};

struct TrajectoryStep {
  int t = 0;
  Mat z_t;
  Mat z0_hat;
  Mat z0_prime;
  Mat z0_dprime;
  Vec g1;
  Vec g2;
  Vec grad1_norm;
  Vec grad2_norm;
  std::map<int, Mat> taps;
};

/// One guided sampling run over a batch of measurements (one per column).
struct Trajectory {
  std::vector<std::uint64_t> item_ids;
  std::vector<TrajectoryStep> steps;  // timesteps strictly decreasing
  Mat final_state;
};

struct LgdmOptions {
  /// Items are processed in column chunks of this size to bound tape memory.
  int chunk = 128;
  /// Drop z_t, z0 estimates from the trajectory (losses and taps are kept).
  bool keep_states = true;
};

/// Guided latent sampling: encode y, re-noise to the top step (cfg.renoise),
/// then per selected step collect taps, form the Tweedie estimate, apply the
/// data and perceptual corrections and take a DDIM step from z''. Item j uses
/// noise from (run.seed, item_ids[j]). Throws NumericalError naming the step
/// when a state turns non-finite.
Trajectory lgdm_run(const Mat& y, const std::vector<std::uint64_t>& item_ids, const NoisePredictor& predictor,
                    const NoiseSchedule& s, const LinearAutoencoder& ae, const SamplerRunConfig& run,
                    const GuidanceConfig& guidance, const PerceptualExtractor& psi, const LgdmOptions& opts = {});

/// Rows: item, t, G1, G2, |z_t|, |z0_hat|, |z0'|, |z0''|.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

/// z_t states as little-endian f64 after a u32 header (steps, dim, items),
/// ordered step, item, coordinate.
void write_trajectory_states(std::ostream& out, const Trajectory& traj);

}  // namespace pmg
