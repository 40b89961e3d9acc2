#pragma once

#include <optional>
#include <vector>

#include "pmg/common.hpp"

namespace pmg {

struct LinearScheduleParams {
  int steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
};

/// Discrete variance-preserving schedule over steps t = 1..T.
///
/// alpha_bar(0) is defined as 1 so that the last backward update of a chain
/// lands on the clean estimate. Immutable after construction.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps, double beta_min, double beta_max);
  static NoiseSchedule linear(const LinearScheduleParams& p) {
    return linear(p.steps, p.beta_min, p.beta_max);
  }
  /// Arbitrary betas in (0, 1); betas[0] is beta_1.
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const;
  double alpha(int t) const;
  /// Valid for 0 <= t <= T.
  double alpha_bar(int t) const;

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }
  /// Present when built by linear().
  const std::optional<LinearScheduleParams>& linear_params() const { return params_; }

 private:
  NoiseSchedule() = default;
  void check_step(int t) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::optional<LinearScheduleParams> params_;
};

/// sigma for the DDIM transition from alpha_bar_t to alpha_bar_prev.
double ddim_sigma(double alpha_bar_prev, double alpha_bar_t, double eta);

/// sigma_t for the consecutive transition t -> t-1. Requires 2 <= t <= T;
/// t = 1 raises BoundaryError (the final step is deterministic, see ddim_step).
double ddim_sigma(const NoiseSchedule& s, int t, double eta);

/// sigma for a strided transition t -> t_prev (t_prev = 0 allowed, giving 0).
double ddim_sigma(const NoiseSchedule& s, int t, int t_prev, double eta);

enum class SamplerMode { ddpm, ddim };

/// Noise-form backward coefficients: x_{k-1} = u * x0_hat + v * eps_hat + w * noise.
struct SamplerCoefficients {
  double u = 0.0;
  double v = 0.0;
  double w = 0.0;
  SamplerMode mode = SamplerMode::ddim;
  double eta = 0.0;
  /// Coefficient on the score instead of the noise prediction,
  /// v_score * score == v * eps_hat since eps_hat = -sqrt(1 - alpha_bar_k) * score.
  double v_score = 0.0;
};

/// DDPM is the eta = 1 member of the DDIM family in noise form.
SamplerCoefficients sampler_coefficients(const NoiseSchedule& s, int k, SamplerMode mode,
                                         double eta = 0.0);

}  // namespace pmg
