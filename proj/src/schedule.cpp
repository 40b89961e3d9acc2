#include "pmg/schedule.hpp"

#include <cmath>
#include <string>

namespace pmg {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_min, double beta_max) {
  require(steps >= 1, "schedule: T must be >= 1");
  require(std::isfinite(beta_min) && std::isfinite(beta_max), "schedule: non-finite beta bounds");
  require(beta_min > 0.0, "schedule: betas must be > 0");
  require(beta_min <= beta_max && beta_max < 1.0, "schedule: need beta_min <= beta_max < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_min + (beta_max - beta_min) * frac;
  }
  NoiseSchedule s = from_betas(std::move(betas));
  s.params_ = LinearScheduleParams{steps, beta_min, beta_max};
  return s;
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  require(!betas.empty(), "schedule: T must be >= 1");
  NoiseSchedule s;
  s.alphas_.reserve(betas.size());
  s.alpha_bars_.reserve(betas.size());
  double running = 1.0;
  for (double b : betas) {
    require(std::isfinite(b) && b > 0.0 && b < 1.0, "schedule: every beta must lie in (0, 1)");
    s.alphas_.push_back(1.0 - b);
    running *= 1.0 - b;
    s.alpha_bars_.push_back(running);
  }
  s.betas_ = std::move(betas);
  return s;
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps())
    throw DomainError("schedule: step " + std::to_string(t) + " outside 1.." +
                      std::to_string(steps()));
}

double NoiseSchedule::beta(int t) const {
  check_step(t);
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha(int t) const {
  check_step(t);
  return alphas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  check_step(t);
  return alpha_bars_[static_cast<std::size_t>(t - 1)];
}

double ddim_sigma(double alpha_bar_prev, double alpha_bar_t, double eta) {
  require(std::isfinite(eta), "ddim_sigma: eta must be finite");
  require(alpha_bar_t < 1.0, "ddim_sigma: alpha_bar_t must be < 1");
  const double ratio = std::max(0.0, 1.0 - alpha_bar_t / alpha_bar_prev);
  return eta * std::sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar_t)) * std::sqrt(ratio);
}

double ddim_sigma(const NoiseSchedule& s, int t, double eta) {
  if (t == 1) throw BoundaryError("ddim_sigma: t = 1 has no predecessor step");
  if (t < 1 || t > s.steps()) throw DomainError("ddim_sigma: step out of range");
  return ddim_sigma(s.alpha_bar(t - 1), s.alpha_bar(t), eta);
}

double ddim_sigma(const NoiseSchedule& s, int t, int t_prev, double eta) {
  require(t >= 1 && t <= s.steps(), "ddim_sigma: step out of range");
  require(t_prev >= 0 && t_prev < t, "ddim_sigma: t_prev must satisfy 0 <= t_prev < t");
  return ddim_sigma(s.alpha_bar(t_prev), s.alpha_bar(t), eta);
}

SamplerCoefficients sampler_coefficients(const NoiseSchedule& s, int k, SamplerMode mode,
                                         double eta) {
  require(k >= 1 && k <= s.steps(), "sampler_coefficients: step out of range");
  SamplerCoefficients c;
  c.mode = mode;
  c.eta = mode == SamplerMode::ddpm ? 1.0 : eta;
  const double ab_prev = s.alpha_bar(k - 1);
  const double ab = s.alpha_bar(k);
  const double sigma = ddim_sigma(ab_prev, ab, c.eta);
  const double v2 = 1.0 - ab_prev - sigma * sigma;
  if (v2 < -1e-15) throw DomainError("sampler_coefficients: sigma^2 exceeds 1 - alpha_bar_{k-1}");
  c.u = std::sqrt(ab_prev);
  c.v = std::sqrt(std::max(0.0, v2));
  c.w = sigma;
  c.v_score = -c.v * std::sqrt(1.0 - ab);
  return c;
}

}  // namespace pmg
