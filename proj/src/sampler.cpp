#include "pmg/sampler.hpp"

#include <cmath>
#include <string>

#include "pmg/random.hpp"

namespace pmg {

std::vector<int> select_timesteps(const SamplerRunConfig& cfg, int schedule_steps) {
  require(cfg.t_low >= 0 && cfg.t_high <= schedule_steps && cfg.t_low < cfg.t_high,
          "sampler: t_range must satisfy 0 <= low < high <= T");
  const int width = cfg.t_high - cfg.t_low;
  require(cfg.steps >= 1 && cfg.steps <= width, "sampler: steps must lie in 1..|t_range|");
  std::vector<int> ts;
  for (int i = cfg.steps; i >= 1; --i) ts.push_back(cfg.t_low + (i * width) / cfg.steps);
  return ts;
}

RunNoise make_run_noise(std::uint64_t seed, const std::vector<std::uint64_t>& item_ids, int dim, int steps) {
  const auto n = static_cast<Eigen::Index>(item_ids.size());
  RunNoise out;
  out.start.resize(dim, n);
  out.per_step.assign(static_cast<std::size_t>(steps), Mat(dim, n));
  for (Eigen::Index j = 0; j < n; ++j) {
    Rng rng(mix_seed(seed, item_ids[static_cast<std::size_t>(j)]));
    out.start.col(j) = standard_normal(dim, rng);
    for (int i = 0; i < steps; ++i) out.per_step[static_cast<std::size_t>(i)].col(j) = standard_normal(dim, rng);
  }
  return out;
}

Mat forward_diffuse(const Mat& x0, const NoiseSchedule& s, int t, const Mat& noise) {
  require(x0.rows() == noise.rows() && x0.cols() == noise.cols(), "forward_diffuse: shape mismatch");
  const double ab = s.alpha_bar(t);
  return linear_combination({{&x0, std::sqrt(ab)}, {&noise, std::sqrt(1.0 - ab)}});
}

Mat tweedie_estimate(const Mat& x_t, const Mat& eps_hat, const NoiseSchedule& s, int t) {
  require(x_t.rows() == eps_hat.rows() && x_t.cols() == eps_hat.cols(), "tweedie: shape mismatch");
  const double ab = s.alpha_bar(t);
  if (!(ab > 0.0)) throw DomainError("tweedie: alpha_bar_t must be > 0");
  const double root = std::sqrt(ab);
  return linear_combination({{&x_t, 1.0 / root}, {&eps_hat, -std::sqrt(1.0 - ab) / root}});
}

Mat tweedie_from_score(const Mat& x_t, const Mat& score, const NoiseSchedule& s, int t) {
  require(x_t.rows() == score.rows() && x_t.cols() == score.cols(), "tweedie: shape mismatch");
  const double ab = s.alpha_bar(t);
  if (!(ab > 0.0)) throw DomainError("tweedie: alpha_bar_t must be > 0");
  const double root = std::sqrt(ab);
  return linear_combination({{&x_t, 1.0 / root}, {&score, (1.0 - ab) / root}});
}

DdimCoefficients ddim_coefficients(const NoiseSchedule& s, int t, int t_prev, double eta) {
  require(t >= 1 && t <= s.steps() && t_prev >= 0 && t_prev < t, "ddim_step: bad transition");
  const double ab_prev = s.alpha_bar(t_prev);
  const double sigma = t_prev == 0 ? 0.0 : ddim_sigma(s, t, t_prev, eta);
  const double rest = 1.0 - ab_prev - sigma * sigma;
  if (rest < -1e-15) throw DomainError("ddim_step: sigma^2 exceeds 1 - alpha_bar_prev");
  return {std::sqrt(ab_prev), std::sqrt(std::max(0.0, rest)), sigma};
}

Mat ddim_step(const Mat& z0_ref, const Mat& eps_hat, const NoiseSchedule& s, int t, int t_prev, double eta,
              const Mat& noise) {
  require(z0_ref.rows() == eps_hat.rows() && z0_ref.cols() == eps_hat.cols() &&
              noise.rows() == z0_ref.rows() && noise.cols() == z0_ref.cols(),
          "ddim_step: shape mismatch");
  const DdimCoefficients c = ddim_coefficients(s, t, t_prev, eta);
  return linear_combination({{&z0_ref, c.clean}, {&eps_hat, c.eps}, {&noise, c.noise}});
}

PmgUpdate pmg_update(const Mat& z0_hat, const GuidanceTerm& g1, const GuidanceTerm& g2, double zeta1,
                     double zeta2, G2Point point) {
  require(std::isfinite(zeta1) && std::isfinite(zeta2), "pmg_update: guidance weights must be finite");
  PmgUpdate out;
  LossGrad first = g1(z0_hat, zeta1 != 0.0);
  if (!first.value.allFinite() || (zeta1 != 0.0 && !first.grad.allFinite()))
    throw NumericalError("pmg_update: non-finite data-consistency gradient");
  out.z0_prime = zeta1 != 0.0 ? linear_combination({{&z0_hat, 1.0}, {&first.grad, -zeta1}}) : z0_hat;
  LossGrad second = g2(point == G2Point::tweedie ? z0_hat : out.z0_prime, zeta2 != 0.0);
  if (!second.value.allFinite() || (zeta2 != 0.0 && !second.grad.allFinite()))
    throw NumericalError("pmg_update: non-finite perceptual gradient");
  out.z0_dprime =
      zeta2 != 0.0 ? linear_combination({{&out.z0_prime, 1.0}, {&second.grad, -zeta2}}) : out.z0_prime;
  out.g1 = std::move(first.value);
  out.g2 = std::move(second.value);
  out.grad1 = std::move(first.grad);
  out.grad2 = std::move(second.grad);
  return out;
}

UnguidedPass unguided_pass(const NoisePredictor& predictor, const NoiseSchedule& s, const Mat& z_start,
                           const SamplerRunConfig& cfg, const RunNoise& noise) {
  UnguidedPass pass;
  pass.timesteps = select_timesteps(cfg, s.steps());
  const std::size_t n = pass.timesteps.size();
  require(noise.per_step.size() >= n, "unguided_pass: not enough step noise");
  Mat z = cfg.renoise ? forward_diffuse(z_start, s, pass.timesteps.front(), noise.start) : z_start;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = pass.timesteps[i];
    const int t_prev = i + 1 < n ? pass.timesteps[i + 1] : cfg.t_low;
    NoisePrediction pred = predictor.predict(z, t);
    const Mat z0 = tweedie_estimate(z, pred.eps, s, t);
    Mat next = ddim_step(z0, pred.eps, s, t, t_prev, cfg.eta, noise.per_step[i]);
    if (!next.allFinite()) throw NumericalError("unguided_pass: non-finite state at t=" + std::to_string(t));
    pass.states.push_back(std::move(z));
    pass.taps.push_back(std::move(pred.taps));
    z = std::move(next);
  }
  pass.final_state = std::move(z);
  return pass;
}

RecordedPass record_unguided_pass(Tape& tape, const ScoreNetwork& net, NodeId z_start,
                                  const SamplerRunConfig& cfg, const RunNoise& noise) {
  const NoiseSchedule& s = net.schedule();
  const std::vector<int> ts = select_timesteps(cfg, s.steps());
  require(noise.per_step.size() >= ts.size(), "record_unguided_pass: not enough step noise");
  RecordedPass rec;
  NodeId z = z_start;
  if (cfg.renoise) {
    const int top = ts.front();
    const double ab = s.alpha_bar(top);
    const NodeId n0 = tape.constant(noise.start);
    const std::array<Tape::Term, 2> terms{{{z, std::sqrt(ab)}, {n0, std::sqrt(1.0 - ab)}}};
    z = tape.lincomb_with_value(terms, forward_diffuse(tape.value(z), s, top, noise.start));
  }
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : cfg.t_low;
    const RecordedPrediction pred = record_predict_noise(tape, net, z, t);
    const double ab = s.alpha_bar(t);
    const double root = std::sqrt(ab);
    const std::array<Tape::Term, 2> tw{{{z, 1.0 / root}, {pred.eps, -std::sqrt(1.0 - ab) / root}}};
    const NodeId z0 = tape.lincomb_with_value(tw, tweedie_estimate(tape.value(z), tape.value(pred.eps), s, t));
    const DdimCoefficients c = ddim_coefficients(s, t, t_prev, cfg.eta);
    const NodeId nz = tape.constant(noise.per_step[i]);
    const std::array<Tape::Term, 3> step{{{z0, c.clean}, {pred.eps, c.eps}, {nz, c.noise}}};
    const NodeId next = tape.lincomb_with_value(
        step, ddim_step(tape.value(z0), tape.value(pred.eps), s, t, t_prev, cfg.eta, noise.per_step[i]));
    rec.taps.push_back(pred.taps);
    z = next;
  }
  rec.final_state = z;
  return rec;
}

}  // namespace pmg
