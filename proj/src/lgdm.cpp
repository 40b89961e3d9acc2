#include "pmg/lgdm.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>
#include <string>

namespace pmg {

namespace {

std::vector<std::uint64_t> slice(const std::vector<std::uint64_t>& ids, std::size_t at, std::size_t n) {
  return {ids.begin() + static_cast<std::ptrdiff_t>(at), ids.begin() + static_cast<std::ptrdiff_t>(at + n)};
}

Trajectory run_chunk(const Mat& y, const std::vector<std::uint64_t>& ids, const NoisePredictor& predictor,
                     const NoiseSchedule& s, const LinearAutoencoder& ae, const SamplerRunConfig& run,
                     const GuidanceConfig& guidance, const PerceptualExtractor& psi, const LgdmOptions& opts) {
  const std::vector<int> ts = select_timesteps(run, s.steps());
  const TargetCache targets = precompute_targets(psi, y, ae, ids);
  const RunNoise noise = make_run_noise(run.seed, ids, ae.latent_dim(), static_cast<int>(ts.size()));

  const GuidanceTerm g1 = [&](const Mat& z, bool) { return g1_value_grad(z, y, ae); };
  const GuidanceTerm g2 = [&](const Mat& z, bool need_grad) {
    return g2_value_grad(z, psi, targets, ae, need_grad);
  };

  Trajectory traj;
  traj.item_ids = ids;
  const Mat z0 = ae.encode(y);
  Mat z = run.renoise ? forward_diffuse(z0, s, ts.front(), noise.start) : z0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : run.t_low;
    NoisePrediction pred = predictor.predict(z, t);
    Mat z_hat = tweedie_estimate(z, pred.eps, s, t);
    if (!z_hat.allFinite()) throw NumericalError("lgdm_run: non-finite clean estimate at t=" + std::to_string(t));
    PmgUpdate upd;
    try {
      upd = pmg_update(z_hat, g1, g2, guidance.zeta1, guidance.zeta2, guidance.point);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at t=" + std::to_string(t));
    }
    Mat next = ddim_step(upd.z0_dprime, pred.eps, s, t, t_prev, run.eta, noise.per_step[i]);
    if (!next.allFinite()) throw NumericalError("lgdm_run: non-finite state after step t=" + std::to_string(t));

    TrajectoryStep step;
    step.t = t;
    step.g1 = std::move(upd.g1);
    step.g2 = std::move(upd.g2);
    step.grad1_norm = upd.grad1.size() > 0 ? Vec(upd.grad1.colwise().norm().transpose()) : Vec::Zero(z.cols());
    step.grad2_norm = upd.grad2.size() > 0 ? Vec(upd.grad2.colwise().norm().transpose()) : Vec::Zero(z.cols());
    step.taps = std::move(pred.taps);
    if (opts.keep_states) {
      step.z_t = std::move(z);
      step.z0_hat = std::move(z_hat);
      step.z0_prime = std::move(upd.z0_prime);
      step.z0_dprime = std::move(upd.z0_dprime);
    }
    traj.steps.push_back(std::move(step));
    z = std::move(next);
  }
  traj.final_state = std::move(z);
  return traj;
}

Mat hcat(const Mat& a, const Mat& b) {
  if (a.size() == 0 && a.cols() == 0) return b;
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Vec vcat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

void append(Trajectory& into, Trajectory&& part) {
  if (into.steps.empty()) {
    into = std::move(part);
    return;
  }
  into.item_ids.insert(into.item_ids.end(), part.item_ids.begin(), part.item_ids.end());
  for (std::size_t i = 0; i < into.steps.size(); ++i) {
    TrajectoryStep& a = into.steps[i];
    TrajectoryStep& b = part.steps[i];
    a.z_t = hcat(a.z_t, b.z_t);
    a.z0_hat = hcat(a.z0_hat, b.z0_hat);
    a.z0_prime = hcat(a.z0_prime, b.z0_prime);
    a.z0_dprime = hcat(a.z0_dprime, b.z0_dprime);
    a.g1 = vcat(a.g1, b.g1);
    a.g2 = vcat(a.g2, b.g2);
    a.grad1_norm = vcat(a.grad1_norm, b.grad1_norm);
    a.grad2_norm = vcat(a.grad2_norm, b.grad2_norm);
    for (auto& [layer, value] : a.taps) value = hcat(value, b.taps.at(layer));
  }
  into.final_state = hcat(into.final_state, part.final_state);
}

}  // namespace

Trajectory lgdm_run(const Mat& y, const std::vector<std::uint64_t>& item_ids, const NoisePredictor& predictor,
                    const NoiseSchedule& s, const LinearAutoencoder& ae, const SamplerRunConfig& run,
                    const GuidanceConfig& guidance, const PerceptualExtractor& psi, const LgdmOptions& opts) {
  require(y.rows() == ae.data_dim(), "lgdm_run: measurement dimension mismatch");
  require(static_cast<Eigen::Index>(item_ids.size()) == y.cols(), "lgdm_run: one item id per measurement");
  require(predictor.state_dim() == ae.latent_dim(), "lgdm_run: predictor and autoencoder disagree on latent dim");
  require(opts.chunk >= 1, "lgdm_run: chunk must be >= 1");
  require(guidance.zeta1 >= 0.0 && guidance.zeta2 >= 0.0, "lgdm_run: guidance weights must be >= 0");
  require(y.allFinite(), "lgdm_run: non-finite measurement");

  Trajectory all;
  const auto n = static_cast<std::size_t>(y.cols());
  const auto chunk = static_cast<std::size_t>(opts.chunk);
  for (std::size_t at = 0; at < n; at += chunk) {
    const std::size_t len = std::min(chunk, n - at);
    const Mat part = y.middleCols(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(len));
    append(all, run_chunk(part, slice(item_ids, at, len), predictor, s, ae, run, guidance, psi, opts));
  }
  return all;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "item,t,G1,G2,norm_z_t,norm_z0_hat,norm_z0_prime,norm_z0_dprime\n";
  const auto norm = [](const Mat& m, Eigen::Index j) { return m.size() > 0 ? m.col(j).norm() : 0.0; };
  for (std::size_t j = 0; j < traj.item_ids.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    for (const TrajectoryStep& st : traj.steps) {
      out << traj.item_ids[j] << ',' << st.t << ',' << st.g1[c] << ',' << st.g2[c] << ',' << norm(st.z_t, c)
          << ',' << norm(st.z0_hat, c) << ',' << norm(st.z0_prime, c) << ',' << norm(st.z0_dprime, c) << '\n';
    }
  }
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b, 8);
}

}  // namespace

void write_trajectory_states(std::ostream& out, const Trajectory& traj) {
  require(traj.steps.empty() || traj.steps.front().z_t.size() > 0, "trajectory: states were not kept");
  const auto dim = traj.steps.empty() ? 0u : static_cast<std::uint32_t>(traj.steps.front().z_t.rows());
  put_u32(out, static_cast<std::uint32_t>(traj.steps.size()));
  put_u32(out, dim);
  put_u32(out, static_cast<std::uint32_t>(traj.item_ids.size()));
  for (const TrajectoryStep& st : traj.steps)
    for (Eigen::Index j = 0; j < st.z_t.cols(); ++j)
      for (Eigen::Index i = 0; i < st.z_t.rows(); ++i) put_f64(out, st.z_t(i, j));
}

}  // namespace pmg
