#include "pmg/adam.hpp"

#include <cmath>

namespace pmg {

std::optional<AdamDiagnostics> adam_step(Vec& params, const Vec& grads, AdamState& state,
                                         const AdamConfig& cfg) {
  require(params.size() == grads.size(), "adam: params and grads differ in length");
  for (Eigen::Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      return AdamDiagnostics{i, grads[i], state.step,
                             "non-finite gradient at index " + std::to_string(i)};
    }
  }
  if (state.m.size() != params.size()) {
    state.m = Vec::Zero(params.size());
    state.v = Vec::Zero(params.size());
    state.step = 0;
  }
  state.step += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  params.array() -= cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
  return std::nullopt;
}

}  // namespace pmg
