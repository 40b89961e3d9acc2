#pragma once

#include <optional>
#include <string>

#include "pmg/common.hpp"

namespace pmg {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vec m;
  Vec v;
  long step = 0;
};

/// Why a step was skipped.
struct AdamDiagnostics {
  Eigen::Index first_bad_index = -1;
  double bad_value = 0.0;
  long step = 0;
  std::string message;
};

/// Bias-corrected Adam update over a flat parameter vector. A gradient with
/// any non-finite entry leaves params and state untouched and returns a
/// diagnostics record.
std::optional<AdamDiagnostics> adam_step(Vec& params, const Vec& grads, AdamState& state,
                                         const AdamConfig& cfg);

}  // namespace pmg
