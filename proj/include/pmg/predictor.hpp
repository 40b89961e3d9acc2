#pragma once

#include <map>

#include "pmg/common.hpp"

namespace pmg {

struct NoisePrediction {
  Mat eps;                  // state_dim x batch
  std::map<int, Mat> taps;  // layer index -> activations (width x batch)
};

/// Anything that predicts the forward-process noise of x_t at step t.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual int state_dim() const = 0;
  virtual NoisePrediction predict(const Mat& x_t, int t) const = 0;
};

}  // namespace pmg
