#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pmg/mlp.hpp"
#include "pmg/perceptual.hpp"
#include "pmg/random.hpp"
#include "pmg/tape.hpp"
#include "testing.hpp"

namespace pmg::testing {

using Builder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

struct OpCase {
  std::string name;
  std::vector<std::pair<int, int>> shapes;
  Builder build;
};

inline std::vector<OpCase> op_cases() {
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](Tape& t, const auto& in) { return t.matmul(in[0], in[1]); }},
      {"add", {{3, 2}, {3, 2}}, [](Tape& t, const auto& in) { return t.add(in[0], in[1]); }},
      {"sub", {{3, 2}, {3, 2}}, [](Tape& t, const auto& in) { return t.sub(in[0], in[1]); }},
      {"add_bias", {{3, 4}, {3, 1}}, [](Tape& t, const auto& in) { return t.add_bias(in[0], in[1]); }},
      {"lincomb", {{2, 3}, {2, 3}, {2, 3}},
       [](Tape& t, const auto& in) { return t.lincomb({{in[0], 0.5}, {in[1], -1.5}, {in[2], 2.0}}); }},
      {"tanh", {{3, 3}}, [](Tape& t, const auto& in) { return t.tanh(in[0]); }},
      {"softplus", {{3, 3}}, [](Tape& t, const auto& in) { return t.softplus(in[0]); }},
      {"concat_rows", {{2, 3}, {1, 3}, {3, 3}},
       [](Tape& t, const auto& in) {
         std::vector<NodeId> parts(in.begin(), in.end());
         return t.concat_rows(parts);
       }},
      {"sum_squares", {{3, 2}}, [](Tape& t, const auto& in) { return t.sum_squares(in[0]); }},
      {"column_sum_squares", {{4, 3}}, [](Tape& t, const auto& in) { return t.column_sum_squares(in[0]); }},
      // A composite through every op kind at once.
      {"composite", {{4, 2}, {3, 4}, {3, 1}},
       [](Tape& t, const auto& in) {
         const NodeId h = t.tanh(t.add_bias(t.matmul(in[1], in[0]), in[2]));
         const NodeId s = t.softplus(h);
         return t.sum_squares(t.sub(t.lincomb({{h, 2.0}, {s, -0.5}}), s));
       }},
  };
}

inline double objective(const OpCase& c, const std::vector<Mat>& values, const Mat& weights) {
  Tape tape;
  std::vector<NodeId> ids;
  for (const Mat& v : values) ids.push_back(tape.leaf(v));
  const NodeId out = c.build(tape, ids);
  return (tape.value(out).array() * weights.array()).sum();
}

/// Worst reverse-mode vs central-difference error over every input of one
/// randomized instance, under a random output weighting.
inline double op_gradient_error(const OpCase& c, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 77));
  std::vector<Mat> values;
  for (auto [r, k] : c.shapes) values.push_back(standard_normal(r, k, rng));
  Tape tape;
  std::vector<NodeId> ids;
  for (const Mat& v : values) ids.push_back(tape.leaf(v));
  const NodeId out = c.build(tape, ids);
  tape.finalize(out);
  const Mat w = standard_normal(tape.value(out).rows(), tape.value(out).cols(), rng);
  const Gradients g = tape.backward(w);
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Mat fd = central_difference(
        [&](const Mat& xi) {
          std::vector<Mat> v = values;
          v[i] = xi;
          return objective(c, v, w);
        },
        values[i]);
    worst = std::max(worst, max_relative_error(g[ids[i]], fd));
  }
  return worst;
}

inline double mlp_gradient_error(std::uint64_t seed) {
  const Activation act = seed % 2 == 0 ? Activation::tanh : Activation::smooth_relu;
  const Mlp m = Mlp::random({3, 5, 4, 2}, act, Activation::identity, seed);
  Rng rng(mix_seed(seed, 1));
  const Mat x = standard_normal(3, 3, rng);
  const Mat w = standard_normal(2, 3, rng);
  Tape tape;
  const NodeId in = tape.constant(x);
  const RecordedMlp rec = record_mlp(tape, m, in, true);
  tape.finalize(rec.output);
  const Vec g = flatten_gradients(tape.backward(w), rec, m);
  const Mat fd = central_difference(
      [&](const Mat& p) {
        Mlp q = m;
        q.unflatten(p.col(0));
        return (forward(q, x).output.array() * w.array()).sum();
      },
      m.flatten());
  return max_relative_error(g, fd);
}

inline LinearAutoencoder make_ae(std::uint64_t seed, int data_dim = 8, int latent_dim = 4) {
  Rng rng(mix_seed(seed, 3));
  return LinearAutoencoder(LinearManifold::random(data_dim, latent_dim, seed, standard_normal(data_dim, rng)));
}

inline std::shared_ptr<const ScoreNetwork> small_net(int dim, std::uint64_t seed) {
  ScoreNetworkSpec spec;
  spec.state_dim = dim;
  spec.hidden = {6, 5};
  spec.activation = Activation::smooth_relu;
  spec.seed = seed;
  return std::make_shared<const ScoreNetwork>(ScoreNetwork::create(spec, NoiseSchedule::linear(1000, 1e-4, 0.02)));
}

inline SamplerRunConfig short_run(std::uint64_t seed) {
  SamplerRunConfig run;
  run.steps = 3;
  run.t_high = 60;
  run.eta = 0.3;
  run.seed = seed;
  return run;
}

/// 0 identity, 1 linear, 2 mlp, 3 scorenet.
inline PerceptualExtractor extractor_of(int kind, const LinearAutoencoder& ae, std::uint64_t seed) {
  Rng rng(seed);
  switch (kind) {
    case 0: return PerceptualExtractor::identity();
    case 1: return PerceptualExtractor::linear(standard_normal(5, ae.data_dim(), rng));
    case 2: return PerceptualExtractor::mlp(
        Mlp::random({ae.data_dim(), 7, 5}, Activation::tanh, Activation::identity, seed));
    default: return PerceptualExtractor::scorenet(small_net(ae.latent_dim(), seed), short_run(seed));
  }
}


inline double g1_gradient_error(std::uint64_t seed) {
  const LinearAutoencoder ae = make_ae(seed);
  Rng rng(seed);
  const Mat z = standard_normal(4, 1, rng);
  const Mat y = standard_normal(8, 1, rng);
  const Mat fd = central_difference([&](const Mat& v) { return g1_value_grad(v, y, ae).value[0]; }, z);
  return max_relative_error(g1_value_grad(z, y, ae).grad, fd);
}

/// Odd seeds use the mean reduction.
inline double g2_gradient_error(int kind, std::uint64_t seed) {
  const LinearAutoencoder ae = make_ae(seed);
  PerceptualExtractor psi = extractor_of(kind, ae, seed + 1);
  if (seed % 2 == 1) psi.set_reduction(LossReduction::mean);
  Rng rng(mix_seed(seed, 9));
  const Mat z = standard_normal(4, 1, rng);
  const Mat y = standard_normal(8, 1, rng);
  const TargetCache cache = precompute_targets(psi, y, ae, {seed});
  const LossGrad g = g2_value_grad(z, psi, cache, ae);
  const Mat fd =
      central_difference([&](const Mat& v) { return g2_value_grad(v, psi, cache, ae, false).value[0]; }, z);
  return max_relative_error(g.grad, fd);
}

}  // namespace pmg::testing
