#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "pmg/bench.hpp"
#include "pmg/lgdm.hpp"
#include "pmg/quality.hpp"
#include "pmg/random.hpp"
#include "testing.hpp"

using namespace pmg;
using pmg::testing::bitwise_equal;

namespace {

const NoiseSchedule& schedule() {
  static const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  return s;
}

std::shared_ptr<const ScoreNetwork> random_net(int dim, int layers) {
  ScoreNetworkSpec spec;
  spec.state_dim = dim;
  spec.hidden = std::vector<int>(static_cast<std::size_t>(layers), 8);
  spec.activation = Activation::smooth_relu;
  spec.seed = 17;
  return std::make_shared<const ScoreNetwork>(ScoreNetwork::create(spec, schedule()));
}

std::vector<std::uint64_t> ids(int n) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint64_t>(i));
  return out;
}

class NanAt : public NoisePredictor {
 public:
  NanAt(int dim, int bad_t) : dim_(dim), bad_t_(bad_t) {}
  int state_dim() const override { return dim_; }
  NoisePrediction predict(const Mat& x, int t) const override {
    return {t == bad_t_ ? Mat::Constant(x.rows(), x.cols(), std::nan("")) : Mat::Zero(x.rows(), x.cols()), {}};
  }

 private:
  int dim_;
  int bad_t_;
};

}  // namespace

TEST_CASE("lgdm_run: tap counts") {
  const Testbed tb = build_testbed(TestbedSpec{});
  Rng rng(1);
  const Mat y = tb.ae.decode(standard_normal(16, 3, rng));
  SamplerRunConfig run;
  run.steps = 1;
  const auto net1 = random_net(16, 4);
  const Trajectory one = lgdm_run(y, ids(3), *net1, schedule(), tb.ae, run, {}, PerceptualExtractor::identity());
  REQUIRE(one.steps.size() == 1);
  CHECK(one.steps[0].taps.size() == 4);

  run.steps = 10;
  const Trajectory ten = lgdm_run(y, ids(3), *net1, schedule(), tb.ae, run, {}, PerceptualExtractor::identity());
  std::vector<TapEntry> entries;
  for (const TrajectoryStep& st : ten.steps)
    for (const auto& [l, v] : st.taps) entries.push_back({st.t, l, v.col(0)});
  CHECK(aggregate(entries, Pooling::concat).entries.size() == 40);
  for (std::size_t i = 1; i < ten.steps.size(); ++i) CHECK(ten.steps[i].t < ten.steps[i - 1].t);
}

TEST_CASE("lgdm_run: zero guidance equals plain DDIM bitwise") {
  const Testbed tb = build_testbed(TestbedSpec{});
  const auto net = random_net(16, 2);
  Rng rng(2);
  const Mat y = standard_normal(32, 5, rng);
  for (double eta : {0.0, 1.0}) {
    SamplerRunConfig run;
    run.eta = eta;
    run.seed = 4;
    GuidanceConfig off;
    off.zeta1 = 0.0;
    off.zeta2 = 0.0;
    const Trajectory g = lgdm_run(y, ids(5), *net, schedule(), tb.ae, run, off, PerceptualExtractor::identity());
    const UnguidedPass p = unguided_pass(*net, schedule(), tb.ae.encode(y), run,
                                         make_run_noise(run.seed, ids(5), 16, run.steps));
    REQUIRE(g.steps.size() == p.states.size());
    for (std::size_t i = 0; i < p.states.size(); ++i) CHECK(bitwise_equal(g.steps[i].z_t, p.states[i]));
    CHECK(bitwise_equal(g.final_state, p.final_state));
  }
}

TEST_CASE("lgdm_run: chunking changes results only at rounding level") {
  // The reverse-mode products see different batch widths, so bitwise equality
  // across chunk sizes is not expected; unguided runs are exact.
  const Testbed tb = build_testbed(TestbedSpec{});
  const auto net = random_net(16, 2);
  Rng rng(3);
  const Mat y = standard_normal(32, 7, rng);
  PerceptualExtractor psi = PerceptualExtractor::scorenet(net, SamplerRunConfig{2, 0, 50, 0.0, 9, true});
  psi.set_reduction(LossReduction::mean);
  SamplerRunConfig run;
  run.steps = 4;
  const Trajectory a = lgdm_run(y, ids(7), *net, schedule(), tb.ae, run, {}, psi, {7, true});
  const Trajectory b = lgdm_run(y, ids(7), *net, schedule(), tb.ae, run, {}, psi, {3, true});
  CHECK((a.final_state - b.final_state).norm() <= 1e-12 * a.final_state.norm());
  const Mat ha = hyperfeature_matrix(a, Pooling::concat);
  const Mat hb = hyperfeature_matrix(b, Pooling::concat);
  CHECK((ha - hb).norm() <= 1e-12 * ha.norm());

  GuidanceConfig data_only;
  data_only.zeta2 = 0.0;
  const Trajectory c = lgdm_run(y, ids(7), *net, schedule(), tb.ae, run, data_only, psi, {7, true});
  const Trajectory d = lgdm_run(y, ids(7), *net, schedule(), tb.ae, run, data_only, psi, {2, true});
  CHECK(bitwise_equal(c.final_state, d.final_state));
}

TEST_CASE("lgdm_run: strict mode starts from the clean code") {
  const Testbed tb = build_testbed(TestbedSpec{});
  const auto net = random_net(16, 2);
  Rng rng(4);
  const Mat y = standard_normal(32, 2, rng);
  SamplerRunConfig run;
  run.renoise = false;
  const Trajectory t = lgdm_run(y, ids(2), *net, schedule(), tb.ae, run, {}, PerceptualExtractor::none());
  CHECK(bitwise_equal(t.steps.front().z_t, tb.ae.encode(y)));
  run.renoise = true;
  const Trajectory u = lgdm_run(y, ids(2), *net, schedule(), tb.ae, run, {}, PerceptualExtractor::none());
  CHECK_FALSE(bitwise_equal(u.steps.front().z_t, tb.ae.encode(y)));
}

TEST_CASE("lgdm_run: non-finite state names the step") {
  const Testbed tb = build_testbed(TestbedSpec{});
  Rng rng(5);
  const Mat y = standard_normal(32, 2, rng);
  GuidanceConfig off;
  off.zeta1 = 0.0;
  off.zeta2 = 0.0;
  try {
    lgdm_run(y, ids(2), NanAt(16, 70), schedule(), tb.ae, SamplerRunConfig{}, off, PerceptualExtractor::none());
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("t=70") != std::string::npos);
  }
  CHECK_THROWS_AS(lgdm_run(y, ids(1), NanAt(16, 0), schedule(), tb.ae, SamplerRunConfig{}, off,
                           PerceptualExtractor::none()),
                  DomainError);
}

TEST_CASE("lgdm_run: data-consistency loss falls along the guided trajectory") {
  const Testbed tb = build_testbed(TestbedSpec{});
  const AnalyticNoisePredictor p(tb.manifold, tb.latent, schedule());
  const int n = 200;
  const Mat y = tb.ae.decode(sample_manifold_data(tb.manifold, tb.latent, n, 8));
  const PerceptualExtractor psi =
      PerceptualExtractor::mlp(Mlp::random({32, 16, 8}, Activation::tanh, Activation::identity, 2));
  const Trajectory t = lgdm_run(y, ids(n), p, schedule(), tb.ae, SamplerRunConfig{}, GuidanceConfig{}, psi);
  std::vector<double> g1;
  for (const TrajectoryStep& st : t.steps) g1.push_back(st.g1.mean());
  const double first = (g1[0] + g1[1] + g1[2]) / 3.0;
  const double last = (g1[7] + g1[8] + g1[9]) / 3.0;
  CHECK(last <= first);
}

TEST_CASE("lgdm_run: guided states stay in the noisy manifold shell") {
  const Testbed tb = build_testbed(TestbedSpec{});
  const NoiseSchedule& s = schedule();
  const AnalyticNoisePredictor p(tb.manifold, tb.latent, s);
  const int n = 1000;
  const Mat y = tb.ae.decode(sample_manifold_data(tb.manifold, tb.latent, n, 9));
  const PerceptualExtractor psi = PerceptualExtractor::identity();
  SamplerRunConfig run;
  run.eta = 0.5;
  run.seed = 3;
  const Trajectory traj = lgdm_run(y, ids(n), p, s, tb.ae, run, GuidanceConfig{}, psi);
  const int L = tb.manifold.ambient_dim(), k = tb.manifold.intrinsic_dim();
  int inside = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    bool ok = true;
    for (const TrajectoryStep& st : traj.steps) {
      const double ab = s.alpha_bar(st.t);
      const double r = concentration_radius(ab, L, k);
      const double d = distance_to_manifold(st.z_t.col(j), tb.manifold, std::sqrt(ab));
      ok = ok && std::abs(d - r) <= epsilon_band(0.01, ab, L, k) * r;
    }
    inside += ok ? 1 : 0;
  }
  CHECK(inside >= 990);
}

TEST_CASE("trajectory writers") {
  const Testbed tb = build_testbed(TestbedSpec{});
  const auto net = random_net(16, 1);
  Rng rng(6);
  const Mat y = standard_normal(32, 2, rng);
  SamplerRunConfig run;
  run.steps = 3;
  const Trajectory t = lgdm_run(y, ids(2), *net, schedule(), tb.ae, run, {}, PerceptualExtractor::identity());
  std::ostringstream csv;
  write_trajectory_csv(csv, t);
  const std::string text = csv.str();
  CHECK(text.rfind("item,t,G1,G2,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 2 * 3);

  std::ostringstream bin;
  write_trajectory_states(bin, t);
  const std::string b = bin.str();
  CHECK(b.size() == 12 + 8 * 3 * 16 * 2);
  CHECK(static_cast<unsigned char>(b[0]) == 3);
  CHECK(static_cast<unsigned char>(b[4]) == 16);
  CHECK(static_cast<unsigned char>(b[8]) == 2);
  double first = 0.0;
  std::memcpy(&first, b.data() + 12, 8);
  CHECK(first == t.steps[0].z_t(0, 0));

  const Trajectory lean = lgdm_run(y, ids(2), *net, schedule(), tb.ae, run, {}, PerceptualExtractor::identity(),
                                   {128, false});
  std::ostringstream none;
  CHECK_THROWS_AS(write_trajectory_states(none, lean), DomainError);
}
