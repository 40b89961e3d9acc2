#include <cmath>
#include <vector>

#include <doctest.h>

#include "pmg/manifold.hpp"
#include "pmg/random.hpp"
#include "pmg/sampler.hpp"
#include "pmg/scoremodel.hpp"
#include "testing.hpp"

using namespace pmg;
using pmg::testing::bitwise_equal;

namespace {

const NoiseSchedule& default_schedule() {
  static const NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  return s;
}

// eps = sqrt(1 - ab) x, the optimal noise prediction for N(0, I) data.
class UnitGaussianPredictor : public NoisePredictor {
 public:
  explicit UnitGaussianPredictor(int dim) : dim_(dim) {}
  int state_dim() const override { return dim_; }
  NoisePrediction predict(const Mat& x, int t) const override {
    return {std::sqrt(1.0 - default_schedule().alpha_bar(t)) * x, {}};
  }

 private:
  int dim_;
};

}  // namespace

TEST_CASE("select_timesteps: evenly spaced and strictly decreasing") {
  SamplerRunConfig cfg;
  const std::vector<int> ts = select_timesteps(cfg, 1000);
  CHECK(ts == std::vector<int>{100, 90, 80, 70, 60, 50, 40, 30, 20, 10});
  cfg.steps = 1;
  CHECK(select_timesteps(cfg, 1000) == std::vector<int>{100});
  cfg.steps = 3;
  cfg.t_low = 200;
  cfg.t_high = 300;
  const std::vector<int> b = select_timesteps(cfg, 1000);
  CHECK(b == std::vector<int>{300, 266, 233});
  cfg.steps = 101;
  CHECK_THROWS_AS(select_timesteps(cfg, 1000), DomainError);
  cfg.steps = 5;
  cfg.t_high = 1001;
  CHECK_THROWS_AS(select_timesteps(cfg, 1000), DomainError);
}

TEST_CASE("make_run_noise: per item streams do not depend on the batch") {
  const RunNoise a = make_run_noise(5, {3, 8, 1}, 4, 2);
  const RunNoise b = make_run_noise(5, {8}, 4, 2);
  CHECK(a.start.col(1) == b.start.col(0));
  CHECK(a.per_step[1].col(1) == b.per_step[1].col(0));
  CHECK_FALSE(a.start.col(0) == a.start.col(1));
}

TEST_CASE("forward_diffuse: boundaries") {
  const NoiseSchedule& s = default_schedule();
  Rng rng(1);
  const Mat x0 = standard_normal(3, 4, rng);
  const Mat n = standard_normal(3, 4, rng);
  CHECK(forward_diffuse(x0, s, 0, n) == x0);
  CHECK((forward_diffuse(x0, s, 500, Mat::Zero(3, 4)) - std::sqrt(s.alpha_bar(500)) * x0).norm() <= 1e-15);
  CHECK_THROWS_AS(forward_diffuse(x0, s, 5, Mat::Zero(2, 4)), DomainError);
}

TEST_CASE("forward_diffuse: Monte-Carlo moments") {
  const NoiseSchedule& s = default_schedule();
  Vec x0(2);
  x0 << 5.0, -3.0;
  const int n = 100000;
  Rng rng(7);
  for (int t : {50, 200, 400}) {
    const Mat x = forward_diffuse(x0.replicate(1, n), s, t, standard_normal(2, n, rng));
    const Vec mean = x.rowwise().mean();
    const Mat c = x.colwise() - mean;
    const Vec var = c.rowwise().squaredNorm() / (n - 1);
    const double ab = s.alpha_bar(t);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(mean[i] - std::sqrt(ab) * x0[i]) <= 0.02 * std::sqrt(ab) * std::abs(x0[i]));
      CHECK(std::abs(var[i] - (1 - ab)) <= 0.02 * (1 - ab));
    }
  }
}

TEST_CASE("tweedie: exact noise recovers the clean sample") {
  const NoiseSchedule& s = default_schedule();
  Rng rng(2);
  const Mat x0 = standard_normal(5, 10, rng);
  const Mat n = standard_normal(5, 10, rng);
  for (int t : {1, 10, 100, 999}) {
    const Mat xt = forward_diffuse(x0, s, t, n);
    const double tol = 1e-13 / std::sqrt(s.alpha_bar(t));
    CHECK((tweedie_estimate(xt, n, s, t) - x0).cwiseAbs().maxCoeff() <= tol);
  }
}

TEST_CASE("tweedie: unit Gaussian posterior mean") {
  const NoiseSchedule& s = default_schedule();
  const UnitGaussianPredictor p(3);
  Rng rng(3);
  const Mat xt = standard_normal(3, 20, rng);
  for (int t : {1, 100, 700}) {
    const Mat est = tweedie_estimate(xt, p.predict(xt, t).eps, s, t);
    CHECK((est - std::sqrt(s.alpha_bar(t)) * xt).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("tweedie: noise form and score form agree through score_from_noise") {
  const NoiseSchedule& s = default_schedule();
  Rng rng(4);
  for (int t : {1, 7, 100, 1000}) {
    const Mat x = standard_normal(4, 6, rng);
    const Mat eps = standard_normal(4, 6, rng);
    const Mat a = tweedie_estimate(x, eps, s, t);
    const Mat b = tweedie_from_score(x, score_from_noise(eps, s, t), s, t);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("ddim_step: determinism and final-step collapse") {
  const NoiseSchedule& s = default_schedule();
  Rng rng(5);
  const Mat z0 = standard_normal(4, 3, rng);
  const Mat eps = standard_normal(4, 3, rng);
  const Mat noise = standard_normal(4, 3, rng);
  CHECK(bitwise_equal(ddim_step(z0, eps, s, 50, 40, 0.0, noise), ddim_step(z0, eps, s, 50, 40, 0.0, noise)));
  CHECK(ddim_step(z0, eps, s, 1, 0, 0.0, noise) == z0);
  CHECK(ddim_step(z0, eps, s, 10, 0, 1.0, noise) == z0);
  CHECK_THROWS_AS(ddim_step(z0, eps, s, 10, 10, 0.0, noise), DomainError);
  CHECK_THROWS_AS(ddim_step(z0, eps, s, 10, 5, 0.0, Mat::Zero(3, 3)), DomainError);
}

TEST_CASE("ddim: full chain with the analytic score reproduces the data distribution") {
  const NoiseSchedule& s = default_schedule();
  Rng rng(6);
  const LinearManifold m = LinearManifold::random(4, 2, 3, standard_normal(4, rng));
  Mat cov(2, 2);
  cov << 1.0, 0.3, 0.3, 0.5;
  Vec mean(2);
  mean << 0.5, -1.0;
  const LatentGaussian g(mean, cov);
  const AnalyticNoisePredictor p(m, g, s);

  const int n = 10000;
  std::vector<std::uint64_t> ids(n);
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
  SamplerRunConfig cfg;
  cfg.steps = 1000;
  cfg.t_low = 0;
  cfg.t_high = 1000;
  const RunNoise noise = make_run_noise(9, ids, 4, cfg.steps);
  const UnguidedPass pass = unguided_pass(p, s, Mat::Zero(4, n), cfg, noise);

  const Mat& x = pass.final_state;
  const Vec emp_mean = x.rowwise().mean();
  const Mat c = x.colwise() - emp_mean;
  const Mat emp_cov = c * c.transpose() / (n - 1);
  const Vec true_mean = m.basis() * mean + m.offset();
  const Mat true_cov = m.basis() * cov * m.basis().transpose();
  const double cov_scale = true_cov.cwiseAbs().maxCoeff();
  CHECK((emp_mean - true_mean).cwiseAbs().maxCoeff() <= 0.03 * std::max(1.0, true_mean.cwiseAbs().maxCoeff()));
  CHECK((emp_cov - true_cov).cwiseAbs().maxCoeff() <= 0.03 * cov_scale);
}

TEST_CASE("pmg_update: zero weights are the identity") {
  Rng rng(8);
  const Mat z = standard_normal(3, 5, rng);
  const Mat y = standard_normal(3, 5, rng);
  const GuidanceTerm quad = [&](const Mat& a, bool) {
    return LossGrad{(a - y).colwise().squaredNorm().transpose(), 2.0 * (a - y)};
  };
  const PmgUpdate u = pmg_update(z, quad, quad, 0.0, 0.0);
  CHECK(u.z0_prime == z);
  CHECK(u.z0_dprime == z);
}

TEST_CASE("pmg_update: half step on the quadratic lands on the target") {
  Rng rng(9);
  const Mat z = standard_normal(2, 4, rng);
  Mat y(2, 4);
  y.setZero();
  y.row(0).setConstant(1.0);
  y.row(1).setConstant(2.0);
  y += z;  // z - y = (-1, -2) in every column
  const GuidanceTerm quad = [&](const Mat& a, bool) {
    return LossGrad{(a - y).colwise().squaredNorm().transpose(), 2.0 * (a - y)};
  };
  const GuidanceTerm none = [](const Mat& a, bool) { return LossGrad{Vec::Zero(a.cols()), Mat::Zero(a.rows(), a.cols())}; };
  const PmgUpdate u = pmg_update(z, quad, none, 0.5, 0.0);
  CHECK((u.z0_prime - y).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(u.g1[0] == doctest::Approx(5.0));
  CHECK(u.grad1(0, 0) == doctest::Approx(-2.0));
  CHECK(u.grad1(1, 0) == doctest::Approx(-4.0));
}

TEST_CASE("pmg_update: gradient evaluation point") {
  const Mat z = Mat::Constant(1, 1, 1.0);
  const GuidanceTerm g1 = [](const Mat& a, bool) { return LossGrad{a.colwise().squaredNorm().transpose(), 2.0 * a}; };
  const GuidanceTerm g2 = [](const Mat& a, bool) {
    return LossGrad{(a.array() - 3.0).square().colwise().sum().transpose(), 2.0 * (a.array() - 3.0).matrix()};
  };
  const PmgUpdate at_hat = pmg_update(z, g1, g2, 0.25, 0.1, G2Point::tweedie);
  CHECK(at_hat.z0_prime(0, 0) == doctest::Approx(0.5));
  CHECK(at_hat.z0_dprime(0, 0) == doctest::Approx(0.5 + 0.1 * 4.0));
  const PmgUpdate after = pmg_update(z, g1, g2, 0.25, 0.1, G2Point::after_data_step);
  CHECK(after.z0_dprime(0, 0) == doctest::Approx(0.5 + 0.1 * 5.0));
}

TEST_CASE("pmg_update: non-finite gradients abort") {
  const Mat z = Mat::Ones(2, 1);
  const GuidanceTerm bad = [](const Mat& a, bool) {
    return LossGrad{Vec::Zero(a.cols()), Mat::Constant(a.rows(), a.cols(), std::nan(""))};
  };
  const GuidanceTerm ok = [](const Mat& a, bool) { return LossGrad{Vec::Zero(a.cols()), Mat::Zero(a.rows(), a.cols())}; };
  CHECK_THROWS_AS(pmg_update(z, bad, ok, 1.0, 0.0), NumericalError);
  CHECK_THROWS_AS(pmg_update(z, ok, bad, 0.0, 1.0), NumericalError);
  CHECK_NOTHROW(pmg_update(z, bad, ok, 0.0, 0.0));
}

TEST_CASE("unguided_pass: tape recording matches the plain pass bitwise") {
  const NoiseSchedule& s = default_schedule();
  ScoreNetworkSpec spec;
  spec.state_dim = 3;
  spec.hidden = {8, 8};
  spec.seed = 4;
  const ScoreNetwork net = ScoreNetwork::create(spec, s);
  Rng rng(10);
  const Mat z = standard_normal(3, 4, rng);
  SamplerRunConfig cfg;
  cfg.steps = 4;
  cfg.eta = 0.5;
  const RunNoise noise = make_run_noise(1, {0, 1, 2, 3}, 3, cfg.steps);
  const UnguidedPass pass = unguided_pass(net, s, z, cfg, noise);
  Tape tape;
  const RecordedPass rec = record_unguided_pass(tape, net, tape.leaf(z), cfg, noise);
  CHECK(bitwise_equal(tape.value(rec.final_state), pass.final_state));
  REQUIRE(rec.taps.size() == pass.taps.size());
  for (std::size_t i = 0; i < rec.taps.size(); ++i)
    for (const auto& [layer, id] : rec.taps[i]) CHECK(bitwise_equal(tape.value(id), pass.taps[i].at(layer)));
}
