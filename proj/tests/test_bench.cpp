#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "pmg/bench.hpp"
#include "pmg/config.hpp"
#include "pmg/random.hpp"
#include "testing.hpp"

using namespace pmg;
using pmg::testing::bitwise_equal;

namespace {

const Testbed& small_testbed() {
  static const Testbed tb = build_testbed(TestbedSpec{});
  return tb;
}

std::shared_ptr<const ScoreNetwork> small_net(const Testbed& tb) {
  ScoreNetworkSpec spec;
  spec.state_dim = tb.ae.latent_dim();
  spec.hidden = {8, 8};
  spec.activation = Activation::smooth_relu;
  spec.seed = 4;
  return std::make_shared<const ScoreNetwork>(ScoreNetwork::create(spec, NoiseSchedule::linear(1000, 1e-4, 0.02)));
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("testbed: deterministic and consistent") {
  const Testbed a = build_testbed(TestbedSpec{});
  const Testbed b = build_testbed(TestbedSpec{});
  CHECK(bitwise_equal(a.ae.manifold().basis(), b.ae.manifold().basis()));
  CHECK(a.ae.data_dim() == 32);
  CHECK(a.manifold.intrinsic_dim() == 4);
  CHECK(a.ae.negative_offset().norm() == doctest::Approx(6.0));
  const Mat z = testbed_training_data(a, 50, 1);
  CHECK(z.rows() == 16);
  for (Eigen::Index j = 0; j < z.cols(); ++j) CHECK(distance_to_manifold(z.col(j), a.manifold, 1.0) <= 1e-10);
  CHECK(bitwise_equal(z, testbed_training_data(a, 50, 1)));
}

TEST_CASE("benchmark: layout and true quality") {
  CHECK(true_quality(0, 9) == 100.0);
  CHECK(true_quality(9, 9) == doctest::Approx(20.0).epsilon(1e-12));
  BenchmarkSpec spec;
  spec.contents = 12;
  const Benchmark b = generate_benchmark(spec, small_testbed());
  CHECK(b.items.size() == 12u * (1 + 3 * 3));
  CHECK(b.measurements.cols() == static_cast<Eigen::Index>(b.items.size()));
  const Benchmark again = generate_benchmark(spec, small_testbed());
  CHECK(bitwise_equal(b.measurements, again.measurements));
  for (std::size_t i = 0; i < b.items.size(); ++i) {
    const BenchItem& it = b.items[i];
    CHECK(it.id == i);
    if (it.family < 0) {
      CHECK(it.quality == 100.0);
      CHECK(bitwise_equal(Vec(b.measurements.col(i)), Vec(b.references.col(i))));
    } else {
      CHECK(it.level >= 1);
      CHECK(it.level <= spec.levels);
      CHECK(it.quality < 100.0);
    }
  }
}

TEST_CASE("benchmark: quality falls as severity rises within a family") {
  BenchmarkSpec spec;
  spec.contents = 9;
  const Benchmark b = generate_benchmark(spec, small_testbed());
  for (int f = 0; f < 3; ++f) {
    std::map<double, double> by_severity;
    for (const BenchItem& it : b.items)
      if (it.family == f) by_severity[it.severity] = it.quality;
    double last = 101.0;
    for (const auto& [s, q] : by_severity) {
      CHECK(q < last);
      last = q;
    }
  }
}

TEST_CASE("benchmark: additive noise has the configured energy") {
  BenchmarkSpec spec;
  spec.contents = 1000;
  spec.families = {DistortionKind::additive_noise};
  spec.items_per_family = 9;
  spec.control = false;
  const Benchmark b = generate_benchmark(spec, small_testbed());
  CHECK(b.items.size() == 9000u);
  double sum = 0.0, sum_sq = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < b.items.size(); ++i) {
    const Vec unit = (b.measurements.col(i) - b.references.col(i)) / b.items[i].severity;
    CHECK(unit.squaredNorm() == doctest::Approx(32.0).epsilon(1e-10));
    sum += unit.sum();
    sum_sq += unit.squaredNorm();
    n += unit.size();
  }
  const double mean = sum / n;
  CHECK(std::abs(sum_sq / n - mean * mean - 1.0) <= 0.05);
}

TEST_CASE("splits: proportions, disjoint contents, determinism") {
  BenchmarkSpec spec;
  spec.contents = 100;
  const Benchmark b = generate_benchmark(spec, small_testbed());
  ProtocolSpec p;
  const std::vector<Split> splits = make_splits(b.items, p);
  CHECK(splits.size() == 10u);
  for (const Split& s : splits) {
    std::set<int> tr, va, te;
    for (auto i : s.train) tr.insert(b.items[i].content);
    for (auto i : s.val) va.insert(b.items[i].content);
    for (auto i : s.test) te.insert(b.items[i].content);
    CHECK(tr.size() == 70u);
    CHECK(va.size() == 10u);
    CHECK(te.size() == 20u);
    CHECK(s.train.size() + s.val.size() + s.test.size() == b.items.size());
    for (int c : te) CHECK((tr.count(c) == 0 && va.count(c) == 0));
    for (int c : va) CHECK(tr.count(c) == 0);
  }
  CHECK(splits[0].test != splits[1].test);
  const std::vector<Split> again = make_splits(b.items, p);
  for (std::size_t r = 0; r < splits.size(); ++r) CHECK(splits[r].test == again[r].test);
  p.train_fraction = 0.95;
  CHECK_THROWS_AS(make_splits(b.items, p), DomainError);
}

TEST_CASE("median against a sorted copy") {
  CHECK(median({3.0}) == 3.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK(median({5.0, -1.0, 2.0}) == 2.0);
  CHECK_THROWS_AS(median({}), DomainError);
}

TEST_CASE("evaluate_features: deterministic and recovers a linear signal") {
  BenchmarkSpec spec;
  spec.contents = 40;
  const Benchmark b = generate_benchmark(spec, small_testbed());
  const Vec q = b.quality();
  Rng rng(2);
  Mat f = standard_normal(static_cast<Eigen::Index>(q.size()), 6, rng);
  f.col(0) = q + 0.1 * f.col(0);
  ProtocolSpec p;
  p.repeats = 4;
  const auto splits = make_splits(b.items, p);
  HeadConfig head;
  const EvalReport r = evaluate_features(f, q, splits, p, head);
  const EvalReport again = evaluate_features(f, q, splits, p, head);
  CHECK(r.repeats.size() == 4u);
  CHECK(r.median_srcc > 0.95);
  CHECK(r.median_srcc == again.median_srcc);
  CHECK(bitwise_equal(r.predicted, again.predicted));
  std::vector<double> s;
  for (const RepeatResult& rr : r.repeats) s.push_back(rr.test.srcc.value_or(0.0));
  std::sort(s.begin(), s.end());
  CHECK(r.median_srcc == 0.5 * (s[1] + s[2]));
}

TEST_CASE("experiment: small run end to end and csv formats") {
  const Testbed& tb = small_testbed();
  BenchmarkSpec spec;
  spec.contents = 20;
  const Benchmark b = generate_benchmark(spec, tb);
  PipelineConfig cfg;
  cfg.sampler.steps = 2;
  cfg.psi.steps = 2;
  cfg.protocol.repeats = 2;
  const auto net = small_net(tb);
  const ExperimentResult r = run_experiment(b, tb, net, cfg);
  CHECK(r.features.rows() == static_cast<Eigen::Index>(b.items.size()));
  CHECK(r.hyper.repeats.size() == 2u);
  const ExperimentResult again = run_experiment(b, tb, net, cfg);
  CHECK(bitwise_equal(r.features, again.features));

  std::ostringstream items;
  write_items_csv(items, b, r.hyper.predicted, "abc", 7);
  const auto il = lines_of(items.str());
  CHECK(il.size() == b.items.size() + 4);
  CHECK(il[0] == "# config_hash=abc");
  CHECK(il[2] == "# families are synthetic stand-ins");
  CHECK(il[3] == "item,content,family,level,true_score,predicted_score");
  for (std::size_t i = 3; i < il.size(); ++i) CHECK(std::count(il[i].begin(), il[i].end(), ',') == 5);

  const AblationTable steps = ablate_steps(b, tb, net, cfg, {1, 2});
  CHECK(steps.rows.size() == 2u);
  const AblationTable buckets = ablate_time_range(b, tb, net, cfg, {{0, 100}, {100, 200}});
  const AblationTable layers = ablate_layers(b, tb, net, cfg);
  CHECK(layers.rows.size() == 3u);
  CHECK(layers.notes.back().second == "true");
  for (const AblationTable* t : {&steps, &buckets, &layers}) {
    std::ostringstream csv;
    write_ablation_csv(csv, *t, "abc", 7);
    const auto lines = lines_of(csv.str());
    std::size_t header = 0;
    while (lines[header][0] == '#') ++header;
    CHECK(lines[header] == "label," + t->value_name + ",plcc,srcc,wall_ms");
    CHECK(lines.size() == header + 1 + t->rows.size());
    for (std::size_t i = header; i < lines.size(); ++i)
      CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 4);
  }
}

TEST_CASE("config: parse, reject, round trip, hash") {
  const RunConfig d = default_run_config();
  const RunConfig back = parse_run_config(to_json(d));
  CHECK(to_json(back) == to_json(d));
  CHECK(config_hash(back) == config_hash(d));
  CHECK(config_hash(d).size() == 16u);
  RunConfig moved = d;
  moved.output = "elsewhere";
  CHECK(config_hash(moved) == config_hash(d));
  RunConfig changed = d;
  changed.pipeline.guidance.zeta2 = 0.3;
  CHECK(config_hash(changed) != config_hash(d));
  CHECK(parse_run_config(nlohmann::json::object()).pipeline.sampler.steps == d.pipeline.sampler.steps);
  nlohmann::json bad = to_json(d);
  bad["pipeline"]["guidance"]["zeta3"] = 1.0;
  CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"nonsense", 1}}), ConfigError);
  nlohmann::json wrong = to_json(d);
  wrong["pipeline"]["sampler"]["steps"] = "ten";
  CHECK_THROWS_AS(parse_run_config(wrong), ConfigError);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("config: master seed fans out") {
  RunConfig a = default_run_config();
  RunConfig b = a;
  apply_seed(a, 1);
  apply_seed(b, 2);
  CHECK(a.pipeline.sampler.seed != b.pipeline.sampler.seed);
  CHECK(a.bench.seed != b.bench.seed);
  CHECK(a.testbed.seed == b.testbed.seed);
  CHECK(a.score.train.seed == b.score.train.seed);
  RunConfig c = default_run_config();
  apply_seed(c, 1);
  CHECK(to_json(a) == to_json(c));
}
