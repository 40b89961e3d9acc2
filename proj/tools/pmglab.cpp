// pmglab: train the score network, generate the synthetic benchmark, run the
// quality pipeline and its ablations.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pmg/bench.hpp"
#include "pmg/config.hpp"
#include "pmg/quality.hpp"
#include "pmg/scoremodel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool strict = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run config JSON");
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
  cmd->add_option("--seed", c.seed, "master seed for sampling, splits and benchmark");
  cmd->add_flag("--strict-alg1", c.strict, "start guided sampling from the clean code (no re-noising)");
}

pmg::RunConfig resolve(const Common& c) {
  pmg::RunConfig cfg = c.config.empty() ? pmg::default_run_config() : pmg::load_run_config(c.config);
  if (!c.out.empty()) cfg.output = c.out;
  if (c.seed) pmg::apply_seed(cfg, *c.seed);
  if (c.strict) cfg.pipeline.sampler.renoise = false;
  fs::create_directories(cfg.output);
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw pmg::ConfigError("cannot write " + p.string());
  return out;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << "\n"; }

std::shared_ptr<const pmg::ScoreNetwork> load_net(const pmg::RunConfig& cfg) {
  if (!fs::exists(cfg.score.checkpoint))
    throw pmg::ConfigError("score checkpoint " + cfg.score.checkpoint.string() + " not found; run train-score first");
  auto net = std::make_shared<const pmg::ScoreNetwork>(pmg::load_score_network(cfg.score.checkpoint));
  if (net->state_dim() != cfg.testbed.latent_dim)
    throw pmg::ConfigError("score checkpoint state dimension does not match the testbed latent dimension");
  return net;
}

json eval_json(const pmg::EvalReport& r) {
  json reps = json::array();
  for (const auto& rr : r.repeats) {
    reps.push_back({{"lambda", rr.lambda},
                    {"effective_lambda", rr.effective_lambda},
                    {"val_srcc", rr.val_srcc},
                    {"test_plcc", rr.test.plcc ? json(*rr.test.plcc) : json(nullptr)},
                    {"test_srcc", rr.test.srcc ? json(*rr.test.srcc) : json(nullptr)},
                    {"n_test", rr.test.n}});
  }
  return {{"median_plcc", r.median_plcc}, {"median_srcc", r.median_srcc}, {"repeats", reps}};
}

int train_score(const Common& c) {
  const pmg::RunConfig cfg = resolve(c);
  const pmg::Testbed tb = pmg::build_testbed(cfg.testbed);
  const pmg::NoiseSchedule s = pmg::NoiseSchedule::linear(cfg.schedule);
  const pmg::Mat data = pmg::testbed_training_data(tb, cfg.score.train_samples, cfg.score.train.seed);
  const auto t0 = std::chrono::steady_clock::now();
  pmg::DsmResult res = pmg::train_dsm(pmg::ScoreNetwork::create(cfg.score.arch, s), data, cfg.score.train);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (cfg.score.checkpoint.has_parent_path()) fs::create_directories(cfg.score.checkpoint.parent_path());
  pmg::save_score_network(cfg.score.checkpoint, res.net, cfg.score.train.seed);

  const std::string hash = pmg::config_hash(cfg);
  std::ofstream curve = open_out(cfg.output / "train_loss.csv");
  curve << "# config_hash=" << hash << "\n# seed=" << cfg.score.train.seed << "\nepoch,loss\n";
  for (std::size_t e = 0; e < res.loss_curve.size(); ++e) curve << e << ',' << res.loss_curve[e] << '\n';
  write_json(cfg.output / "report.json", {{"command", "train-score"},
                                          {"config_hash", hash},
                                          {"checkpoint", cfg.score.checkpoint.string()},
                                          {"final_loss", res.loss_curve.empty() ? 0.0 : res.loss_curve.back()},
                                          {"train_seconds", secs}});
  std::cerr << "trained " << cfg.score.train.epochs << " epochs in " << secs << " s, final loss "
            << (res.loss_curve.empty() ? 0.0 : res.loss_curve.back()) << "\n";
  return 0;
}

int gen_bench(const Common& c) {
  const pmg::RunConfig cfg = resolve(c);
  const pmg::Testbed tb = pmg::build_testbed(cfg.testbed);
  const pmg::Benchmark bench = pmg::generate_benchmark(cfg.bench, tb);
  const std::string hash = pmg::config_hash(cfg);
  std::ofstream out = open_out(cfg.output / "bench.csv");
  out << "# config_hash=" << hash << "\n# seed=" << cfg.bench.seed << "\n# families are synthetic stand-ins\n";
  out << "item,content,family,level,severity,true_score";
  for (Eigen::Index i = 0; i < bench.measurements.rows(); ++i) out << ",y" << i;
  out << '\n' << std::setprecision(17);
  for (std::size_t j = 0; j < bench.items.size(); ++j) {
    const pmg::BenchItem& it = bench.items[j];
    out << it.id << ',' << it.content << ','
        << (it.family < 0 ? "control" : pmg::to_string(cfg.bench.families[static_cast<std::size_t>(it.family)]))
        << ',' << it.level << ',' << it.severity << ',' << it.quality;
    for (Eigen::Index i = 0; i < bench.measurements.rows(); ++i)
      out << ',' << bench.measurements(i, static_cast<Eigen::Index>(j));
    out << '\n';
  }
  json scales = json::array();
  for (std::size_t f = 0; f < cfg.bench.families.size(); ++f)
    scales.push_back({{"family", pmg::to_string(cfg.bench.families[f])}, {"scale", bench.family_scale[f]}});
  write_json(cfg.output / "report.json",
             {{"command", "gen-bench"}, {"config_hash", hash}, {"items", bench.items.size()}, {"family_scale", scales}});
  return 0;
}

int run(const Common& c) {
  const pmg::RunConfig cfg = resolve(c);
  const pmg::Testbed tb = pmg::build_testbed(cfg.testbed);
  const auto net = load_net(cfg);
  const pmg::Benchmark bench = pmg::generate_benchmark(cfg.bench, tb);
  const pmg::ExperimentResult res = pmg::run_experiment(bench, tb, net, cfg.pipeline);
  const std::string hash = pmg::config_hash(cfg);
  std::ofstream items = open_out(cfg.output / "items.csv");
  pmg::write_items_csv(items, bench, res.hyper.predicted, hash, cfg.seed);
  write_json(cfg.output / "report.json", {{"command", "run"},
                                          {"config_hash", hash},
                                          {"seed", cfg.seed},
                                          {"items", bench.items.size()},
                                          {"feature_dim", res.features.cols()},
                                          {"hyperfeatures", eval_json(res.hyper)},
                                          {"baseline", eval_json(res.baseline)},
                                          {"median_wall_ms_per_item", res.median_wall_ms},
                                          {"config", pmg::to_json(cfg)}});
  std::cout << "median SRCC " << res.hyper.median_srcc << " (baseline " << res.baseline.median_srcc
            << "), median PLCC " << res.hyper.median_plcc << "\n";
  return 0;
}

int ablate(const Common& c, const std::string& which) {
  const pmg::RunConfig cfg = resolve(c);
  const pmg::Testbed tb = pmg::build_testbed(cfg.testbed);
  const auto net = load_net(cfg);
  const pmg::Benchmark bench = pmg::generate_benchmark(cfg.bench, tb);
  pmg::AblationTable table;
  if (which == "zeta2") {
    table = pmg::ablate_zeta2(bench, tb, net, cfg.pipeline);
  } else if (which == "steps") {
    table = pmg::ablate_steps(bench, tb, net, cfg.pipeline);
  } else if (which == "time-range") {
    table = pmg::ablate_time_range(bench, tb, net, cfg.pipeline, pmg::default_time_buckets());
  } else {
    table = pmg::ablate_layers(bench, tb, net, cfg.pipeline);
  }
  const std::string hash = pmg::config_hash(cfg);
  std::string stem = which;
  std::replace(stem.begin(), stem.end(), '-', '_');
  std::ofstream out = open_out(cfg.output / ("ablation_" + stem + ".csv"));
  pmg::write_ablation_csv(out, table, hash, cfg.seed);
  pmg::write_ablation_csv(std::cout, table, hash, cfg.seed);
  return 0;
}

// Reads true/predicted columns from an items.csv and correlates them.
int eval_corr(const Common& c, const std::string& path) {
  const pmg::RunConfig cfg = resolve(c);
  const fs::path input = path.empty() ? cfg.output / "items.csv" : fs::path(path);
  std::ifstream in(input);
  if (!in) throw pmg::ConfigError("cannot open " + input.string());
  std::vector<double> truth;
  std::vector<double> pred;
  std::string line;
  int t_col = -1;
  int p_col = -1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (t_col < 0) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "true_score") t_col = static_cast<int>(i);
        if (cells[i] == "predicted_score") p_col = static_cast<int>(i);
      }
      if (t_col < 0 || p_col < 0) throw pmg::ConfigError(input.string() + ": missing score columns");
      continue;
    }
    const double p = std::stod(cells.at(static_cast<std::size_t>(p_col)));
    if (std::isnan(p)) continue;
    truth.push_back(std::stod(cells.at(static_cast<std::size_t>(t_col))));
    pred.push_back(p);
  }
  if (truth.size() < 3) throw pmg::ConfigError(input.string() + ": fewer than 3 scored items");
  const pmg::Vec t = Eigen::Map<const pmg::Vec>(truth.data(), static_cast<Eigen::Index>(truth.size()));
  const pmg::Vec p = Eigen::Map<const pmg::Vec>(pred.data(), static_cast<Eigen::Index>(pred.size()));
  const pmg::CorrelationReport r = pmg::correlate(p, t);
  const json j = {{"command", "eval-corr"},
                  {"input", input.string()},
                  {"n", r.n},
                  {"plcc", r.plcc ? json(*r.plcc) : json(nullptr)},
                  {"srcc", r.srcc ? json(*r.srcc) : json(nullptr)}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perceptual manifold guidance lab"};
  app.require_subcommand(1);
  Common common;
  std::string which;
  std::string items;

  auto* train = app.add_subcommand("train-score", "train the score network by denoising score matching");
  auto* gen = app.add_subcommand("gen-bench", "write the synthetic benchmark");
  auto* runc = app.add_subcommand("run", "guided sampling, hyperfeatures and the split protocol");
  auto* abl = app.add_subcommand("ablate", "one ablation sweep");
  auto* corr = app.add_subcommand("eval-corr", "PLCC/SRCC of an items.csv");
  for (auto* cmd : {train, gen, runc, abl, corr}) add_common(cmd, common);
  abl->add_option("--which", which, "sweep")
      ->required()
      ->check(CLI::IsMember({"zeta2", "steps", "time-range", "layers"}));
  corr->add_option("--items", items, "items.csv (default: <out>/items.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return train_score(common);
    if (*gen) return gen_bench(common);
    if (*runc) return run(common);
    if (*abl) return ablate(common, which);
    return eval_corr(common, items);
  } catch (const pmg::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const pmg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
