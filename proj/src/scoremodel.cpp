#include "pmg/scoremodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pmg/checkpoint.hpp"
#include "pmg/random.hpp"

namespace pmg {

std::vector<double> default_time_frequencies() { return {1.0, 10.0, 100.0, 1000.0}; }

ScoreNetwork::ScoreNetwork(Mlp trunk, std::vector<double> frequencies, std::vector<int> tap_layers,
                           NoiseSchedule schedule, InputScaling scaling)
    : trunk_(std::move(trunk)),
      frequencies_(std::move(frequencies)),
      tap_layers_(std::move(tap_layers)),
      schedule_(std::move(schedule)),
      scaling_(scaling) {
  require(!frequencies_.empty(), "score network: needs at least one time frequency");
  state_dim_ = trunk_.output_dim();
  require(trunk_.input_dim() == state_dim_ + 2 * static_cast<int>(frequencies_.size()),
          "score network: trunk input must be state dim + 2 * |frequencies|");
  std::sort(tap_layers_.begin(), tap_layers_.end());
  tap_layers_.erase(std::unique(tap_layers_.begin(), tap_layers_.end()), tap_layers_.end());
  for (int l : tap_layers_)
    require(l >= 0 && l < static_cast<int>(trunk_.layer_count()), "score network: bad tap layer");
}

ScoreNetwork ScoreNetwork::create(const ScoreNetworkSpec& spec, NoiseSchedule schedule) {
  require(spec.state_dim >= 1, "score network: state_dim must be >= 1");
  std::vector<double> freqs = spec.frequencies.empty() ? default_time_frequencies() : spec.frequencies;
  std::vector<int> dims{spec.state_dim + 2 * static_cast<int>(freqs.size())};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.state_dim);
  Mlp trunk = Mlp::random(dims, spec.activation, Activation::identity, spec.seed);
  std::vector<int> taps = spec.tap_layers;
  if (taps.empty()) {
    taps.resize(spec.hidden.size());
    std::iota(taps.begin(), taps.end(), 0);
  }
  return ScoreNetwork(std::move(trunk), std::move(freqs), std::move(taps), std::move(schedule),
                      spec.scaling);
}

ScoreNetwork ScoreNetwork::with_taps(std::vector<int> taps) const {
  return ScoreNetwork(trunk_, frequencies_, std::move(taps), schedule_, scaling_);
}

double ScoreNetwork::input_scale(int t) const {
  if (scaling_ == InputScaling::none) return 1.0;
  return 1.0 / std::sqrt(1.0 - schedule_.alpha_bar(t));
}

Vec ScoreNetwork::time_embedding(int t) const {
  const double tau = static_cast<double>(t) / schedule_.steps();
  const auto f = static_cast<Eigen::Index>(frequencies_.size());
  Vec e(2 * f);
  for (Eigen::Index i = 0; i < f; ++i) {
    e[i] = std::sin(frequencies_[static_cast<std::size_t>(i)] * tau);
    e[f + i] = std::cos(frequencies_[static_cast<std::size_t>(i)] * tau);
  }
  return e;
}

Mat ScoreNetwork::trunk_input(const Mat& x_t, const std::vector<int>& steps) const {
  require(x_t.rows() == state_dim_, "score network: state dimension mismatch");
  require(static_cast<Eigen::Index>(steps.size()) == x_t.cols(), "score network: one step per column");
  const auto f2 = static_cast<Eigen::Index>(2 * frequencies_.size());
  Mat in(state_dim_ + f2, x_t.cols());
  for (Eigen::Index j = 0; j < x_t.cols(); ++j) {
    const int t = steps[static_cast<std::size_t>(j)];
    require(t >= 1 && t <= schedule_.steps(), "score network: step out of range");
    in.col(j).head(state_dim_) = input_scale(t) * x_t.col(j);
    in.col(j).tail(f2) = time_embedding(t);
  }
  return in;
}

NoisePrediction ScoreNetwork::predict(const Mat& x_t, int t) const {
  require(x_t.allFinite(), "predict_noise: non-finite state");
  std::vector<int> steps(static_cast<std::size_t>(x_t.cols()), t);
  MlpForward fw = forward(trunk_, trunk_input(x_t, steps));
  NoisePrediction out;
  out.eps = std::move(fw.output);
  for (int l : tap_layers_) out.taps.emplace(l, std::move(fw.activations[static_cast<std::size_t>(l)]));
  return out;
}

NoisePrediction predict_noise(const ScoreNetwork& net, const Mat& x_t, int t) {
  return net.predict(x_t, t);
}

RecordedPrediction record_predict_noise(Tape& tape, const ScoreNetwork& net, NodeId x_t, int t,
                                        bool trainable_params) {
  const Mat& x = tape.value(x_t);
  require(x.rows() == net.state_dim(), "record_predict_noise: state dimension mismatch");
  require(t >= 1 && t <= net.schedule().steps(), "record_predict_noise: step out of range");
  const Eigen::Index n = x.cols();
  const NodeId scaled = tape.lincomb({{x_t, net.input_scale(t)}});
  const NodeId embed = tape.constant(net.time_embedding(t).replicate(1, n));
  const std::array<NodeId, 2> parts{scaled, embed};
  const NodeId input = tape.concat_rows(parts);
  RecordedPrediction rec;
  rec.trunk = record_mlp(tape, net.trunk(), input, trainable_params);
  rec.eps = rec.trunk.output;
  for (int l : net.tap_layers()) rec.taps.emplace(l, rec.trunk.activations[static_cast<std::size_t>(l)]);
  return rec;
}

Mat score_from_noise(const Mat& eps, const NoiseSchedule& s, int t) {
  const double ab = s.alpha_bar(t);
  if (!(ab < 1.0)) throw DomainError("score_from_noise: alpha_bar_t = 1 has no score");
  return -eps / std::sqrt(1.0 - ab);
}

namespace {

int resolve_high(int t_high, const NoiseSchedule& s) { return t_high <= 0 ? s.steps() : t_high; }

}  // namespace

DsmResult train_dsm(ScoreNetwork net, const Mat& data, const DsmConfig& cfg) {
  require(data.cols() > 0, "train_dsm: empty dataset");
  require(data.rows() == net.state_dim(), "train_dsm: data dimension mismatch");
  require(cfg.epochs >= 0 && cfg.batch_size > 0 && cfg.learning_rate > 0.0,
          "train_dsm: epochs, batch size and learning rate must be positive");
  const NoiseSchedule& s = net.schedule();
  const int t_high = resolve_high(cfg.t_high, s);
  require(cfg.t_low >= 0 && cfg.t_low < t_high && t_high <= s.steps(), "train_dsm: bad step range");

  DsmResult result{net, {}};
  if (cfg.epochs == 0) return result;

  Rng rng(cfg.seed);
  std::uniform_int_distribution<int> step_dist(cfg.t_low + 1, t_high);
  AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};
  AdamState state;
  Vec params = net.trunk().flatten();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.cols()));
  std::iota(order.begin(), order.end(), 0);
  const std::size_t per_epoch = (order.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                static_cast<std::size_t>(cfg.batch_size);
  const double total_batches = static_cast<double>(per_epoch) * cfg.epochs;
  long taken = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<Eigen::Index>(stop - start);
      Mat x0(data.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) x0.col(j) = data.col(order[start + static_cast<std::size_t>(j)]);
      std::vector<int> steps(static_cast<std::size_t>(b));
      for (int& t : steps) t = step_dist(rng);
      const Mat noise = standard_normal(data.rows(), b, rng);
      Mat x_t(data.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const double ab = s.alpha_bar(steps[static_cast<std::size_t>(j)]);
        x_t.col(j) = std::sqrt(ab) * x0.col(j) + std::sqrt(1.0 - ab) * noise.col(j);
      }

      Tape tape;
      const NodeId input = tape.constant(net.trunk_input(x_t, steps));
      const RecordedMlp rec = record_mlp(tape, net.trunk(), input, true);
      const NodeId target = tape.constant(noise);
      const NodeId loss = tape.sum_squares(tape.sub(rec.output, target));
      tape.finalize(loss);
      const double batch_loss = tape.value(loss)(0, 0) / static_cast<double>(b);
      if (!std::isfinite(batch_loss) || batch_loss > cfg.divergence_threshold) {
        std::ostringstream msg;
        msg << "train_dsm: diverged at epoch " << epoch << " batch " << batches << " (loss "
            << batch_loss << ")";
        throw NumericalError(msg.str());
      }
      Mat seed(1, 1);
      seed(0, 0) = 1.0 / static_cast<double>(b);
      const Gradients g = tape.backward(seed);
      const Vec grad = flatten_gradients(g, rec, net.trunk());
      if (cfg.cosine_decay)
        adam.lr = cfg.learning_rate * 0.5 *
                  (1.0 + std::cos(std::numbers::pi * static_cast<double>(taken) / total_batches));
      ++taken;
      if (auto diag = adam_step(params, grad, state, adam)) {
        throw NumericalError("train_dsm: epoch " + std::to_string(epoch) + ": " + diag->message);
      }
      net.mutable_trunk().unflatten(params);
      epoch_loss += batch_loss;
      ++batches;
    }
    result.loss_curve.push_back(epoch_loss / batches);
  }
  result.net = std::move(net);
  return result;
}

double dsm_loss(const NoisePredictor& predictor, const NoiseSchedule& s, const Mat& data, int t_low,
                int t_high, int draws_per_step, std::uint64_t seed) {
  require(data.cols() > 0, "dsm_loss: empty dataset");
  t_high = resolve_high(t_high, s);
  require(t_low >= 0 && t_low < t_high, "dsm_loss: bad step range");
  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, data.cols() - 1);
  double total = 0.0;
  for (int t = t_low + 1; t <= t_high; ++t) {
    Mat x0(data.rows(), draws_per_step);
    for (int j = 0; j < draws_per_step; ++j) x0.col(j) = data.col(pick(rng));
    const Mat noise = standard_normal(data.rows(), draws_per_step, rng);
    const double ab = s.alpha_bar(t);
    const Mat x_t = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
    total += (predictor.predict(x_t, t).eps - noise).squaredNorm() / draws_per_step;
  }
  return total / (t_high - t_low);
}

void save_score_network(const std::filesystem::path& path, const ScoreNetwork& net,
                        std::uint64_t seed) {
  save_checkpoint(path, net.trunk());
  nlohmann::json side;
  side["state_dim"] = net.state_dim();
  side["frequencies"] = net.frequencies();
  side["tap_layers"] = net.tap_layers();
  side["input_scaling"] = net.scaling() == InputScaling::unit_noise ? "unit_noise" : "none";
  const NoiseSchedule& s = net.schedule();
  if (s.linear_params()) {
    side["schedule"] = {{"T", s.linear_params()->steps},
                        {"beta_min", s.linear_params()->beta_min},
                        {"beta_max", s.linear_params()->beta_max}};
  } else {
    side["schedule"] = {{"betas", s.betas()}};
  }
  side["seed"] = seed;
  std::ofstream out(path.string() + ".json");
  if (!out) throw ConfigError("cannot write sidecar for " + path.string());
  out << side.dump(2) << "\n";
}

ScoreNetwork load_score_network(const std::filesystem::path& path) {
  Mlp trunk = load_checkpoint(path);
  std::ifstream in(path.string() + ".json");
  if (!in) throw ConfigError("missing sidecar " + path.string() + ".json");
  try {
    const nlohmann::json side = nlohmann::json::parse(in);
    const nlohmann::json& sj = side.at("schedule");
    NoiseSchedule s = sj.contains("betas")
                          ? NoiseSchedule::from_betas(sj.at("betas").get<std::vector<double>>())
                          : NoiseSchedule::linear(sj.at("T").get<int>(), sj.at("beta_min").get<double>(),
                                                  sj.at("beta_max").get<double>());
    const InputScaling scaling = side.value("input_scaling", std::string("unit_noise")) == "none"
                                     ? InputScaling::none
                                     : InputScaling::unit_noise;
    ScoreNetwork net(std::move(trunk), side.at("frequencies").get<std::vector<double>>(),
                     side.at("tap_layers").get<std::vector<int>>(), std::move(s), scaling);
    if (net.state_dim() != side.at("state_dim").get<int>())
      throw ConfigError("sidecar state_dim disagrees with checkpoint");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad sidecar: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("bad sidecar: ") + e.what());
  }
}

}  // namespace pmg
