#include "pmg/quality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "pmg/adam.hpp"
#include "pmg/checkpoint.hpp"
#include "pmg/random.hpp"

namespace pmg {

const char* to_string(Pooling p) {
  switch (p) {
    case Pooling::concat: return "concat";
    case Pooling::mean_over_time: return "mean-over-time";
    case Pooling::per_layer_mean: return "per-layer-mean";
  }
  return "concat";
}

Pooling pooling_from_string(const std::string& name) {
  if (name == "concat") return Pooling::concat;
  if (name == "mean-over-time") return Pooling::mean_over_time;
  if (name == "per-layer-mean") return Pooling::per_layer_mean;
  throw ConfigError("unknown pooling '" + name + "'");
}

Hyperfeatures aggregate(std::vector<TapEntry> taps, Pooling pooling) {
  require(!taps.empty(), "aggregate: no taps");
  std::sort(taps.begin(), taps.end(), [](const TapEntry& a, const TapEntry& b) {
    return a.t != b.t ? a.t > b.t : a.layer < b.layer;
  });
  std::set<int> times;
  std::map<int, Eigen::Index> width;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const TapEntry& e = taps[i];
    if (i > 0 && taps[i - 1].t == e.t && taps[i - 1].layer == e.layer)
      throw DomainError("aggregate: duplicate (timestep, layer) entry");
    auto [it, fresh] = width.emplace(e.layer, e.value.size());
    if (!fresh && it->second != e.value.size())
      throw DomainError("aggregate: ragged feature width for layer " + std::to_string(e.layer));
    times.insert(e.t);
  }
  if (taps.size() != times.size() * width.size()) throw DomainError("aggregate: incomplete (timestep, layer) grid");

  Hyperfeatures h;
  switch (pooling) {
    case Pooling::concat: {
      Eigen::Index n = 0;
      for (const TapEntry& e : taps) n += e.value.size();
      h.pooled.resize(n);
      Eigen::Index at = 0;
      for (const TapEntry& e : taps) {
        h.pooled.segment(at, e.value.size()) = e.value;
        at += e.value.size();
      }
      break;
    }
    case Pooling::mean_over_time: {
      Eigen::Index n = 0;
      std::map<int, Eigen::Index> at;
      for (const auto& [layer, w] : width) {
        at[layer] = n;
        n += w;
      }
      h.pooled = Vec::Zero(n);
      for (const TapEntry& e : taps) h.pooled.segment(at[e.layer], e.value.size()) += e.value;
      h.pooled /= static_cast<double>(times.size());
      break;
    }
    case Pooling::per_layer_mean: {
      h.pooled.resize(static_cast<Eigen::Index>(taps.size()));
      for (std::size_t i = 0; i < taps.size(); ++i)
        h.pooled[static_cast<Eigen::Index>(i)] = taps[i].value.size() > 0 ? taps[i].value.mean() : 0.0;
      break;
    }
  }
  h.entries = std::move(taps);
  return h;
}

Mat hyperfeature_matrix(const Trajectory& traj, Pooling pooling, const std::vector<int>& layers,
                        const std::vector<int>& steps) {
  require(!traj.steps.empty(), "hyperfeature_matrix: empty trajectory");
  std::vector<int> positions = steps;
  if (positions.empty()) {
    positions.resize(traj.steps.size());
    std::iota(positions.begin(), positions.end(), 0);
  }
  const auto n = static_cast<Eigen::Index>(traj.item_ids.size());
  Mat out;
  for (Eigen::Index j = 0; j < n; ++j) {
    std::vector<TapEntry> taps;
    for (int p : positions) {
      require(p >= 0 && p < static_cast<int>(traj.steps.size()), "hyperfeature_matrix: bad step position");
      const TrajectoryStep& st = traj.steps[static_cast<std::size_t>(p)];
      for (const auto& [layer, value] : st.taps) {
        if (!layers.empty() && std::find(layers.begin(), layers.end(), layer) == layers.end()) continue;
        taps.push_back({st.t, layer, value.col(j)});
      }
    }
    const Hyperfeatures h = aggregate(std::move(taps), pooling);
    if (j == 0) out.resize(n, h.pooled.size());
    out.row(j) = h.pooled.transpose();
  }
  return out;
}

namespace {

bool constant(const Vec& v) { return (v.array() == v[0]).all(); }

std::optional<double> pearson(const Vec& x, const Vec& y) {
  require(x.size() == y.size(), "correlation: length mismatch");
  require(x.size() >= 3, "correlation: need at least 3 samples");
  if (constant(x) || constant(y)) return std::nullopt;
  const Vec dx = x.array() - x.mean();
  const Vec dy = y.array() - y.mean();
  const double den = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  if (!(den > 0.0)) return std::nullopt;
  return std::clamp(dx.dot(dy) / den, -1.0, 1.0);
}

}  // namespace

std::optional<double> plcc(const Vec& xs, const Vec& ys) { return pearson(xs, ys); }

Vec average_ranks(const Vec& xs) {
  const auto n = static_cast<std::size_t>(xs.size());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return xs[a] < xs[b]; });
  Vec ranks(xs.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> srcc(const Vec& xs, const Vec& ys) {
  require(xs.size() == ys.size(), "correlation: length mismatch");
  require(xs.size() >= 3, "correlation: need at least 3 samples");
  return pearson(average_ranks(xs), average_ranks(ys));
}

CorrelationReport correlate(const Vec& predicted, const Vec& truth) {
  return {plcc(predicted, truth), srcc(predicted, truth), static_cast<std::size_t>(predicted.size())};
}

Mat RegressionHead::normalize(const Mat& x) const {
  require(x.cols() == input_dim_, "regression head: feature dimension mismatch");
  Mat out(x.rows(), static_cast<Eigen::Index>(kept_.size()));
  for (std::size_t c = 0; c < kept_.size(); ++c) {
    const auto k = static_cast<Eigen::Index>(c);
    out.col(k) = (x.col(kept_[c]).array() - mu_[k]) / sigma_[k];
  }
  return out;
}

Vec RegressionHead::predict(const Mat& x) const {
  const Mat xn = normalize(x);
  if (kind_ == HeadKind::ridge) return (xn * w_).array() + b_;
  const Vec raw = forward(*net_, xn.transpose()).output.row(0).transpose();
  return raw.array() * y_sigma_ + y_mu_;
}

double RegressionHead::predict(const Vec& h) const { return predict(Mat(h.transpose()))[0]; }

namespace {

void fit_normalization(const Mat& x, Vec& mu, Vec& sigma, std::vector<Eigen::Index>& kept) {
  require(x.rows() >= 2, "fit_head: need at least 2 rows");
  require(x.allFinite(), "fit_head: non-finite features");
  std::vector<double> m;
  std::vector<double> s;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double sd = std::sqrt((x.col(c).array() - mean).square().mean());
    if (constant(x.col(c)) || sd <= 1e-12 * (1.0 + std::abs(mean))) continue;
    kept.push_back(c);
    m.push_back(mean);
    s.push_back(sd);
  }
  mu = Eigen::Map<const Vec>(m.data(), static_cast<Eigen::Index>(m.size()));
  sigma = Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size()));
}

void check_scores(const Mat& x, const Vec& y) {
  require(x.rows() == y.size(), "fit_head: one score per feature row");
  require(y.allFinite(), "fit_head: non-finite scores");
  require(y.size() >= 2 && !constant(y), "fit_head: need at least two distinct scores");
}

}  // namespace

RegressionHead fit_ridge(const Mat& x, const Vec& y, double lambda) {
  check_scores(x, y);
  require(std::isfinite(lambda) && lambda > 0.0, "fit_ridge: lambda must be > 0");
  RegressionHead h;
  h.kind_ = HeadKind::ridge;
  h.lambda_ = lambda;
  h.input_dim_ = x.cols();
  fit_normalization(x, h.mu_, h.sigma_, h.kept_);
  h.b_ = y.mean();
  const Vec yc = y.array() - h.b_;
  const Mat xn = h.normalize(x);
  if (xn.cols() == 0) {
    h.w_ = Vec::Zero(0);
  } else if (xn.cols() <= xn.rows()) {
    Mat a = xn.transpose() * xn;
    a.diagonal().array() += lambda;
    h.w_ = a.llt().solve(xn.transpose() * yc);
  } else {
    Mat k = xn * xn.transpose();
    k.diagonal().array() += lambda;
    h.w_ = xn.transpose() * k.llt().solve(yc);
  }
  if (!h.w_.allFinite()) throw NumericalError("fit_ridge: solve produced non-finite weights");
  return h;
}

RegressionHead fit_mlp_head(const Mat& x, const Vec& y, const MlpHeadConfig& cfg) {
  check_scores(x, y);
  require(cfg.hidden.size() == 2, "mlp head: exactly two hidden layers");
  require(cfg.epochs >= 0 && cfg.learning_rate > 0.0 && cfg.weight_decay >= 0.0, "mlp head: bad training config");
  RegressionHead h;
  h.kind_ = HeadKind::mlp;
  h.input_dim_ = x.cols();
  fit_normalization(x, h.mu_, h.sigma_, h.kept_);
  h.y_mu_ = y.mean();
  h.y_sigma_ = std::sqrt((y.array() - h.y_mu_).square().mean());
  require(!h.kept_.empty(), "mlp head: every feature column is constant");
  const Mat input = h.normalize(x).transpose();
  const Mat target = ((y.array() - h.y_mu_) / h.y_sigma_).matrix().transpose();
  const int in = static_cast<int>(input.rows());
  Mlp net = Mlp::random({in, cfg.hidden[0], cfg.hidden[1], 1}, Activation::tanh, Activation::identity, cfg.seed);
  Vec params = net.flatten();
  AdamState state;
  const AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};
  const double n = static_cast<double>(input.cols());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    const RecordedMlp rec = record_mlp(tape, net, tape.constant(input), true);
    const NodeId loss = tape.sum_squares(tape.sub(rec.output, tape.constant(target)));
    tape.finalize(loss);
    const double value = tape.value(loss)(0, 0) / n;
    if (!std::isfinite(value) || value > 1e6) throw NumericalError("mlp head: training diverged");
    Mat seed(1, 1);
    seed(0, 0) = 1.0 / n;
    const Vec grad = flatten_gradients(tape.backward(seed), rec, net) + cfg.weight_decay * params;
    if (auto diag = adam_step(params, grad, state, adam)) throw NumericalError("mlp head: " + diag->message);
    net.unflatten(params);
  }
  h.net_ = std::move(net);
  return h;
}

RegressionHead fit_head(const Mat& x, const Vec& y, const HeadConfig& cfg) {
  return cfg.kind == HeadKind::ridge ? fit_ridge(x, y, cfg.lambda) : fit_mlp_head(x, y, cfg.mlp);
}

void save_head(const std::filesystem::path& path, const RegressionHead& head) {
  if (head.kind_ == HeadKind::ridge) {
    DenseLayer layer;
    layer.weight = head.w_.transpose();
    layer.bias = Vec::Constant(1, head.b_);
    layer.activation = Activation::identity;
    require(layer.weight.cols() > 0, "save_head: ridge head has no kept features");
    save_checkpoint(path, Mlp({layer}));
  } else {
    save_checkpoint(path, *head.net_);
  }
  nlohmann::json side;
  side["kind"] = head.kind_ == HeadKind::ridge ? "ridge" : "mlp";
  side["lambda"] = head.lambda_;
  side["norm_mu"] = std::vector<double>(head.mu_.data(), head.mu_.data() + head.mu_.size());
  side["norm_sigma"] = std::vector<double>(head.sigma_.data(), head.sigma_.data() + head.sigma_.size());
  side["kept"] = head.kept_;
  side["input_dim"] = head.input_dim_;
  side["target_mu"] = head.y_mu_;
  side["target_sigma"] = head.y_sigma_;
  std::ofstream out(path.string() + ".json");
  if (!out) throw ConfigError("cannot write sidecar for " + path.string());
  out << side.dump(2) << "\n";
}

RegressionHead load_head(const std::filesystem::path& path) {
  Mlp net = load_checkpoint(path);
  std::ifstream in(path.string() + ".json");
  if (!in) throw ConfigError("missing sidecar " + path.string() + ".json");
  RegressionHead h;
  try {
    const nlohmann::json side = nlohmann::json::parse(in);
    h.kind_ = side.at("kind").get<std::string>() == "ridge" ? HeadKind::ridge : HeadKind::mlp;
    h.lambda_ = side.at("lambda").get<double>();
    const auto mu = side.at("norm_mu").get<std::vector<double>>();
    const auto sigma = side.at("norm_sigma").get<std::vector<double>>();
    h.mu_ = Eigen::Map<const Vec>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    h.sigma_ = Eigen::Map<const Vec>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
    h.kept_ = side.at("kept").get<std::vector<Eigen::Index>>();
    h.input_dim_ = side.at("input_dim").get<Eigen::Index>();
    h.y_mu_ = side.value("target_mu", 0.0);
    h.y_sigma_ = side.value("target_sigma", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad head sidecar: ") + e.what());
  }
  if (h.kind_ == HeadKind::ridge) {
    const DenseLayer& layer = net.layers().front();
    h.w_ = layer.weight.row(0).transpose();
    h.b_ = layer.bias[0];
  } else {
    h.net_ = std::move(net);
  }
  if (h.mu_.size() != static_cast<Eigen::Index>(h.kept_.size()) || h.sigma_.size() != h.mu_.size())
    throw ConfigError("head sidecar: normalization and kept columns disagree");
  return h;
}

}  // namespace pmg
