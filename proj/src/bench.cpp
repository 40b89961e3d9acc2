#include "pmg/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "pmg/random.hpp"

namespace pmg {

namespace {

constexpr std::uint64_t kOffsetStream = 0x6f666673ULL;
constexpr std::uint64_t kManifoldStream = 0x7a6d616eULL;
constexpr std::uint64_t kContentStream = 0x636f6e74ULL;
constexpr std::uint64_t kCalibrationStream = 0x63616c69ULL;
constexpr std::uint64_t kPsiStream = 0x70736900ULL;

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

Testbed build_testbed(const TestbedSpec& spec) {
  require(spec.data_dim > spec.latent_dim && spec.latent_dim > spec.intrinsic_dim && spec.intrinsic_dim >= 1,
          "testbed: need D > L > k >= 1");
  require(spec.data_offset_norm >= 0.0, "testbed: offset norm must be >= 0");
  Rng rng(mix_seed(spec.seed, kOffsetStream));
  Vec offset = standard_normal(spec.data_dim, rng);
  offset *= spec.data_offset_norm / offset.norm();
  LinearManifold outer = LinearManifold::random(spec.data_dim, spec.latent_dim, spec.seed, offset);
  LinearManifold inner = LinearManifold::random(spec.latent_dim, spec.intrinsic_dim, mix_seed(spec.seed, kManifoldStream));
  const int k = spec.intrinsic_dim;
  Vec mean = spec.latent_mean.empty() ? Vec::Zero(k) : to_vec(spec.latent_mean);
  Mat cov = Mat::Identity(k, k);
  if (!spec.latent_cov.empty()) {
    require(static_cast<int>(spec.latent_cov.size()) == k * k, "testbed: latent_cov must hold k*k entries");
    cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        spec.latent_cov.data(), k, k);
  }
  require(mean.size() == k, "testbed: latent_mean must have k entries");
  return {LinearAutoencoder(std::move(outer)), std::move(inner), LatentGaussian(std::move(mean), std::move(cov))};
}

Mat testbed_training_data(const Testbed& tb, int n, std::uint64_t seed) {
  return sample_manifold_data(tb.manifold, tb.latent, n, seed);
}

const char* to_string(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::additive_noise: return "additive-noise";
    case DistortionKind::coordinate_blur: return "coordinate-blur";
    case DistortionKind::off_manifold_push: return "off-manifold-push";
  }
  return "additive-noise";
}

DistortionKind distortion_from_string(const std::string& name) {
  if (name == "additive-noise") return DistortionKind::additive_noise;
  if (name == "coordinate-blur") return DistortionKind::coordinate_blur;
  if (name == "off-manifold-push") return DistortionKind::off_manifold_push;
  throw ConfigError("unknown distortion family '" + name + "'");
}

double true_quality(int level, int levels) {
  require(levels >= 1 && level >= 0 && level <= levels, "true_quality: level out of range");
  return 100.0 * std::exp(-std::log(5.0) * static_cast<double>(level) / levels);
}

Vec Benchmark::quality() const {
  Vec q(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) q[static_cast<Eigen::Index>(i)] = items[i].quality;
  return q;
}

std::vector<std::uint64_t> Benchmark::ids() const {
  std::vector<std::uint64_t> out;
  for (const BenchItem& it : items) out.push_back(it.id);
  return out;
}

namespace {

Mat blur_matrix(int dim, double width) {
  Mat k(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      const double d = (i - j) / width;
      k(i, j) = std::exp(-0.5 * d * d);
    }
    k.row(i) /= k.row(i).sum();
  }
  return k;
}

// Unit-severity distortion of x for one item, drawing from rng.
Vec distortion_direction(DistortionKind kind, const Vec& x, const Testbed& tb, const Mat& blur, Rng& rng) {
  const int dim = tb.ae.data_dim();
  switch (kind) {
    case DistortionKind::additive_noise: {
      Vec n = standard_normal(dim, rng);
      return n * (std::sqrt(static_cast<double>(dim)) / n.norm());
    }
    case DistortionKind::coordinate_blur: return blur * x - x;
    case DistortionKind::off_manifold_push: {
      const Vec g = standard_normal(tb.ae.latent_dim(), rng);
      const Mat& b = tb.manifold.basis();
      const Vec perp = g - b * (b.transpose() * g);
      return tb.ae.decode_tangent(perp / perp.norm());
    }
  }
  return Vec::Zero(dim);
}

// Latent distance to Z of a data-space displacement.
double latent_energy(const Vec& delta, const Testbed& tb) {
  return distance_to_manifold(tb.ae.encoder_matrix() * delta, tb.manifold, 1.0);
}

}  // namespace

Benchmark generate_benchmark(const BenchmarkSpec& spec, const Testbed& tb) {
  require(!spec.families.empty(), "benchmark: no distortion families");
  require(spec.contents >= 1, "benchmark: need at least one content");
  require(spec.levels >= 1 && spec.items_per_family >= 1 && spec.items_per_family <= spec.levels,
          "benchmark: need 1 <= items_per_family <= levels");
  require(spec.target_energy > 0.0 && spec.blur_width > 0.0, "benchmark: target energy and blur width must be > 0");
  const int dim = tb.ae.data_dim();
  const Mat blur = blur_matrix(dim, spec.blur_width);

  std::vector<Vec> contents;
  for (int c = 0; c < spec.contents; ++c) {
    const Mat z = sample_manifold_data(tb.manifold, tb.latent, 1, mix_seed(mix_seed(spec.seed, kContentStream), c));
    contents.push_back(tb.ae.decode(z).col(0));
  }

  Benchmark out;
  out.spec = spec;
  for (DistortionKind kind : spec.families) {
    std::vector<double> unit;
    for (int c = 0; c < spec.contents; ++c) {
      Rng rng(mix_seed(mix_seed(spec.seed, kCalibrationStream), static_cast<std::uint64_t>(c)));
      const Vec delta = distortion_direction(kind, contents[static_cast<std::size_t>(c)], tb, blur, rng);
      unit.push_back(latent_energy(delta, tb));
    }
    const double m = median(unit);
    if (!(m > 0.0)) throw NumericalError(std::string("benchmark: family ") + to_string(kind) + " never leaves Z");
    out.family_scale.push_back(spec.target_energy / m);
  }

  const int stride = spec.levels / spec.items_per_family;
  std::vector<Vec> measured;
  std::vector<Vec> clean;
  for (int c = 0; c < spec.contents; ++c) {
    const Vec& x = contents[static_cast<std::size_t>(c)];
    if (spec.control) {
      BenchItem it;
      it.id = out.items.size();
      it.content = c;
      out.items.push_back(it);
      measured.push_back(x);
      clean.push_back(x);
    }
    for (std::size_t f = 0; f < spec.families.size(); ++f) {
      for (int i = 0; i < spec.items_per_family; ++i) {
        BenchItem it;
        it.id = out.items.size();
        it.content = c;
        it.family = static_cast<int>(f);
        it.level = (c + static_cast<int>(f) + i * stride) % spec.levels + 1;
        it.severity = out.family_scale[f] * it.level / spec.levels;
        it.quality = true_quality(it.level, spec.levels);
        Rng rng(mix_seed(spec.seed, it.id));
        measured.push_back(x + it.severity * distortion_direction(spec.families[f], x, tb, blur, rng));
        clean.push_back(x);
        out.items.push_back(it);
      }
    }
  }
  out.measurements.resize(dim, static_cast<Eigen::Index>(measured.size()));
  out.references.resize(dim, static_cast<Eigen::Index>(clean.size()));
  for (std::size_t j = 0; j < measured.size(); ++j) {
    out.measurements.col(static_cast<Eigen::Index>(j)) = measured[j];
    out.references.col(static_cast<Eigen::Index>(j)) = clean[j];
  }
  return out;
}

std::vector<Split> make_splits(const std::vector<BenchItem>& items, const ProtocolSpec& protocol) {
  require(protocol.repeats >= 1, "splits: repeats must be >= 1");
  require(protocol.train_fraction > 0.0 && protocol.val_fraction >= 0.0 &&
              protocol.train_fraction + protocol.val_fraction < 1.0,
          "splits: fractions must leave room for a test split");
  std::set<int> unique;
  for (const BenchItem& it : items) unique.insert(it.content);
  const std::vector<int> contents(unique.begin(), unique.end());
  const auto n = static_cast<double>(contents.size());
  const auto n_train = static_cast<std::size_t>(std::llround(protocol.train_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::llround(protocol.val_fraction * n));
  require(n_train + n_val < contents.size(), "splits: too few contents for a test split");

  std::vector<Split> out;
  for (int r = 0; r < protocol.repeats; ++r) {
    std::vector<int> order = contents;
    Rng rng(mix_seed(protocol.seed, static_cast<std::uint64_t>(r)));
    std::shuffle(order.begin(), order.end(), rng);
    std::map<int, int> part;
    for (std::size_t i = 0; i < order.size(); ++i) part[order[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    Split s;
    for (std::size_t i = 0; i < items.size(); ++i) {
      switch (part[items[i].content]) {
        case 0: s.train.push_back(i); break;
        case 1: s.val.push_back(i); break;
        default: s.test.push_back(i); break;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

double median(std::vector<double> values) {
  require(!values.empty(), "median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

namespace {

Mat rows_of(const Mat& x, const std::vector<std::size_t>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Vec entries_of(const Vec& v, const std::vector<std::size_t>& idx) {
  Vec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(idx[i])];
  return out;
}

// max(n, p) over the columns that survive normalization.
double ridge_scale(const Mat& x) {
  Eigen::Index p = 0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double sd = std::sqrt((x.col(c).array() - mean).square().mean());
    if (sd > 1e-12 * (1.0 + std::abs(mean))) ++p;
  }
  return static_cast<double>(std::max(x.rows(), p));
}

}  // namespace

EvalReport evaluate_features(const Mat& features, const Vec& quality, const std::vector<Split>& splits,
                             const ProtocolSpec& protocol, const HeadConfig& head) {
  require(features.rows() == quality.size(), "evaluate: one feature row per item");
  require(!splits.empty(), "evaluate: no splits");
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    if (!features.row(i).allFinite()) throw NumericalError("evaluate: non-finite features for item " + std::to_string(i));

  EvalReport report;
  std::vector<std::vector<double>> held(static_cast<std::size_t>(quality.size()));
  std::vector<double> plccs;
  std::vector<double> srccs;
  for (const Split& split : splits) {
    const Mat xtr = rows_of(features, split.train);
    const Vec ytr = entries_of(quality, split.train);
    RepeatResult rr;
    RegressionHead best;
    if (head.kind == HeadKind::ridge && !split.val.empty()) {
      const Mat xval = rows_of(features, split.val);
      const Vec yval = entries_of(quality, split.val);
      double best_score = -std::numeric_limits<double>::infinity();
      const double unit = protocol.relative_lambda ? ridge_scale(xtr) : 1.0;
      for (double lambda : protocol.lambda_grid) {
        RegressionHead h = fit_ridge(xtr, ytr, lambda * unit);
        const double score = srcc(h.predict(xval), yval).value_or(-1.0);
        if (score > best_score) {
          best_score = score;
          best = std::move(h);
          rr.lambda = lambda;
          rr.effective_lambda = lambda * unit;
          rr.val_srcc = score;
        }
      }
    } else {
      best = fit_head(xtr, ytr, head);
      rr.lambda = best.lambda();
      rr.effective_lambda = best.lambda();
    }
    const Vec pred = best.predict(rows_of(features, split.test));
    rr.test = correlate(pred, entries_of(quality, split.test));
    for (std::size_t i = 0; i < split.test.size(); ++i) held[split.test[i]].push_back(pred[static_cast<Eigen::Index>(i)]);
    plccs.push_back(rr.test.plcc.value_or(0.0));
    srccs.push_back(rr.test.srcc.value_or(0.0));
    report.repeats.push_back(rr);
  }
  report.median_plcc = median(plccs);
  report.median_srcc = median(srccs);
  report.predicted.resize(quality.size());
  for (std::size_t i = 0; i < held.size(); ++i)
    report.predicted[static_cast<Eigen::Index>(i)] =
        held[i].empty() ? std::numeric_limits<double>::quiet_NaN() : median(held[i]);
  return report;
}

namespace {

PerceptualExtractor build_extractor_kind(const PsiSpec& spec, std::shared_ptr<const ScoreNetwork> net,
                                         const Testbed& tb) {
  switch (spec.kind) {
    case ExtractorKind::none: return PerceptualExtractor::none();
    case ExtractorKind::identity: return PerceptualExtractor::identity();
    case ExtractorKind::linear: {
      require(spec.features >= 1, "psi: features must be >= 1");
      Rng rng(mix_seed(spec.seed, kPsiStream));
      return PerceptualExtractor::linear(standard_normal(spec.features, tb.ae.data_dim(), rng) /
                                         std::sqrt(static_cast<double>(tb.ae.data_dim())));
    }
    case ExtractorKind::mlp:
      require(spec.features >= 1, "psi: features must be >= 1");
      return PerceptualExtractor::mlp(Mlp::random({tb.ae.data_dim(), 16, spec.features}, Activation::tanh,
                                                  Activation::identity, mix_seed(spec.seed, kPsiStream)));
    case ExtractorKind::scorenet: {
      require(net != nullptr, "psi: scorenet extractor needs a score network");
      SamplerRunConfig run;
      run.steps = spec.steps;
      run.t_low = spec.t_low;
      run.t_high = spec.t_high;
      run.seed = spec.seed;
      return PerceptualExtractor::scorenet(std::move(net), run, spec.normalize_blocks);
    }
  }
  return PerceptualExtractor::none();
}

}  // namespace

PerceptualExtractor build_extractor(const PsiSpec& spec, std::shared_ptr<const ScoreNetwork> net, const Testbed& tb) {
  PerceptualExtractor psi = build_extractor_kind(spec, std::move(net), tb);
  psi.set_reduction(spec.reduction);
  return psi;
}

namespace {

struct SampledFeatures {
  Mat hyper;
  Mat baseline;
  double median_wall_ms = 0.0;
};

// Guided sampling in chunks; pools hyperfeatures per chunk so full trajectories are never held.
SampledFeatures sample_features(const Benchmark& bench, const Testbed& tb, const std::shared_ptr<const ScoreNetwork>& net,
                                const PipelineConfig& cfg, const std::vector<int>& layers) {
  const PerceptualExtractor psi = build_extractor(cfg.psi, net, tb);
  const std::vector<std::uint64_t> ids = bench.ids();
  const auto n = static_cast<std::size_t>(bench.measurements.cols());
  const auto chunk = static_cast<std::size_t>(std::max(1, cfg.chunk));
  const int last_layer = net->tap_layers().empty() ? 0 : net->tap_layers().back();
  LgdmOptions opts;
  opts.chunk = static_cast<int>(chunk);
  opts.keep_states = false;

  SampledFeatures out;
  std::vector<double> per_item_ms;
  for (std::size_t at = 0; at < n; at += chunk) {
    const std::size_t len = std::min(chunk, n - at);
    const Mat y = bench.measurements.middleCols(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(len));
    const std::vector<std::uint64_t> part(ids.begin() + static_cast<std::ptrdiff_t>(at),
                                          ids.begin() + static_cast<std::ptrdiff_t>(at + len));
    const auto t0 = std::chrono::steady_clock::now();
    const Trajectory traj = lgdm_run(y, part, *net, net->schedule(), tb.ae, cfg.sampler, cfg.guidance, psi, opts);
    const auto t1 = std::chrono::steady_clock::now();
    per_item_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(len));
    const Mat h = hyperfeature_matrix(traj, cfg.protocol.pooling, layers);
    const Mat b = hyperfeature_matrix(traj, Pooling::concat, {last_layer},
                                      {static_cast<int>(traj.steps.size()) - 1});
    if (at == 0) {
      out.hyper.resize(static_cast<Eigen::Index>(n), h.cols());
      out.baseline.resize(static_cast<Eigen::Index>(n), b.cols());
    }
    out.hyper.middleRows(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(len)) = h;
    out.baseline.middleRows(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(len)) = b;
  }
  out.median_wall_ms = median(per_item_ms);
  return out;
}

AblationRow row_from(const std::string& label, double value, const EvalReport& r, double wall_ms) {
  return {label, value, r.median_plcc, r.median_srcc, wall_ms};
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::string format_short(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

// (lo, hi] without the comma so the label stays one CSV field.
std::string bucket_label(int lo, int hi) { return std::to_string(lo) + ".." + std::to_string(hi); }

bool same_bits(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!(a[i] == b[i] || (std::isnan(a[i]) && std::isnan(b[i])))) return false;
  return true;
}

}  // namespace

ExperimentResult run_experiment(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                                const PipelineConfig& cfg) {
  require(net != nullptr, "run_experiment: missing score network");
  const SampledFeatures f = sample_features(bench, tb, net, cfg, {});
  const std::vector<Split> splits = make_splits(bench.items, cfg.protocol);
  ExperimentResult res;
  res.hyper = evaluate_features(f.hyper, bench.quality(), splits, cfg.protocol, cfg.head);
  res.baseline = evaluate_features(f.baseline, bench.quality(), splits, cfg.protocol, cfg.head);
  res.features = f.hyper;
  res.median_wall_ms = f.median_wall_ms;
  return res;
}

AblationTable ablate_zeta2(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                           const PipelineConfig& cfg, const std::vector<double>& values) {
  AblationTable table{"zeta2", "zeta2", {}, {}};
  const std::vector<Split> splits = make_splits(bench.items, cfg.protocol);
  for (double v : values) {
    PipelineConfig c = cfg;
    c.guidance.zeta2 = v;
    const SampledFeatures f = sample_features(bench, tb, net, c, {});
    const EvalReport r = evaluate_features(f.hyper, bench.quality(), splits, c.protocol, c.head);
    table.rows.push_back(row_from("zeta2=" + format_short(v), v, r, f.median_wall_ms));
  }
  return table;
}

AblationTable ablate_steps(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                           const PipelineConfig& cfg, const std::vector<int>& values) {
  AblationTable table{"steps", "steps", {}, {}};
  const std::vector<Split> splits = make_splits(bench.items, cfg.protocol);
  for (int v : values) {
    PipelineConfig c = cfg;
    c.sampler.steps = v;
    const SampledFeatures f = sample_features(bench, tb, net, c, {});
    const EvalReport r = evaluate_features(f.hyper, bench.quality(), splits, c.protocol, c.head);
    table.rows.push_back(row_from("steps=" + std::to_string(v), v, r, f.median_wall_ms));
  }
  return table;
}

std::vector<std::pair<int, int>> default_time_buckets() {
  return {{0, 100}, {100, 200}, {200, 300}, {300, 400}, {400, 500}};
}

AblationTable ablate_time_range(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                                const PipelineConfig& cfg, const std::vector<std::pair<int, int>>& buckets) {
  AblationTable table{"time-range", "t_high", {}, {}};
  std::string list;
  for (const auto& [lo, hi] : buckets) list += (list.empty() ? "" : ";") + bucket_label(lo, hi);
  table.notes.emplace_back("buckets", list);
  const std::vector<Split> splits = make_splits(bench.items, cfg.protocol);
  for (const auto& [lo, hi] : buckets) {
    PipelineConfig c = cfg;
    c.sampler.t_low = lo;
    c.sampler.t_high = hi;
    const SampledFeatures f = sample_features(bench, tb, net, c, {});
    const EvalReport r = evaluate_features(f.hyper, bench.quality(), splits, c.protocol, c.head);
    table.rows.push_back(row_from(bucket_label(lo, hi), hi, r, f.median_wall_ms));
  }
  return table;
}

AblationTable ablate_layers(const Benchmark& bench, const Testbed& tb, std::shared_ptr<const ScoreNetwork> net,
                            const PipelineConfig& cfg) {
  AblationTable table{"layers", "layer", {}, {}};
  PipelineConfig c = cfg;
  c.sampler.steps = 1;
  c.protocol.pooling = Pooling::concat;
  const std::vector<Split> splits = make_splits(bench.items, c.protocol);
  const SampledFeatures all = sample_features(bench, tb, net, c, {});
  const Vec q = bench.quality();
  bool equivalent = true;
  Eigen::Index at = 0;
  const auto& layers = net->trunk().layers();
  for (int l : net->tap_layers()) {
    const Eigen::Index width = layers[static_cast<std::size_t>(l)].weight.rows();
    const Mat single = all.hyper.middleCols(at, width);
    const EvalReport r = evaluate_features(single, q, splits, c.protocol, c.head);
    Mat masked = Mat::Zero(all.hyper.rows(), all.hyper.cols());
    masked.middleCols(at, width) = single;
    const EvalReport m = evaluate_features(masked, q, splits, c.protocol, c.head);
    equivalent = equivalent && m.median_srcc == r.median_srcc && m.median_plcc == r.median_plcc &&
                 same_bits(m.predicted, r.predicted);
    table.rows.push_back(row_from("layer" + std::to_string(l), l, r, all.median_wall_ms));
    at += width;
  }
  const EvalReport u = evaluate_features(all.hyper, q, splits, c.protocol, c.head);
  table.rows.push_back(row_from("all", -1, u, all.median_wall_ms));
  table.notes.emplace_back("masking_equivalent", equivalent ? "true" : "false");
  return table;
}

void write_ablation_csv(std::ostream& out, const AblationTable& table, const std::string& config_hash,
                        std::uint64_t seed) {
  out << "# config_hash=" << config_hash << "\n# seed=" << seed << "\n# which=" << table.which << "\n";
  for (const auto& [k, v] : table.notes) out << "# " << k << "=" << v << "\n";
  out << "label," << table.value_name << ",plcc,srcc,wall_ms\n";
  for (const AblationRow& r : table.rows) {
    out << r.label << ',' << format_double(r.value) << ',' << format_double(r.plcc) << ','
        << format_double(r.srcc) << ',' << format_double(r.wall_ms) << '\n';
  }
}

void write_items_csv(std::ostream& out, const Benchmark& bench, const Vec& predicted, const std::string& config_hash,
                     std::uint64_t seed) {
  require(predicted.size() == static_cast<Eigen::Index>(bench.items.size()), "items csv: one prediction per item");
  out << "# config_hash=" << config_hash << "\n# seed=" << seed << "\n# families are synthetic stand-ins\n";
  out << "item,content,family,level,true_score,predicted_score\n";
  for (std::size_t i = 0; i < bench.items.size(); ++i) {
    const BenchItem& it = bench.items[i];
    const std::string family =
        it.family < 0 ? "control" : to_string(bench.spec.families[static_cast<std::size_t>(it.family)]);
    out << it.id << ',' << it.content << ',' << family << ',' << it.level << ',' << format_double(it.quality)
        << ',' << format_double(predicted[static_cast<Eigen::Index>(i)]) << '\n';
  }
}

}  // namespace pmg
