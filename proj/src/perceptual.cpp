#include "pmg/perceptual.hpp"

#include <array>
#include <string>

namespace pmg {

const char* to_string(ExtractorKind kind) {
  switch (kind) {
    case ExtractorKind::none: return "none";
    case ExtractorKind::identity: return "identity";
    case ExtractorKind::linear: return "linear";
    case ExtractorKind::mlp: return "mlp";
    case ExtractorKind::scorenet: return "scorenet";
  }
  return "none";
}

ExtractorKind extractor_kind_from_string(const std::string& name) {
  if (name == "none") return ExtractorKind::none;
  if (name == "identity") return ExtractorKind::identity;
  if (name == "linear") return ExtractorKind::linear;
  if (name == "mlp") return ExtractorKind::mlp;
  if (name == "scorenet") return ExtractorKind::scorenet;
  throw ConfigError("unknown extractor kind '" + name + "'");
}

PerceptualExtractor PerceptualExtractor::none() { return {}; }

PerceptualExtractor PerceptualExtractor::identity() {
  PerceptualExtractor p;
  p.kind_ = ExtractorKind::identity;
  return p;
}

PerceptualExtractor PerceptualExtractor::linear(Mat m) {
  require(m.size() > 0 && m.allFinite(), "linear extractor: matrix must be non-empty and finite");
  PerceptualExtractor p;
  p.kind_ = ExtractorKind::linear;
  p.matrix_ = std::move(m);
  return p;
}

PerceptualExtractor PerceptualExtractor::mlp(Mlp m) {
  PerceptualExtractor p;
  p.kind_ = ExtractorKind::mlp;
  p.mlp_ = std::move(m);
  return p;
}

PerceptualExtractor PerceptualExtractor::scorenet(std::shared_ptr<const ScoreNetwork> net, SamplerRunConfig run,
                                                  bool normalize_blocks) {
  require(net != nullptr, "scorenet extractor: missing network");
  require(!net->tap_layers().empty(), "scorenet extractor: network exposes no taps");
  select_timesteps(run, net->schedule().steps());
  PerceptualExtractor p;
  p.kind_ = ExtractorKind::scorenet;
  p.net_ = std::move(net);
  p.run_ = run;
  p.normalize_blocks_ = normalize_blocks;
  return p;
}

std::vector<Eigen::Index> PerceptualExtractor::block_offsets(int data_dim) const {
  switch (kind_) {
    case ExtractorKind::none: return {0};
    case ExtractorKind::identity: return {0, data_dim};
    case ExtractorKind::linear: return {0, matrix_.rows()};
    case ExtractorKind::mlp: return {0, mlp_->output_dim()};
    case ExtractorKind::scorenet: {
      std::vector<Eigen::Index> offsets{0};
      const auto& layers = net_->trunk().layers();
      for (int step = 0; step < run_.steps; ++step)
        for (int l : net_->tap_layers())
          offsets.push_back(offsets.back() + layers[static_cast<std::size_t>(l)].weight.rows());
      return offsets;
    }
  }
  return {0};
}

namespace {

void check_data(const Mat& x, const LinearAutoencoder& ae, const std::vector<std::uint64_t>& ids) {
  require(x.rows() == ae.data_dim(), "extractor: data dimension mismatch");
  require(static_cast<Eigen::Index>(ids.size()) == x.cols(), "extractor: one item id per column");
}

Mat concat_taps(const std::vector<std::map<int, Mat>>& taps) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& step : taps)
    for (const auto& [layer, value] : step) {
      rows += value.rows();
      cols = value.cols();
    }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& step : taps)
    for (const auto& [layer, value] : step) {
      out.middleRows(at, value.rows()) = value;
      at += value.rows();
    }
  return out;
}

NodeId record_decode(Tape& tape, NodeId z, const LinearAutoencoder& ae) {
  const NodeId b = tape.constant(ae.manifold().basis());
  const NodeId o = tape.constant(ae.manifold().offset());
  return tape.add_bias(tape.matmul(b, z), o);
}

NodeId record_encode(Tape& tape, NodeId x, const LinearAutoencoder& ae) {
  const NodeId neg = tape.constant(ae.negative_offset());
  const NodeId bt = tape.constant(ae.encoder_matrix());
  return tape.matmul(bt, tape.add_bias(x, neg));
}

void check_targets(const Mat& z, const PerceptualExtractor& psi, const TargetCache& targets,
                   const LinearAutoencoder& ae) {
  require(z.rows() == ae.latent_dim(), "g2: latent dimension mismatch");
  if (psi.kind() == ExtractorKind::none) return;
  if (targets.empty() || targets.features.cols() != z.cols() ||
      static_cast<Eigen::Index>(targets.item_ids.size()) != z.cols() ||
      targets.offsets != psi.block_offsets(ae.data_dim()))
    throw DomainError("g2: target cache missing or built for different items");
}

// Weighted per-column loss of a residual, and the matching seed 2 W r.
Vec weighted_loss(const Mat& residual, const TargetCache& targets, Mat* seed) {
  Vec value = Vec::Zero(residual.cols());
  if (seed != nullptr) seed->resize(residual.rows(), residual.cols());
  for (std::size_t b = 0; b + 1 < targets.offsets.size(); ++b) {
    const Eigen::Index at = targets.offsets[b];
    const Eigen::Index len = targets.offsets[b + 1] - at;
    for (Eigen::Index j = 0; j < residual.cols(); ++j) {
      const double w = targets.block_weights(static_cast<Eigen::Index>(b), j);
      value[j] += w * residual.col(j).segment(at, len).squaredNorm();
      if (seed != nullptr) seed->col(j).segment(at, len) = (2.0 * w) * residual.col(j).segment(at, len);
    }
  }
  return value;
}

}  // namespace

Mat PerceptualExtractor::features(const Mat& x, const LinearAutoencoder& ae,
                                  const std::vector<std::uint64_t>& item_ids) const {
  check_data(x, ae, item_ids);
  switch (kind_) {
    case ExtractorKind::none: return Mat(0, x.cols());
    case ExtractorKind::identity: return x;
    case ExtractorKind::linear:
      require(matrix_.cols() == x.rows(), "linear extractor: dimension mismatch");
      return matrix_ * x;
    case ExtractorKind::mlp: return forward(*mlp_, x).output;
    case ExtractorKind::scorenet: {
      const RunNoise noise = make_run_noise(run_.seed, item_ids, ae.latent_dim(), run_.steps);
      const UnguidedPass pass = unguided_pass(*net_, net_->schedule(), ae.encode(x), run_, noise);
      return concat_taps(pass.taps);
    }
  }
  return Mat(0, x.cols());
}

NodeId PerceptualExtractor::record(Tape& tape, NodeId x, const LinearAutoencoder& ae,
                                   const std::vector<std::uint64_t>& item_ids) const {
  check_data(tape.value(x), ae, item_ids);
  switch (kind_) {
    case ExtractorKind::none: return tape.constant(Mat(0, tape.value(x).cols()));
    case ExtractorKind::identity: return x;
    case ExtractorKind::linear: return tape.matmul(tape.constant(matrix_), x);
    case ExtractorKind::mlp: return record_mlp(tape, *mlp_, x, false).output;
    case ExtractorKind::scorenet: {
      const RunNoise noise = make_run_noise(run_.seed, item_ids, ae.latent_dim(), run_.steps);
      const NodeId z = record_encode(tape, x, ae);
      const RecordedPass pass = record_unguided_pass(tape, *net_, z, run_, noise);
      std::vector<NodeId> parts;
      for (const auto& step : pass.taps)
        for (const auto& [layer, node] : step) parts.push_back(node);
      return tape.concat_rows(parts);
    }
  }
  return x;
}

TargetCache precompute_targets(const PerceptualExtractor& psi, const Mat& y, const LinearAutoencoder& ae,
                               const std::vector<std::uint64_t>& item_ids) {
  TargetCache cache;
  cache.features = psi.features(y, ae, item_ids);
  cache.offsets = psi.block_offsets(ae.data_dim());
  cache.item_ids = item_ids;
  const auto blocks = static_cast<Eigen::Index>(cache.offsets.size() - 1);
  cache.block_weights = Mat::Ones(blocks, y.cols());
  if (psi.normalize_blocks()) {
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const Eigen::Index at = cache.offsets[static_cast<std::size_t>(b)];
      const Eigen::Index len = cache.offsets[static_cast<std::size_t>(b) + 1] - at;
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        const auto block = cache.features.col(j).segment(at, len);
        const double var = (block.array() - block.mean()).square().mean();
        if (var > 1e-24) cache.block_weights(b, j) = 1.0 / var;
      }
    }
  }
  if (psi.reduction() == LossReduction::mean && cache.features.rows() > 0)
    cache.block_weights /= static_cast<double>(cache.features.rows());
  return cache;
}

LossGrad g1_value_grad(const Mat& z, const Mat& y, const LinearAutoencoder& ae) {
  require(z.rows() == ae.latent_dim() && y.rows() == ae.data_dim() && z.cols() == y.cols(),
          "g1: shape mismatch");
  const Mat r = ae.decode(z) - y;
  return {r.colwise().squaredNorm().transpose(), 2.0 * (ae.encoder_matrix() * r)};
}

LossGrad g2_value_grad(const Mat& z, const PerceptualExtractor& psi, const TargetCache& targets,
                       const LinearAutoencoder& ae, bool need_grad) {
  check_targets(z, psi, targets, ae);
  const ExtractorKind kind = psi.kind();
  if (kind == ExtractorKind::none) return {Vec::Zero(z.cols()), Mat::Zero(z.rows(), z.cols())};
  if (need_grad && (kind == ExtractorKind::mlp || kind == ExtractorKind::scorenet))
    return g2_value_grad_reverse(z, psi, targets, ae);

  const Mat x = ae.decode(z);
  const Mat residual = psi.features(x, ae, targets.item_ids) - targets.features;
  Mat seed;
  LossGrad out{weighted_loss(residual, targets, need_grad ? &seed : nullptr), Mat::Zero(z.rows(), z.cols())};
  if (!need_grad) return out;
  if (kind == ExtractorKind::identity) {
    out.grad = ae.encoder_matrix() * seed;
  } else {
    out.grad = ae.encoder_matrix() * (psi.matrix().transpose() * seed);
  }
  return out;
}

LossGrad g2_value_grad_reverse(const Mat& z, const PerceptualExtractor& psi, const TargetCache& targets,
                               const LinearAutoencoder& ae) {
  check_targets(z, psi, targets, ae);
  if (psi.kind() == ExtractorKind::none) return {Vec::Zero(z.cols()), Mat::Zero(z.rows(), z.cols())};
  Tape tape;
  const NodeId zn = tape.leaf(z);
  const NodeId f = psi.record(tape, record_decode(tape, zn, ae), ae, targets.item_ids);
  tape.finalize(f);
  Mat seed;
  LossGrad out;
  out.value = weighted_loss(tape.value(f) - targets.features, targets, &seed);
  out.grad = tape.backward(seed)[zn];
  return out;
}

GuidanceLossReport summarize(const PmgUpdate& update, Eigen::Index column) {
  GuidanceLossReport r;
  r.g1 = update.g1[column];
  r.g2 = update.g2[column];
  if (update.grad1.size() > 0) r.grad1_norm = update.grad1.col(column).norm();
  if (update.grad2.size() > 0) r.grad2_norm = update.grad2.col(column).norm();
  return r;
}

}  // namespace pmg
