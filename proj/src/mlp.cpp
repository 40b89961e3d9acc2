#include "pmg/mlp.hpp"

#include <cmath>
#include <string>

#include "pmg/random.hpp"

namespace pmg {

Mat activate(Activation act, const Mat& pre) {
  switch (act) {
    case Activation::identity:
      return pre;
    case Activation::tanh:
      return apply_tanh(pre);
    case Activation::smooth_relu:
      return apply_softplus(pre);
  }
  throw DomainError("mlp: unknown activation");
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  require(!layers_.empty(), "mlp: needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& l = layers_[i];
    require(l.weight.rows() == l.bias.size(), "mlp: bias length must equal weight rows");
    require(l.weight.rows() > 0 && l.weight.cols() > 0, "mlp: empty layer");
    if (i > 0)
      require(l.weight.cols() == layers_[i - 1].weight.rows(),
              "mlp: layer " + std::to_string(i) + " input does not chain");
    require(l.weight.allFinite() && l.bias.allFinite(), "mlp: non-finite parameters");
  }
}

Mlp Mlp::random(const std::vector<int>& dims, Activation hidden, Activation output,
                std::uint64_t seed) {
  require(dims.size() >= 2, "mlp: dims needs input and output");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    require(dims[i] > 0 && dims[i + 1] > 0, "mlp: dims must be positive");
    DenseLayer l;
    l.weight = standard_normal(dims[i + 1], dims[i], rng) / std::sqrt(static_cast<double>(dims[i]));
    l.bias = Vec::Zero(dims[i + 1]);
    l.activation = i + 2 == dims.size() ? output : hidden;
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

int Mlp::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int Mlp::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vec Mlp::flatten() const {
  Vec out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  for (const DenseLayer& l : layers_) {
    out.segment(at, l.weight.size()) = l.weight.reshaped();
    at += l.weight.size();
    out.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return out;
}

void Mlp::unflatten(const Vec& params) {
  require(params.size() == static_cast<Eigen::Index>(parameter_count()),
          "mlp: parameter vector length mismatch");
  Eigen::Index at = 0;
  for (DenseLayer& l : layers_) {
    l.weight.reshaped() = params.segment(at, l.weight.size());
    at += l.weight.size();
    l.bias = params.segment(at, l.bias.size());
    at += l.bias.size();
  }
}

RecordedMlp record_mlp(Tape& tape, const Mlp& m, NodeId input, bool trainable) {
  if (tape.value(input).rows() != m.input_dim()) throw DomainError("mlp: input dimension mismatch");
  RecordedMlp rec;
  NodeId h = input;
  for (const DenseLayer& l : m.layers()) {
    const NodeId w = trainable ? tape.leaf(l.weight) : tape.constant(l.weight);
    const NodeId b = trainable ? tape.leaf(Mat(l.bias)) : tape.constant(Mat(l.bias));
    const NodeId pre = tape.add_bias(tape.matmul(w, h), b);
    switch (l.activation) {
      case Activation::identity:
        h = pre;
        break;
      case Activation::tanh:
        h = tape.tanh(pre);
        break;
      case Activation::smooth_relu:
        h = tape.softplus(pre);
        break;
    }
    rec.weights.push_back(w);
    rec.biases.push_back(b);
    rec.activations.push_back(h);
  }
  rec.output = h;
  return rec;
}

Vec flatten_gradients(const Gradients& g, const RecordedMlp& rec, const Mlp& m) {
  Vec out(static_cast<Eigen::Index>(m.parameter_count()));
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    const Mat gw = g[rec.weights[i]];
    out.segment(at, gw.size()) = gw.reshaped();
    at += gw.size();
    const Mat gb = g[rec.biases[i]];
    out.segment(at, gb.size()) = gb.reshaped();
    at += gb.size();
  }
  return out;
}

MlpForward forward(const Mlp& m, const Mat& x, bool record) {
  if (x.rows() != m.input_dim()) throw DomainError("mlp: input dimension mismatch");
  MlpForward out;
  if (record) {
    Tape tape;
    out.input_node = tape.leaf(x);
    RecordedMlp rec = record_mlp(tape, m, out.input_node, true);
    for (NodeId a : rec.activations) out.activations.push_back(tape.value(a));
    out.output = tape.value(rec.output);
    tape.finalize(rec.output);
    out.tape = std::move(tape);
    out.recorded = std::move(rec);
    return out;
  }
  Mat h = x;
  for (const DenseLayer& l : m.layers()) {
    Mat pre = l.weight * h;
    pre.colwise() += l.bias;
    h = activate(l.activation, pre);
    out.activations.push_back(h);
  }
  out.output = h;
  return out;
}

}  // namespace pmg
