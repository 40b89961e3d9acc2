#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pmg/common.hpp"
#include "pmg/tape.hpp"

namespace pmg {

/// Smooth activations only; tags match the checkpoint byte.
enum class Activation : std::uint8_t { identity = 0, tanh = 1, smooth_relu = 2 };

Mat activate(Activation act, const Mat& pre);

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
  Activation activation = Activation::identity;
};

class Mlp {
 public:
  Mlp() = default;
  /// Validates dimension chaining and finiteness.
  explicit Mlp(std::vector<DenseLayer> layers);

  /// dims = {in, h1, ..., out}. Hidden layers use `hidden`, the last layer `output`.
  /// Weights ~ N(0, 1/fan_in), biases zero.
  static Mlp random(const std::vector<int>& dims, Activation hidden, Activation output,
                    std::uint64_t seed);

  int input_dim() const;
  int output_dim() const;
  std::size_t layer_count() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  std::size_t parameter_count() const;
  /// Weights (column-major) then bias, layer by layer.
  Vec flatten() const;
  void unflatten(const Vec& params);

 private:
  std::vector<DenseLayer> layers_;
};

/// Node ids of a network recorded on a tape.
struct RecordedMlp {
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
  std::vector<NodeId> activations;
  NodeId output = 0;
};

/// Appends the network to `tape`; parameters become leaves when `trainable`,
/// constants otherwise.
RecordedMlp record_mlp(Tape& tape, const Mlp& m, NodeId input, bool trainable);

/// Gradient of the recorded program with respect to the parameters, in flatten() order.
Vec flatten_gradients(const Gradients& g, const RecordedMlp& rec, const Mlp& m);

struct MlpForward {
  Mat output;
  /// Post-activation output of every layer, the last one equal to `output`.
  std::vector<Mat> activations;
  /// Present iff recording was requested; the tape is finalized on `output`
  /// with the input as a leaf node.
  std::optional<Tape> tape;
  std::optional<RecordedMlp> recorded;
  NodeId input_node = 0;
};

/// x holds one sample per column.
MlpForward forward(const Mlp& m, const Mat& x, bool record = false);

}  // namespace pmg
