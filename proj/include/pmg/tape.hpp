#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "pmg/common.hpp"

namespace pmg {

using NodeId = std::size_t;

enum class OpTag : std::uint8_t {
  leaf,
  constant,
  matmul,
  add,
  sub,
  add_bias,
  lincomb,
  tanh,
  softplus,
  concat_rows,
  sum_squares,
  column_sum_squares,
};

// Elementwise kernels shared by the taped and untaped paths so both produce
// bitwise identical forward values.
Mat apply_tanh(const Mat& x);
Mat apply_softplus(const Mat& x);
Mat sigmoid(const Mat& x);

struct WeightedMat {
  const Mat* value;
  double coeff;
};

/// sum_i coeff_i * value_i accumulated left to right. Shared by Tape::lincomb
/// and the sampler arithmetic.
Mat linear_combination(std::span<const WeightedMat> terms);
inline Mat linear_combination(std::initializer_list<WeightedMat> terms) {
  return linear_combination(std::span<const WeightedMat>(terms.begin(), terms.size()));
}

class Gradients;

/// Append-only record of a dense matrix program, one node per matrix op.
///
/// Inputs of every node reference strictly earlier nodes. After finalize()
/// the tape can be differentiated any number of times with backward().
class Tape {
 public:
  struct Term {
    NodeId node;
    double coeff;
  };

  /// Differentiable input or parameter.
  NodeId leaf(Mat value);
  /// Input excluded from differentiation.
  NodeId constant(Mat value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  /// a + bias * 1^T with bias a column vector.
  NodeId add_bias(NodeId a, NodeId bias);
  /// sum_i coeff_i * x_i, evaluated left to right.
  NodeId lincomb(std::span<const Term> terms);
  NodeId lincomb(std::initializer_list<Term> terms) {
    return lincomb(std::span<const Term>(terms.begin(), terms.size()));
  }
  /// Like lincomb, but the caller supplies the forward value computed by a
  /// shared helper. The value must equal sum_i coeff_i * x_i.
  NodeId lincomb_with_value(std::span<const Term> terms, Mat value);
  NodeId tanh(NodeId a);
  NodeId softplus(NodeId a);
  NodeId concat_rows(std::span<const NodeId> parts);
  /// 1x1 sum of all squared entries.
  NodeId sum_squares(NodeId a);
  /// 1 x cols, per-column sum of squares.
  NodeId column_sum_squares(NodeId a);

  const Mat& value(NodeId id) const;
  OpTag op(NodeId id) const { return nodes_.at(id).op; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  void finalize(NodeId output);
  bool finalized() const { return finalized_; }
  NodeId output() const;

  /// Reverse sweep seeded with d(objective)/d(output). Throws DomainError
  /// when the tape is not finalized or the seed shape differs from the output.
  Gradients backward(const Mat& seed) const;

 private:
  struct Node {
    OpTag op;
    std::vector<NodeId> inputs;
    std::vector<double> coeffs;
    Mat value;
  };

  NodeId push(OpTag op, std::vector<NodeId> inputs, Mat value, std::vector<double> coeffs = {});
  void check_input(NodeId id) const;

  std::vector<Node> nodes_;
  NodeId output_ = 0;
  bool finalized_ = false;
};

/// Adjoints for every node reached by the reverse sweep.
class Gradients {
 public:
  bool has(NodeId id) const { return id < grads_.size() && present_[id]; }
  /// Zero matrix of the node's shape when the node received no gradient.
  Mat operator[](NodeId id) const;

 private:
  friend class Tape;
  std::vector<Mat> grads_;
  std::vector<bool> present_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes_;
};

}  // namespace pmg
