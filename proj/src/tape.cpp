#include "pmg/tape.hpp"

#include <cmath>
#include <string>

namespace pmg {

Mat apply_tanh(const Mat& x) { return x.array().tanh().matrix(); }

Mat apply_softplus(const Mat& x) {
  return x.unaryExpr([](double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
}

Mat sigmoid(const Mat& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Mat linear_combination(std::span<const WeightedMat> terms) {
  if (terms.empty()) throw DomainError("linear_combination: no terms");
  Mat out = terms[0].coeff * *terms[0].value;
  for (std::size_t i = 1; i < terms.size(); ++i) {
    const Mat& v = *terms[i].value;
    if (v.rows() != out.rows() || v.cols() != out.cols())
      throw DomainError("linear_combination: shape mismatch");
    out += terms[i].coeff * v;
  }
  return out;
}

NodeId Tape::push(OpTag op, std::vector<NodeId> inputs, Mat value, std::vector<double> coeffs) {
  if (finalized_) throw DomainError("tape: cannot append to a finalized tape");
  nodes_.push_back(Node{op, std::move(inputs), std::move(coeffs), std::move(value)});
  return nodes_.size() - 1;
}

void Tape::check_input(NodeId id) const {
  if (id >= nodes_.size()) throw DomainError("tape: input references unknown node");
}

NodeId Tape::leaf(Mat value) { return push(OpTag::leaf, {}, std::move(value)); }

NodeId Tape::constant(Mat value) { return push(OpTag::constant, {}, std::move(value)); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  check_input(a);
  check_input(b);
  const Mat& A = nodes_[a].value;
  const Mat& B = nodes_[b].value;
  if (A.cols() != B.rows()) throw DomainError("tape: matmul dimension mismatch");
  Mat out = A * B;
  return push(OpTag::matmul, {a, b}, std::move(out));
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_input(a);
  check_input(b);
  const Mat& A = nodes_[a].value;
  const Mat& B = nodes_[b].value;
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw DomainError("tape: add shape mismatch");
  Mat out = A + B;
  return push(OpTag::add, {a, b}, std::move(out));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check_input(a);
  check_input(b);
  const Mat& A = nodes_[a].value;
  const Mat& B = nodes_[b].value;
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw DomainError("tape: sub shape mismatch");
  Mat out = A - B;
  return push(OpTag::sub, {a, b}, std::move(out));
}

NodeId Tape::add_bias(NodeId a, NodeId bias) {
  check_input(a);
  check_input(bias);
  const Mat& A = nodes_[a].value;
  const Mat& b = nodes_[bias].value;
  if (b.cols() != 1 || b.rows() != A.rows()) throw DomainError("tape: add_bias shape mismatch");
  Mat out = A;
  out.colwise() += b.col(0);
  return push(OpTag::add_bias, {a, bias}, std::move(out));
}

NodeId Tape::lincomb(std::span<const Term> terms) {
  if (terms.empty()) throw DomainError("tape: lincomb needs at least one term");
  std::vector<WeightedMat> values;
  for (const Term& term : terms) {
    check_input(term.node);
    values.push_back({&nodes_[term.node].value, term.coeff});
  }
  return lincomb_with_value(terms, linear_combination(values));
}

NodeId Tape::lincomb_with_value(std::span<const Term> terms, Mat value) {
  std::vector<NodeId> ids;
  std::vector<double> coeffs;
  for (const Term& term : terms) {
    check_input(term.node);
    const Mat& v = nodes_[term.node].value;
    if (v.rows() != value.rows() || v.cols() != value.cols())
      throw DomainError("tape: lincomb shape mismatch");
    ids.push_back(term.node);
    coeffs.push_back(term.coeff);
  }
  return push(OpTag::lincomb, std::move(ids), std::move(value), std::move(coeffs));
}

NodeId Tape::tanh(NodeId a) {
  check_input(a);
  return push(OpTag::tanh, {a}, apply_tanh(nodes_[a].value));
}

NodeId Tape::softplus(NodeId a) {
  check_input(a);
  return push(OpTag::softplus, {a}, apply_softplus(nodes_[a].value));
}

NodeId Tape::concat_rows(std::span<const NodeId> parts) {
  if (parts.empty()) throw DomainError("tape: concat_rows needs at least one part");
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts[0]).cols();
  std::vector<double> offsets;
  for (NodeId p : parts) {
    check_input(p);
    if (nodes_[p].value.cols() != cols) throw DomainError("tape: concat_rows column mismatch");
    offsets.push_back(static_cast<double>(rows));
    rows += nodes_[p].value.rows();
  }
  Mat out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Mat& v = nodes_[parts[i]].value;
    out.middleRows(static_cast<Eigen::Index>(offsets[i]), v.rows()) = v;
  }
  return push(OpTag::concat_rows, std::vector<NodeId>(parts.begin(), parts.end()), std::move(out),
              std::move(offsets));
}

NodeId Tape::sum_squares(NodeId a) {
  check_input(a);
  Mat out(1, 1);
  out(0, 0) = nodes_[a].value.squaredNorm();
  return push(OpTag::sum_squares, {a}, std::move(out));
}

NodeId Tape::column_sum_squares(NodeId a) {
  check_input(a);
  Mat out = nodes_[a].value.colwise().squaredNorm();
  return push(OpTag::column_sum_squares, {a}, std::move(out));
}

const Mat& Tape::value(NodeId id) const {
  if (id >= nodes_.size()) throw DomainError("tape: unknown node");
  return nodes_[id].value;
}

void Tape::finalize(NodeId output) {
  check_input(output);
  output_ = output;
  finalized_ = true;
}

NodeId Tape::output() const {
  if (!finalized_) throw DomainError("tape: not finalized");
  return output_;
}

Gradients Tape::backward(const Mat& seed) const {
  if (!finalized_) throw DomainError("tape: backward on an unfinalized tape");
  const Mat& out = nodes_[output_].value;
  if (seed.rows() != out.rows() || seed.cols() != out.cols())
    throw DomainError("tape: seed gradient shape does not match output");

  Gradients g;
  g.grads_.resize(output_ + 1);
  g.present_.assign(output_ + 1, false);
  g.shapes_.reserve(nodes_.size());
  for (const Node& n : nodes_) g.shapes_.emplace_back(n.value.rows(), n.value.cols());

  auto accumulate = [&g, this](NodeId id, Mat contribution) {
    if (nodes_[id].op == OpTag::constant) return;
    if (g.present_[id]) {
      g.grads_[id] += contribution;
    } else {
      g.grads_[id] = std::move(contribution);
      g.present_[id] = true;
    }
  };

  g.grads_[output_] = seed;
  g.present_[output_] = true;

  for (NodeId id = output_ + 1; id-- > 0;) {
    if (!g.present_[id]) continue;
    const Node& n = nodes_[id];
    const Mat& up = g.grads_[id];
    switch (n.op) {
      case OpTag::leaf:
      case OpTag::constant:
        break;
      case OpTag::matmul: {
        const Mat& A = nodes_[n.inputs[0]].value;
        const Mat& B = nodes_[n.inputs[1]].value;
        if (nodes_[n.inputs[0]].op != OpTag::constant) accumulate(n.inputs[0], up * B.transpose());
        if (nodes_[n.inputs[1]].op != OpTag::constant) accumulate(n.inputs[1], A.transpose() * up);
        break;
      }
      case OpTag::add:
        accumulate(n.inputs[0], up);
        accumulate(n.inputs[1], up);
        break;
      case OpTag::sub:
        accumulate(n.inputs[0], up);
        accumulate(n.inputs[1], -up);
        break;
      case OpTag::add_bias:
        accumulate(n.inputs[0], up);
        accumulate(n.inputs[1], up.rowwise().sum());
        break;
      case OpTag::lincomb:
        for (std::size_t i = 0; i < n.inputs.size(); ++i) accumulate(n.inputs[i], n.coeffs[i] * up);
        break;
      case OpTag::tanh:
        accumulate(n.inputs[0], up.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case OpTag::softplus:
        accumulate(n.inputs[0], up.cwiseProduct(sigmoid(nodes_[n.inputs[0]].value)));
        break;
      case OpTag::concat_rows:
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const Eigen::Index rows = nodes_[n.inputs[i]].value.rows();
          accumulate(n.inputs[i], up.middleRows(static_cast<Eigen::Index>(n.coeffs[i]), rows));
        }
        break;
      case OpTag::sum_squares:
        accumulate(n.inputs[0], 2.0 * up(0, 0) * nodes_[n.inputs[0]].value);
        break;
      case OpTag::column_sum_squares: {
        const Mat& a = nodes_[n.inputs[0]].value;
        Mat d = 2.0 * a;
        for (Eigen::Index j = 0; j < a.cols(); ++j) d.col(j) *= up(0, j);
        accumulate(n.inputs[0], std::move(d));
        break;
      }
    }
  }
  return g;
}

Mat Gradients::operator[](NodeId id) const {
  if (id >= shapes_.size()) throw DomainError("gradients: unknown node");
  if (has(id)) return grads_[id];
  return Mat::Zero(shapes_[id].first, shapes_[id].second);
}

}  // namespace pmg
