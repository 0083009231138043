#include "vern/tensor.hpp"

#include <cmath>
#include <sstream>

#include "vern/errors.hpp"

namespace vern {

Tensor::Tensor() : value_(std::make_shared<Matrix>(0, 0)) {}

Tensor::Tensor(std::size_t rows, std::size_t cols)
    : value_(std::make_shared<Matrix>(Matrix::Zero(static_cast<Eigen::Index>(rows),
                                                   static_cast<Eigen::Index>(cols)))) {}

Tensor::Tensor(Matrix value) : value_(std::make_shared<Matrix>(std::move(value))) {
  require_finite(*value_, "Tensor");
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double v) {
  return Tensor(Matrix::Constant(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols), v));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw ShapeError("from_rows: ragged row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                       " entries, expected " + std::to_string(c));
    }
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return Tensor(std::move(m));
}

Tensor Tensor::identity(std::size_t n) {
  return Tensor(Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string());
  return (*value_)(0, 0);
}

Matrix& Tensor::mutable_value() {
  if (value_.use_count() > 1) value_ = std::make_shared<Matrix>(*value_);
  tape_ = nullptr;
  node_ = 0;
  return *value_;
}

std::optional<NodeId> Tensor::handle() const {
  if (tape_ == nullptr) return std::nullopt;
  return node_;
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = 0;
  return t;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "(" << rows() << "x" << cols() << ")";
  return os.str();
}

Tensor Tape::leaf(const Tensor& t, std::string_view name) {
  if (consumed_) throw UsageError("tape already consumed by backward()");
  Node node;
  node.op = std::string(name);
  node.rows = t.rows();
  node.cols = t.cols();
  node.value = t.detached();
  nodes_.push_back(std::move(node));
  Tensor out = t.detached();
  out.tape_ = this;
  out.node_ = nodes_.size() - 1;
  return out;
}

Tensor Tape::record(std::string_view op, Matrix value, std::initializer_list<const Tensor*> inputs,
                    BackwardFn backward_fn) {
  if (consumed_) throw UsageError("tape already consumed by backward()");
  require_finite(value, op);
  Node node;
  node.op = std::string(op);
  for (const Tensor* in : inputs) {
    if (in->tape_ == nullptr) {
      node.parents.emplace_back(std::nullopt);
    } else if (in->tape_ != this) {
      throw UsageError(std::string(op) + ": input tracked on a different tape");
    } else {
      node.parents.emplace_back(in->node_);
    }
  }
  node.rows = static_cast<std::size_t>(value.rows());
  node.cols = static_cast<std::size_t>(value.cols());
  node.backward = std::move(backward_fn);
  Tensor out(std::move(value));
  node.value = out;
  nodes_.push_back(std::move(node));
  out.tape_ = this;
  out.node_ = nodes_.size() - 1;
  return out;
}

const Matrix& Gradients::of(const Tensor& t) const {
  if (t.tape() != tape_ || !t.handle()) throw UsageError("gradient requested for a tensor not on this tape");
  return grads_.at(*t.handle());
}

Matrix Gradients::take(const Tensor& t) {
  if (t.tape() != tape_ || !t.handle()) throw UsageError("gradient requested for a tensor not on this tape");
  return std::move(grads_.at(*t.handle()));
}

Gradients backward(Tape& tape, const Tensor& loss) {
  if (loss.tape() != &tape || !loss.handle()) throw UsageError("backward: loss is not tracked on this tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw UsageError("backward: loss must be 1x1, got " + loss.shape_string());
  }
  if (tape.consumed_) throw UsageError("backward: tape already consumed");
  tape.consumed_ = true;

  const NodeId root = *loss.handle();
  std::vector<Matrix> grads(tape.nodes_.size());
  std::vector<bool> reached(tape.nodes_.size(), false);
  grads[root] = Matrix::Ones(1, 1);
  reached[root] = true;

  std::vector<Matrix*> parent_ptrs;
  for (NodeId id = root + 1; id-- > 0;) {
    if (!reached[id]) continue;
    Tape::Node& node = tape.nodes_[id];
    if (!node.backward) continue;
    parent_ptrs.assign(node.parents.size(), nullptr);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      if (!node.parents[p]) continue;
      const NodeId pid = *node.parents[p];
      if (!reached[pid]) {
        const Tape::Node& pn = tape.nodes_[pid];
        grads[pid] = Matrix::Zero(static_cast<Eigen::Index>(pn.rows), static_cast<Eigen::Index>(pn.cols));
        reached[pid] = true;
      }
      parent_ptrs[p] = &grads[pid];
    }
    node.backward(grads[id], parent_ptrs);
  }

  for (NodeId id = 0; id < grads.size(); ++id) {
    if (!reached[id]) {
      const Tape::Node& n = tape.nodes_[id];
      grads[id] = Matrix::Zero(static_cast<Eigen::Index>(n.rows), static_cast<Eigen::Index>(n.cols));
    } else {
      require_finite(grads[id], "backward");
    }
  }

  Gradients out;
  out.tape_ = &tape;
  out.grads_ = std::move(grads);
  return out;
}

void require_finite(const Matrix& m, std::string_view where) {
  // x * 0 is NaN exactly when x is NaN or infinite; Eigen's allFinite() is
  // several times slower on large parameter blocks.
  if (m.size() > 0 && std::isnan((m.array() * 0.0).sum())) {
    throw NumericError(std::string(where) + ": non-finite value produced");
  }
}

}  // namespace vern
