#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace vern {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;
class Gradients;

using NodeId = std::size_t;

// Dense row-major 2-D matrix of doubles, optionally tracked on a Tape.
//
// Storage is shared between copies and copied on write, so passing tensors by
// value (and capturing them in backward closures) does not copy the payload.
class Tensor {
 public:
  Tensor();
  Tensor(std::size_t rows, std::size_t cols);
  explicit Tensor(Matrix value);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double v);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  std::size_t rows() const { return static_cast<std::size_t>(value_->rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(value_->cols()); }
  std::size_t size() const { return rows() * cols(); }

  const Matrix& value() const { return *value_; }
  std::span<const double> data() const { return {value_->data(), size()}; }
  double operator()(std::size_t r, std::size_t c) const { return (*value_)(r, c); }
  // Value of a 1x1 tensor.
  double item() const;

  // Mutable access detaches the tensor from any tape and from shared storage.
  Matrix& mutable_value();

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::optional<NodeId> handle() const;

  // Same values, no tape handle.
  Tensor detached() const;

  std::string shape_string() const;

 private:
  friend class Tape;
  std::shared_ptr<Matrix> value_;
  Tape* tape_ = nullptr;
  NodeId node_ = 0;
};

Gradients backward(Tape& tape, const Tensor& loss);

// Receives the upstream gradient of a node and accumulates into the gradients
// of its parents. Entries of `parent_grads` are null for untracked parents, so
// closures skip work nobody needs.
using BackwardFn = std::function<void(const Matrix& upstream, std::span<Matrix* const> parent_grads)>;

// Append-only record of tracked operations for one forward pass.
class Tape {
 public:
  struct Node {
    std::string op;
    std::vector<std::optional<NodeId>> parents;
    std::size_t rows = 0;
    std::size_t cols = 0;
    BackwardFn backward;
    // Kept for inspection (gradient checks look at pre-activation margins).
    Tensor value;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `t` as a leaf and returns a tracked view of the same values.
  Tensor leaf(const Tensor& t, std::string_view name = "leaf");

  // Records an operation result. `inputs` may mix tracked and untracked tensors;
  // tracked ones must live on this tape.
  Tensor record(std::string_view op, Matrix value, std::initializer_list<const Tensor*> inputs,
                BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  bool consumed() const { return consumed_; }

 private:
  friend Gradients backward(Tape& tape, const Tensor& loss);
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Gradient of a scalar loss with respect to every node on a tape.
class Gradients {
 public:
  // Gradient for a tracked tensor (zeros if the loss does not depend on it).
  const Matrix& of(const Tensor& t) const;
  const Matrix& of(NodeId id) const { return grads_.at(id); }
  // Moves the gradient out; later of() calls for the same tensor see an empty matrix.
  Matrix take(const Tensor& t);
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(Tape& tape, const Tensor& loss);
  const Tape* tape_ = nullptr;
  std::vector<Matrix> grads_;
};

// Reverse sweep from `loss` (a 1x1 tracked tensor). Each node is visited once;
// leaves the loss does not reach get zero gradients. A tape supports a single
// backward pass.
Gradients backward(Tape& tape, const Tensor& loss);

// Throws NumericError naming `where` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view where);

}  // namespace vern
