#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "brgcn/tensor.hpp"

namespace brgcn {

/// A named learnable tensor. `grad` accumulates across backward passes until
/// zeroed; it always has the shape of `value` once touched.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool requires_grad = true;

  void zero_grad() { grad = Tensor(value.shape()); }
};

/// Ordered collection of parameters with stable addresses.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

  std::vector<Parameter*> pointers();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive ops in execution order and replays them backwards.
///
/// Nodes are appended in topological order, so reverse traversal visits each
/// op exactly once after all of its consumers. Gradients accumulate
/// additively wherever a value fans out.
class Tape {
 public:
  /// Backward closure: reads the node's output grad via `tape.grad(self)` and
  /// adds into the grads of its inputs.
  using BackwardFn = std::function<void(Tape& tape, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. Repeated calls return the same node.
  Var param(Parameter& p);

  /// Appends a new op. Throws NumericError naming `op` if `value` is not
  /// finite. `fn` is dropped when no input needs a gradient.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1, runs the reverse sweep, then adds leaf grads
  /// into the bound parameters.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].grad_ready; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool grad_ready = false;
    bool needs_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

namespace ad {

// Elementwise binary ops broadcast when the shapes are identical, when one
// side has a single element, or when a rank-1 operand matches the column count
// of a rank-2 operand (added to every row).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var neg(Var a);

/// (m x k)(k x n), (m x k)(k) -> (m), (k)(k x n) -> (n).
Var matmul(Var a, Var b);
Var transpose(Var a);
Var dot(Var a, Var b);

/// Rank-1 inputs concatenate into a rank-1 result; rank-2 inputs join along
/// `axis`.
Var concat(std::span<const Var> parts, std::size_t axis = 0);
/// Stacks equal-length rank-1 vectors as the rows of a matrix.
Var stack(std::span<const Var> rows);
/// Gathers entries (rank 1) or rows/columns (rank 2) by index.
Var index_select(Var a, std::size_t axis, std::vector<std::size_t> indices);
Var take_row(Var a, std::size_t row);
Var reshape(Var a, Shape shape);

Var sum(Var a);
Var sum(Var a, std::size_t axis);
Var mean(Var a);

Var exp(Var a);
Var log(Var a);
/// log(max(x, floor)); entries below the floor get zero gradient. Each clamped
/// entry increments `*clamped` when provided.
Var log_clamped(Var a, double floor, std::size_t* clamped = nullptr);
Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var sigmoid(Var a);
/// Softmax along the last axis, computed with max subtraction.
Var softmax(Var a);
/// Euclidean norm of all entries (axis omitted) or of each row (axis = 1).
Var l2_norm(Var a);
Var l2_norm(Var a, std::size_t axis);

}  // namespace ad
}  // namespace brgcn
