#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sdm/error.hpp"

namespace sdm {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node;

/// One recorded operation. The backward function receives the output node
/// (whose grad is populated) and the inputs, and accumulates into every input
/// that requires a gradient.
struct OpRecord {
  using BackwardFn = std::function<void(const Node& out, std::span<const std::shared_ptr<Node>> inputs)>;

  const char* name = "";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  bool consumed = false;
};

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<OpRecord> creator;  // null for leaves and constants

  bool is_leaf() const { return creator == nullptr; }
  std::vector<double>& grad_buffer();  // allocates zeros on first use
};

}  // namespace detail

/// Dense row-major double tensor with reverse-mode differentiation.
///
/// A Tensor is a shared handle: copies alias the same node. Data is immutable
/// after construction except through `mutable_data()` on leaves, which is how
/// optimizers update parameters.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view for leaves only. Throws a state error on op outputs.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  /// Marks a leaf as a differentiation target.
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const;
  /// Accumulated gradient; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Deep copy as a fresh leaf (requires_grad preserved).
  Tensor clone() const;

  bool is_leaf() const;

  // Internal plumbing for op implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered record of the operations reachable from a loss.
class Tape {
 public:
  /// Collects every op record the loss depends on, producers first.
  static Tape record_from(const Tensor& loss);

  std::size_t size() const { return order_.size(); }
  std::vector<std::string> op_names() const;
  /// True when each op appears after the producers of all of its inputs.
  bool is_topological() const;

  /// Runs the reverse pass with d(loss)/d(loss) = 1, then marks every record
  /// consumed and drops saved forward state.
  void run_backward(const Tensor& loss);

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;  // non-leaf nodes
};

/// Populates grad of every requires_grad leaf reachable from `loss`.
/// Errors: non-scalar loss; graph already consumed by an earlier backward.
void backward(const Tensor& loss);

/// Builds the output tensor of an op. When any input requires grad the output
/// is attached to the graph with `fn` as its reverse rule; otherwise it is a
/// constant. Output values are checked to be finite.
Tensor make_result(const char* name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, detail::OpRecord::BackwardFn fn);

void check_finite(std::span<const double> values, const char* where);

/// Central finite-difference check of d f / d x.
///
/// Returns max_i |analytic_i - numeric_i| / max(max_j |numeric_j|, tiny). The
/// function is evaluated twice at the base point; if the two values differ the
/// function is non-deterministic and a state error is thrown.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

}  // namespace sdm
