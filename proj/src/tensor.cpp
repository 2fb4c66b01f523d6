#include "sdm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace sdm {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data) {
  for (std::size_t e : shape) require(e > 0, ErrorKind::shape, "tensor extents must be positive, got " + to_string(shape));
  require(numel(shape) == data.size(), ErrorKind::shape,
          "data length " + std::to_string(data.size()) + " does not match shape " + to_string(shape));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

const detail::Node& deref(const std::shared_ptr<detail::Node>& node) {
  require(node != nullptr, ErrorKind::state, "use of an undefined tensor");
  return *node;
}

}  // namespace

void check_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorKind::numeric, std::string("non-finite value produced by ") + where);
  }
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = sdm::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  check_finite(data, "tensor construction");
  return Tensor(new_node(std::move(shape), std::move(data)));
}

const Shape& Tensor::shape() const { return deref(node_).shape; }

std::size_t Tensor::extent(std::size_t axis) const {
  const Shape& s = shape();
  require(axis < s.size(), ErrorKind::shape, "axis " + std::to_string(axis) + " out of range for " + to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return deref(node_).data.size(); }

std::span<const double> Tensor::data() const { return deref(node_).data; }

std::span<double> Tensor::mutable_data() {
  require(is_leaf(), ErrorKind::state, "mutable_data() is only available on leaf tensors");
  return node_->data;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  require(numel() == 1, ErrorKind::shape, "item() needs a single-element tensor, got " + to_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  require(index.size() == s.size(), ErrorKind::shape, "index rank mismatch for " + to_string(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    require(i < s[axis], ErrorKind::shape, "index out of range for " + to_string(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  require(is_leaf(), ErrorKind::state, "requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !deref(node_).grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& n = deref(node_);
  if (n.grad.empty()) return std::vector<double>(n.data.size(), 0.0);
  return n.grad;
}

void Tensor::zero_grad() {
  deref(node_);
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  const auto& n = deref(node_);
  return Tensor(new_node(n.shape, n.data));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.node_->requires_grad = requires_grad() && is_leaf();
  return t;
}

bool Tensor::is_leaf() const { return deref(node_).is_leaf(); }

Tensor make_result(const char* name, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   detail::OpRecord::BackwardFn fn) {
  check_finite(data, name);
  auto node = new_node(std::move(shape), std::move(data));
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any) {
    auto rec = std::make_shared<detail::OpRecord>();
    rec->name = name;
    rec->inputs.reserve(inputs.size());
    for (auto& t : inputs) {
      require(t.node()->creator == nullptr || !t.node()->creator->consumed, ErrorKind::state,
              std::string(name) + ": input belongs to a consumed tape");
      rec->inputs.push_back(t.node());
    }
    rec->backward = std::move(fn);
    node->requires_grad = true;
    node->creator = std::move(rec);
  }
  return Tensor::from_node(std::move(node));
}

Tape Tape::record_from(const Tensor& loss) {
  Tape tape;
  const auto& root = loss.node();
  require(root != nullptr, ErrorKind::state, "backward on an undefined tensor");
  if (root->is_leaf()) return tape;

  // Iterative post-order DFS; post-order of a DAG is a topological order.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto& inputs = node->creator->inputs;
    if (next < inputs.size()) {
      auto child = inputs[next++];
      if (!child->is_leaf() && child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& n : order_) names.emplace_back(n->creator->name);
  return names;
}

bool Tape::is_topological() const {
  std::unordered_map<const detail::Node*, std::size_t> position;
  for (std::size_t i = 0; i < order_.size(); ++i) position[order_[i].get()] = i;
  for (std::size_t i = 0; i < order_.size(); ++i) {
    for (const auto& in : order_[i]->creator->inputs) {
      auto it = position.find(in.get());
      if (it != position.end() && it->second >= i) return false;
    }
  }
  return true;
}

void Tape::run_backward(const Tensor& loss) {
  const auto& root = loss.node();
  if (root->is_leaf()) {
    if (root->requires_grad) root->grad_buffer()[0] += 1.0;
    return;
  }
  for (const auto& n : order_) {
    require(!n->creator->consumed, ErrorKind::state, "backward called twice on the same tape; re-run the forward pass");
  }
  root->grad_buffer()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node& node = **it;
    auto& rec = *node.creator;
    if (!node.grad.empty()) rec.backward(node, rec.inputs);
    rec.consumed = true;
    rec.backward = nullptr;
    // Intermediate gradients are not retained past their use.
    node.grad.clear();
    node.grad.shrink_to_fit();
  }
}

void backward(const Tensor& loss) {
  require(loss.defined(), ErrorKind::state, "backward on an undefined tensor");
  require(loss.numel() == 1, ErrorKind::shape, "backward needs a scalar loss, got shape " + to_string(loss.shape()));
  if (!loss.is_leaf()) {
    require(!loss.node()->creator->consumed, ErrorKind::state,
            "backward called twice on the same tape; re-run the forward pass");
  }
  Tape::record_from(loss).run_backward(loss);
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  require(h > 0.0, ErrorKind::domain, "grad_check step must be positive");
  const Shape shape = x.shape();
  const std::vector<double> base = x.to_vector();

  auto eval = [&](const std::vector<double>& values) {
    Tensor y = f(Tensor::from(shape, values));
    require(y.numel() == 1, ErrorKind::shape, "grad_check needs a scalar-valued function");
    return y.item();
  };

  const double y0 = eval(base);
  const double y1 = eval(base);
  require(y0 == y1, ErrorKind::state, "grad_check: function is not deterministic");

  Tensor leaf = Tensor::from(shape, base);
  leaf.set_requires_grad(true);
  Tensor y = f(leaf);
  backward(y);
  const std::vector<double> analytic = leaf.grad();

  std::vector<double> numeric(base.size());
  std::vector<double> probe = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    probe[i] = base[i] + h;
    const double fp = eval(probe);
    probe[i] = base[i] - h;
    const double fm = eval(probe);
    probe[i] = base[i];
    numeric[i] = (fp - fm) / (2.0 * h);
  }

  double scale = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    scale = std::max(scale, std::abs(numeric[i]));
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]));
  }
  return worst / std::max(scale, 1e-12);
}

}  // namespace sdm
