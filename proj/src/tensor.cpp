#include "magicvo/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace magicvo {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool t_check_finite = false;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values,
                                       bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return node;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void set_check_finite(bool enabled) { t_check_finite = enabled; }
bool check_finite_enabled() { return t_check_finite; }

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
  }
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

detail::Node& Tensor::node() const {
  if (!node_) throw ContractError("tensor: use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node().data.size(); }

std::span<const double> Tensor::data() const { return node().data; }
std::span<double> Tensor::mutable_data() { return node().data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("tensor: item() on non-scalar shape " + shape_str(shape()));
  }
  return node().data[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }
void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("tensor: requires_grad can only be set on leaves");
  node().requires_grad = on;
}

bool Tensor::has_grad() const { return !node().grad.empty(); }
std::span<const double> Tensor::grad() const { return node().grad; }
std::span<double> Tensor::mutable_grad() {
  auto& n = node();
  if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
  return n.grad;
}
void Tensor::zero_grad() {
  auto& n = node();
  if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

bool Tensor::is_leaf() const { return node().is_leaf(); }
const char* Tensor::op_name() const { return node().op; }

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(new_node(shape(), node().data, requires_grad));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           const char* op, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward_fn) {
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  auto node = new_node(std::move(shape), std::move(values), needs_grad);
  node->op = op;
  if (t_check_finite && !all_finite(node->data)) {
    throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  }
  if (needs_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

Graph Graph::reachable_from(const Tensor& root) {
  Graph g;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root.node_ptr()};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (const auto& in : n->inputs) stack.push_back(in);
    g.keep_alive_.push_back(std::move(n));
  }
  // Sequence numbers are assigned at creation, and a node's inputs always
  // exist before it does, so ascending seq is a topological order.
  std::sort(g.keep_alive_.begin(), g.keep_alive_.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  g.nodes_.reserve(g.keep_alive_.size());
  for (const auto& n : g.keep_alive_) g.nodes_.push_back(n.get());
  return g;
}

std::vector<std::string> Graph::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto* n : nodes_) names.emplace_back(n->op);
  return names;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(shape()));
  }
  if (!requires_grad()) return;

  const Graph graph = Graph::reachable_from(*this);
  for (auto* n : graph.nodes()) {
    if (!n->requires_grad) continue;
    if (!n->is_leaf()) {
      n->grad.assign(n->data.size(), 0.0);
    } else if (n->grad.empty()) {
      n->grad.assign(n->data.size(), 0.0);
    }
  }
  node().grad[0] += 1.0;

  const auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    detail::Node* n = *it;
    if (n->is_leaf() || !n->requires_grad || !n->backward_fn) continue;
    n->backward_fn(*n);
  }
}

void assert_finite(const Tensor& t, const std::string& what) {
  if (!all_finite(t.data())) throw NumericError(what + ": non-finite value");
  if (t.has_grad() && !all_finite(t.grad())) {
    throw NumericError(what + ": non-finite gradient");
  }
}

}  // namespace magicvo
