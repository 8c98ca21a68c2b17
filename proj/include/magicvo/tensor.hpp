#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "magicvo/errors.hpp"

namespace magicvo {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return inputs.empty(); }
};

}  // namespace detail

/// Handle to a node in the differentiation graph.
///
/// Copies share the underlying node, the same way autograd variables do in
/// most frameworks; use clone() for an independent deep copy. Leaves are
/// created with from()/zeros()/full(); every primitive op in ops.hpp returns a
/// new non-leaf tensor that remembers its inputs when any of them requires a
/// gradient.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  // Mutable access is intended for leaves (parameter updates, input filling).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool is_leaf() const;
  const char* op_name() const;

  /// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
  /// calls; intermediate gradients are rebuilt on every call.
  void backward() const;

  /// Deep copy of the values as a fresh leaf.
  Tensor clone(bool requires_grad = false) const;
  /// Same values, new leaf with no history.
  Tensor detach() const { return clone(false); }

  // Internal use by ops.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            const char* op,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward_fn);
  detail::Node& node() const;
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered view of everything reachable from a root tensor.
class Graph {
 public:
  static Graph reachable_from(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<detail::Node*>& nodes() const { return nodes_; }
  std::vector<std::string> op_names() const;

 private:
  std::vector<detail::Node*> nodes_;  // inputs precede their consumers
  std::vector<std::shared_ptr<detail::Node>> keep_alive_;
  friend class Tensor;
};

/// When enabled on the current thread, every op result is scanned for
/// non-finite values and a NumericError is thrown naming the op.
void set_check_finite(bool enabled);
bool check_finite_enabled();

class CheckFiniteScope {
 public:
  explicit CheckFiniteScope(bool enabled) : previous_(check_finite_enabled()) {
    set_check_finite(enabled);
  }
  ~CheckFiniteScope() { set_check_finite(previous_); }
  CheckFiniteScope(const CheckFiniteScope&) = delete;
  CheckFiniteScope& operator=(const CheckFiniteScope&) = delete;

 private:
  bool previous_;
};

/// Throws NumericError if any value (or gradient, when present) is not finite.
void assert_finite(const Tensor& t, const std::string& what);

}  // namespace magicvo
