#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fgsgt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Receives the upstream gradient of an op's output and accumulates into the
/// op's inputs.
using BackwardFn = std::function<void(std::span<const double> grad_out)>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // lazily sized to values.size()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;  // empty for leaves
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major array of doubles with reverse-mode differentiation.
///
/// A Tensor is a handle: copies share storage and graph position, like a
/// shared_ptr. Use detach() for an independent value copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);
  /// Keeps a braced value list from binding to the requires_grad overload.
  Tensor(Shape shape, std::initializer_list<double> values, bool requires_grad = false)
      : Tensor(std::move(shape), std::vector<double>(values), requires_grad) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  /// Records the result of a differentiable op. The backward function is only
  /// kept when grad mode is on and at least one input requires grad.
  static Tensor from_op(const char* op, Shape shape, std::vector<double> values,
                        const std::vector<Tensor>& inputs, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return values().size(); }

  std::span<const double> values() const;
  std::span<double> values_mut();
  std::span<const double> grad() const;
  std::span<double> grad_mut() const;
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  const char* op_name() const;
  void zero_grad();

  Tensor detach() const;

  /// Accumulates d(this)/d(leaf) into every reachable leaf with
  /// requires_grad. Intermediate gradients are recomputed from scratch on
  /// every call, so a second call adds the same gradient again.
  void backward() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  detail::Node& node() const;

  std::shared_ptr<detail::Node> node_;
};

}  // namespace fgsgt
