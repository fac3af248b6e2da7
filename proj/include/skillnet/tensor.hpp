#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace skillnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// When enabled, every op result is scanned for NaN/Inf and throws NonFiniteError.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  // Empty means "no gradient reached this node".
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const std::vector<double>& out_grad)> backward;

  // Adds `values` into grad, allocating it on first touch.
  void accumulate(std::span<const double> values);
  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 array. Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Direct writes bypass the tape; only meant for leaf parameters.
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t flat_index) const { return node_->data.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_op_result(Shape, std::vector<double>, std::initializer_list<const Tensor*>,
                               std::function<void(const std::vector<double>&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Records differentiable ops in creation order, which is a topological order.
class GradientTape {
 public:
  void record(std::shared_ptr<detail::Node> node);

  // Populates grad on every requires_grad tensor reachable from `loss`.
  void backward(const Tensor& loss);

  // Drops recorded nodes; required before a second backward.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  bool consumed_ = false;
};

// Makes `tape` the active recording target for this thread until destruction.
class TapeScope {
 public:
  explicit TapeScope(GradientTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradientTape* previous_;
};

GradientTape* active_tape();

// Builds an op output. If a tape is active and any input requires grad, the
// result is recorded with `backward`; otherwise it is a constant.
Tensor make_op_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                      std::function<void(const std::vector<double>&)> backward);

}  // namespace skillnet
