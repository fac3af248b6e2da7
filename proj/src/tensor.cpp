#include "skillnet/tensor.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

namespace skillnet {

namespace {

std::atomic<bool> g_finite_checks{false};
thread_local GradientTape* t_active_tape = nullptr;

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace detail {

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void Node::accumulate(std::span<const double> values) {
  if (!requires_grad) return;
  auto g = grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += values[i];
}

}  // namespace detail

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) { node_->data.assign(1, 0.0); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("Tensor::from: shape " + shape_to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " + std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->data[0];
}

Tensor Tensor::clone() const { return from(shape(), node_->data, requires_grad()); }

void GradientTape::record(std::shared_ptr<detail::Node> node) { nodes_.push_back(std::move(node)); }

void GradientTape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("GradientTape::backward called twice without reset()");
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  const auto& root = loss.node();
  if (!root->requires_grad) throw std::logic_error("backward: loss does not depend on any tracked tensor");

  consumed_ = true;
  root->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node.grad);
  }
}

void GradientTape::reset() {
  for (auto& node : nodes_) {
    node->backward = nullptr;
    node->parents.clear();
  }
  nodes_.clear();
  consumed_ = false;
}

TapeScope::TapeScope(GradientTape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }

GradientTape* active_tape() { return t_active_tape; }

Tensor make_op_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                      std::function<void(const std::vector<double>&)> backward) {
  if (finite_checks_enabled()) {
    for (double v : data) {
      if (!std::isfinite(v)) throw NonFiniteError("non-finite value produced with shape " + shape_to_string(shape));
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);

  GradientTape* tape = active_tape();
  bool tracked = false;
  if (tape != nullptr) {
    for (const Tensor* input : inputs) tracked = tracked || input->requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    for (const Tensor* input : inputs) node->parents.push_back(input->node());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

}  // namespace skillnet
