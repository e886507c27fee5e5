#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double-precision arrays. Every op records a closure on the output node;
// Tensor::backward() replays them in reverse topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace poselift::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // lazily allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  // Empty when no gradient reached this tensor.
  std::span<const double> grad() const { return node_->grad; }
  std::vector<double>& grad_storage() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  double item() const;
  // Seeds d(self)/d(self) = 1; self must hold a single element.
  void backward() const;

  // A leaf copy sharing no graph history.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Tensor make_op(Shape, std::vector<double>, const std::vector<Tensor>&,
                        std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

// Creates an op output. The backward closure and input references are kept
// only when gradient recording is on and some input requires a gradient.
Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
               std::function<void(Node&)> backward);

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

// Floating-point operation accounting for forward evaluation. Ops add their
// nominal arithmetic cost; the counter is thread-local.
namespace flops {
void add(std::uint64_t n);
std::uint64_t count();
void reset();

class Scope {
 public:
  Scope();
  ~Scope();
  std::uint64_t elapsed() const;

 private:
  std::uint64_t start_;
};
}  // namespace flops

}  // namespace poselift::ad
