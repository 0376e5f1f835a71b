#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

// Reverse-mode autodiff core. Every op appends its result node to the
// implicit tape formed by creation order; backward() walks the reachable
// subgraph in exact reverse creation order, which is a reverse topological
// order because graphs are built by execution.

namespace pianotx {

using Shape = std::vector<int>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace autograd {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  size_t numel() const { return value.size(); }
  std::vector<double>& ensure_grad();
};

bool grad_enabled();

// Disables graph recording in scope (inference / target construction).
struct NoGradGuard {
  bool prev;
  NoGradGuard();
  ~NoGradGuard();
};

}  // namespace autograd

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> data,
                            bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(size_t i) const { return node_->shape[i]; }
  size_t rank() const { return node_->shape.size(); }
  size_t numel() const { return node_->numel(); }

  std::span<double> data() { return node_->value; }
  std::span<const double> data() const { return node_->value; }
  double* ptr() { return node_->value.data(); }
  const double* ptr() const { return node_->value.data(); }

  // gradient of a leaf after backward(); zeros if never touched
  std::span<const double> grad() const { return node_->ensure_grad(); }
  std::span<double> grad_mut() { return node_->ensure_grad(); }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v);

  double item() const;
  double at(const std::vector<int>& index) const;

  // leaf copy sharing no graph history
  Tensor detach() const;

  // reverse pass from this scalar; grads accumulate additively
  void backward();

  std::shared_ptr<autograd::Node> node_;  // ops construct/consume nodes directly
};

namespace autograd {

// Ops call this to build a result node. When recording is off or no parent
// requires grad, parents and backward_fn are dropped and the node is a leaf.
Tensor make_node(Shape shape, std::vector<double> value,
                 std::vector<std::shared_ptr<Node>> parents,
                 std::function<void(Node&)> backward_fn);

}  // namespace autograd

}  // namespace pianotx
