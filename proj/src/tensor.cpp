#include "pianotx/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace pianotx {

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= (size_t)d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace autograd {

namespace {
thread_local bool t_grad_enabled = true;
thread_local uint64_t t_seq = 0;
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev; }

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor make_node(Shape shape, std::vector<double> value,
                 std::vector<std::shared_ptr<Node>> parents,
                 std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  if (value.size() != shape_numel(shape))
    throw std::invalid_argument("make_node: data size does not match shape " +
                                shape_str(shape));
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = ++t_seq;
  bool track = t_grad_enabled;
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    track = any;
  }
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

}  // namespace autograd

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  size_t n = shape_numel(shape);
  return from_vector(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> data,
                           bool requires_grad) {
  Tensor t = autograd::make_node(std::move(shape), std::move(data), {}, nullptr);
  t.node_->requires_grad = requires_grad;
  return t;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::set_requires_grad(bool v) {
  if (v && node_->backward_fn)
    throw std::logic_error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = v;
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item() on tensor of size > 1");
  return node_->value[0];
}

double Tensor::at(const std::vector<int>& index) const {
  const Shape& s = node_->shape;
  if (index.size() != s.size()) throw std::invalid_argument("at(): rank mismatch");
  size_t off = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (index[i] < 0 || index[i] >= s[i]) throw std::out_of_range("at(): index");
    off = off * (size_t)s[i] + (size_t)index[i];
  }
  return node_->value[off];
}

Tensor Tensor::detach() const {
  autograd::NoGradGuard guard;
  return from_vector(node_->shape, node_->value, false);
}

void Tensor::backward() {
  using autograd::Node;
  if (numel() != 1) throw std::logic_error("backward() requires a scalar");
  if (!node_->requires_grad)
    throw std::logic_error("backward() on a tensor detached from any graph");

  // gather ancestors, order by descending creation index
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  node_->ensure_grad()[0] += 1.0;
  for (Node* n : order)
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
}

}  // namespace pianotx
