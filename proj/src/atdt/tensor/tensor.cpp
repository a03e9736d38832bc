#include "atdt/tensor/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "atdt/common/error.hpp"

namespace atdt {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw ContractViolation("tensor extents must be positive, got " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(static_cast<size_t>(atdt::numel(shape)), v);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> v, bool requires_grad) {
  if (atdt::numel(shape) != static_cast<int64_t>(v.size()))
    throw ContractViolation("from_vector: " + shape_str(shape) + " does not match buffer of " +
                            std::to_string(v.size()) + " elements");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(atdt::numel(shape)));
  for (auto& x : v) x = rng.gaussian() * stddev;
  return from_vector(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->value.size()); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
const std::vector<double>& Tensor::data() const { return node_->value; }
std::vector<double>& Tensor::mutable_data() { return node_->value; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) throw ContractViolation("grad accessed before backward populated it");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
  if (numel() != 1) throw ContractViolation("item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = false;
  return Tensor(std::move(n));
}

Tensor Tensor::make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward_fn) {
  if (atdt::numel(shape) != static_cast<int64_t>(value.size()))
    throw ContractViolation("make_op: shape/value size mismatch");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled()) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    if (rg) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (const auto& p : parents) n->parents.push_back(p.node());
      n->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(n));
}

void Tensor::backward() const {
  if (!defined()) throw ContractViolation("backward() on undefined tensor");
  if (numel() != 1) throw ContractViolation("backward() requires a scalar loss, got " + shape_str(shape()));

  // Iterative post-order DFS over parents; reverse topological order out.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  if (node_->requires_grad) stack.emplace_back(node_.get(), 0);
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx == 0 && seen.count(n)) {
      stack.pop_back();
      continue;
    }
    if (idx < n->parents.size()) {
      detail::Node* p = n->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) stack.emplace_back(p, 0);
    } else {
      seen.insert(n);
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace atdt
