#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "atdt/common/rng.hpp"

namespace atdt {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Thread-local switch: when disabled, ops do not record the tape.
// Forward-only evaluation (validation, inference) runs under a guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Dense f64 n-d array with an optional reverse-mode tape. Handle semantics:
// copies share the underlying node. Values are immutable through the public
// surface except via mutable_data(), which exists for parameter updates and
// stat buffers.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> v, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  bool requires_grad() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();

  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if absent
  void zero_grad();

  // Scalar access; contract-checked.
  double item() const;

  // A tensor sharing this one's buffer but cut from the tape.
  Tensor detach() const;

  // Reverse pass from a scalar. Gradients accumulate across repeated calls.
  void backward() const;

  // --- op-construction surface (used by ops.cpp and the loss kernels) ---
  static Tensor make_op(Shape shape, std::vector<double> value,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward_fn);
  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

}  // namespace atdt
