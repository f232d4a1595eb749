#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dw/tensor.hpp"

/// Minimal reverse-mode automatic differentiation over `Tensor`.
///
/// A `Var` owns a node in a dynamically built graph. Operations create new
/// nodes whose backward closure accumulates into the parents' gradients.
/// Leaves created with `requires_grad = true` are parameters; their gradient
/// persists across `backward()` calls until `zero_grad()`.
namespace dw::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Gradient accumulated by the last backward pass (zeros if none reached this node).
  const Tensor& grad() const { return node_->ensure_grad(); }
  void zero_grad() {
    if (node_->grad.size() == node_->value.size()) node_->grad.fill(0.0);
  }

  double item() const { return node_->value[0]; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Creates a graph node. When gradients are disabled or no parent requires them,
/// the closure is dropped and the result is a constant.
Var make_result(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward_fn);

/// Runs the reverse pass from a scalar root (seeded with 1).
void backward(const Var& root);

bool grad_enabled();

/// Disables graph construction in the enclosing scope (inference of frozen models).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Var constant(Tensor value);
Var detach(const Var& a);

// Elementwise (operands must share a shape).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var pow_scalar(const Var& a, double p);
Var clamp_min(const Var& a, double lo);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var elu(const Var& a, double alpha = 1.0);
Var tanh(const Var& a);

// Reductions to a scalar of shape {1}.
Var sum(const Var& a);
Var mean(const Var& a);
Var mean_abs_diff(const Var& a, const Var& b);
/// Mean smooth-L1 (Huber with delta) of a - b.
Var smooth_l1_mean(const Var& a, const Var& b, double delta = 1.0);
/// Sum of several scalars with weights.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);

// Shape ops.
Var reshape(const Var& a, Shape shape);
/// Concatenation along `axis`.
Var concat(const std::vector<Var>& parts, int axis);
/// Slice [begin, end) along axis 0.
Var slice0(const Var& a, int begin, int end);

/// Rows of X [R, d_in] times W^T, W [d_out, d_in] -> [R, d_out].
Var linear_rows(const Var& x, const Var& w);

/// Sorts each row of a [..., L] tensor ascending along the last axis.
Var sort_last(const Var& a);

// NCHW image ops.
Var conv2d(const Var& x, const Var& w, const Var* bias, int stride, int pad);
Var upsample2x(const Var& x);
Var avg_pool2(const Var& x);
/// Separable per-channel filter, "valid" mode.
Var blur_valid(const Var& x, const std::vector<double>& kernel);
/// Mean over H, W -> [N, C].
Var spatial_mean(const Var& x);

}  // namespace dw::ag
