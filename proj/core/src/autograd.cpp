#include "dw/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace dw {

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace dw

namespace dw::ag {

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  DW_REQUIRE(a.shape() == b.shape(), ErrorCode::kInvalidInput,
             std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor& pgrad(Node& self, std::size_t i) { return self.parents[i]->ensure_grad(); }
bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
  Tensor out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_result(std::move(out), {a}, [dfdx](Node& self) {
    const auto& x = self.parents[0]->value;
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * dfdx(x[i], self.value[i]);
  });
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var make_result(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward_fn) {
  Var out(std::move(value));
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(parents.size());
  for (const auto& p : parents) node.parents.push_back(p.node());
  node.backward_fn = std::move(backward_fn);
  return out;
}

void backward(const Var& root) {
  DW_REQUIRE(root.size() == 1, ErrorCode::kInvalidInput, "backward() needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients start from zero on every pass; leaves accumulate.
  for (Node* n : order) {
    if (n->backward_fn) n->grad = Tensor(n->value.shape());
  }
  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Tensor value) { return Var(std::move(value), false); }
Var detach(const Var& a) { return Var(a.value(), false); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(self, k)) continue;
      Tensor& g = pgrad(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) {
      Tensor& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      Tensor& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    if (wants(self, 0)) {
      Tensor& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (wants(self, 1)) {
      Tensor& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& y = self.parents[1]->value;
    if (wants(self, 0)) {
      Tensor& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / y[i];
    }
    if (wants(self, 1)) {
      Tensor& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / y[i];
    }
  });
}

Var scale(const Var& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var pow_scalar(const Var& a, double p) {
  return unary(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

Var clamp_min(const Var& a, double lo) {
  return unary(
      a, [lo](double x) { return x < lo ? lo : x; }, [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Var relu(const Var& a) { return clamp_min(a, 0.0); }

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var elu(const Var& a, double alpha) {
  return unary(
      a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
      [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sum(const Var& a) {
  const auto& x = a.value().vec();
  Tensor out({1}, std::accumulate(x.begin(), x.end(), 0.0));
  return make_result(std::move(out), {a}, [](Node& self) {
    Tensor& g = pgrad(self, 0);
    const double s = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean(const Var& a) {
  const auto& x = a.value().vec();
  const double n = static_cast<double>(x.size());
  Tensor out({1}, std::accumulate(x.begin(), x.end(), 0.0) / n);
  return make_result(std::move(out), {a}, [n](Node& self) {
    Tensor& g = pgrad(self, 0);
    const double s = self.grad[0] / n;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean_abs_diff(const Var& a, const Var& b) {
  require_same_shape(a, b, "mean_abs_diff");
  const double n = static_cast<double>(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a.value()[i] - b.value()[i]);
  return make_result(Tensor({1}, acc / n), {a, b}, [n](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    const double s = self.grad[0] / n;
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(self, k)) continue;
      Tensor& g = pgrad(self, k);
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = x[i] - y[i];
        g[i] += sign * s * static_cast<double>((d > 0.0) - (d < 0.0));
      }
    }
  });
}

Var smooth_l1_mean(const Var& a, const Var& b, double delta) {
  require_same_shape(a, b, "smooth_l1_mean");
  const double n = static_cast<double>(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a.value()[i] - b.value()[i]);
    acc += d < delta ? 0.5 * d * d / delta : d - 0.5 * delta;
  }
  return make_result(Tensor({1}, acc / n), {a, b}, [n, delta](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    const double s = self.grad[0] / n;
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(self, k)) continue;
      Tensor& g = pgrad(self, k);
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = x[i] - y[i];
        const double dd = std::abs(d) < delta ? d / delta : static_cast<double>((d > 0.0) - (d < 0.0));
        g[i] += sign * s * dd;
      }
    }
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  DW_REQUIRE(terms.size() == weights.size(), ErrorCode::kInvalidInput, "weighted_sum: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    DW_REQUIRE(terms[i].size() == 1, ErrorCode::kInvalidInput, "weighted_sum: terms must be scalars");
    acc += weights[i] * terms[i].item();
  }
  return make_result(Tensor({1}, acc), terms, [weights](Node& self) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (wants(self, k)) pgrad(self, k)[0] += weights[k] * self.grad[0];
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a}, [](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  DW_REQUIRE(!parts.empty(), ErrorCode::kInvalidInput, "concat: no inputs");
  const Shape& ref = parts[0].shape();
  const int rank = static_cast<int>(ref.size());
  DW_REQUIRE(axis >= 0 && axis < rank, ErrorCode::kInvalidInput, "concat: bad axis");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= ref[i];
  for (int i = axis + 1; i < rank; ++i) inner *= ref[i];
  Shape out_shape = ref;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    DW_REQUIRE(static_cast<int>(p.shape().size()) == rank, ErrorCode::kInvalidInput, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      DW_REQUIRE(i == axis || p.shape()[i] == ref[i], ErrorCode::kInvalidInput,
                 "concat: incompatible shapes " + shape_str(p.shape()) + " vs " + shape_str(ref));
    }
    out_shape[axis] += p.shape()[axis];
    widths.push_back(static_cast<std::size_t>(p.shape()[axis]) * inner);
  }
  const std::size_t row = static_cast<std::size_t>(out_shape[axis]) * inner;
  Tensor out(out_shape);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * widths[k], widths[k], out.data() + o * row + col);
    }
    col += widths[k];
  }
  return make_result(std::move(out), parts, [widths, outer, row](Node& self) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (wants(self, k)) {
        Tensor& g = pgrad(self, k);
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * row + col;
          double* dst = g.data() + o * widths[k];
          for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
        }
      }
      col += widths[k];
    }
  });
}

Var slice0(const Var& a, int begin, int end) {
  DW_REQUIRE(begin >= 0 && begin < end && end <= a.dim(0), ErrorCode::kInvalidInput, "slice0: bad range");
  const std::size_t inner = a.size() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy_n(a.value().data() + begin * inner, out.size(), out.data());
  return make_result(std::move(out), {a}, [begin, inner](Node& self) {
    Tensor& g = pgrad(self, 0);
    double* dst = g.data() + begin * inner;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

Var sort_last(const Var& a) {
  const int len = a.shape().back();
  const std::size_t rows = a.size() / len;
  Tensor out(a.shape());
  std::vector<std::size_t> perm(a.size());
  std::vector<std::size_t> idx(len);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = a.value().data() + r * len;
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [src](std::size_t i, std::size_t j) { return src[i] < src[j]; });
    for (int k = 0; k < len; ++k) {
      out[r * len + k] = src[idx[k]];
      perm[r * len + k] = r * len + idx[k];
    }
  }
  return make_result(std::move(out), {a}, [perm = std::move(perm)](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < perm.size(); ++i) g[perm[i]] += self.grad[i];
  });
}

}  // namespace dw::ag
