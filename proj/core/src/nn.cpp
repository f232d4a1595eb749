#include "dw/nn.hpp"

#include <cmath>

namespace dw::nn {

ag::Var ParameterStore::add(const std::string& name, Tensor init, bool trainable) {
  DW_REQUIRE(!contains(name), ErrorCode::kInvalidConfig, "duplicate parameter name '" + name + "'");
  index_[name] = entries_.size();
  entries_.push_back({name, ag::Var(std::move(init), trainable), trainable});
  return entries_.back().var;
}

const ag::Var& ParameterStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  DW_REQUIRE(it != index_.end(), ErrorCode::kInvalidInput, "unknown parameter '" + name + "'");
  return entries_[it->second].var;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.var.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

void ParameterStore::set_trainable(bool trainable) {
  for (auto& e : entries_) {
    if (e.trainable) e.var.node()->requires_grad = trainable;
  }
}

Conv2d make_conv(ParameterStore& store, const std::string& name, int in, int out, int kernel, int stride,
                 RandomStream& rng, bool zero) {
  Tensor w({out, in, kernel, kernel});
  if (!zero) {
    const double std = std::sqrt(2.0 / (in * kernel * kernel));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
  }
  Conv2d c;
  c.w = store.add(name + ".weight", std::move(w));
  c.b = store.add(name + ".bias", Tensor({out}));
  c.stride = stride;
  c.pad = kernel / 2;
  return c;
}

BatchNorm2d make_batch_norm(ParameterStore& store, const std::string& name, int channels) {
  BatchNorm2d bn;
  bn.gamma = store.add(name + ".gamma", Tensor({channels}, 1.0));
  bn.beta = store.add(name + ".beta", Tensor({channels}));
  bn.running_mean = store.add(name + ".running_mean", Tensor({channels}), false);
  bn.running_var = store.add(name + ".running_var", Tensor({channels}, 1.0), false);
  return bn;
}

ag::Var BatchNorm2d::operator()(const ag::Var& x, bool training) const {
  DW_REQUIRE(x.shape().size() == 4 && x.dim(1) == static_cast<int>(gamma.size()), ErrorCode::kInvalidInput,
             "batch norm: bad input " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const double count = static_cast<double>(n * hw);
  std::vector<double> mu(c), inv_std(c);
  for (int ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0, ss = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = x.value().data() + (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      mu[ch] = s / count;
      for (int b = 0; b < n; ++b) {
        const double* p = x.value().data() + (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mu[ch]) * (p[i] - mu[ch]);
      }
      const double var = ss / count;
      inv_std[ch] = 1.0 / std::sqrt(var + eps);
      auto& rm = const_cast<ag::Var&>(running_mean).mutable_value();
      auto& rv = const_cast<ag::Var&>(running_var).mutable_value();
      rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mu[ch];
      rv[ch] = (1.0 - momentum) * rv[ch] + momentum * (count > 1 ? ss / (count - 1) : var);
    } else {
      mu[ch] = running_mean.value()[ch];
      inv_std[ch] = 1.0 / std::sqrt(running_var.value()[ch] + eps);
    }
  }
  Tensor xhat(x.shape()), out(x.shape());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xhat[off + i] = (x.value()[off + i] - mu[ch]) * inv_std[ch];
        out[off + i] = gamma.value()[ch] * xhat[off + i] + beta.value()[ch];
      }
    }
  return ag::make_result(std::move(out), {x, gamma, beta},
                         [xhat = std::move(xhat), inv_std, n, c, hw, count, training](ag::Node& self) {
    const Tensor& g = self.parents[1]->value;
    for (int ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_dy += self.grad[off + i];
          sum_dy_xhat += self.grad[off + i] * xhat[off + i];
        }
      }
      if (self.parents[1]->requires_grad) self.parents[1]->ensure_grad()[ch] += sum_dy_xhat;
      if (self.parents[2]->requires_grad) self.parents[2]->ensure_grad()[ch] += sum_dy;
      if (!self.parents[0]->requires_grad) continue;
      Tensor& gx = self.parents[0]->ensure_grad();
      const double k = g[ch] * inv_std[ch];
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          gx[off + i] += training ? k * (self.grad[off + i] - sum_dy / count - xhat[off + i] * sum_dy_xhat / count)
                                  : k * self.grad[off + i];
        }
      }
    }
  });
}

void Adam::step(const ParameterStore& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    ag::Var var = e.var;
    const Tensor& g = var.grad();
    auto [it, inserted] = moments_.try_emplace(e.name, Tensor(g.shape()), Tensor(g.shape()));
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    Tensor& w = var.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

}  // namespace dw::nn
