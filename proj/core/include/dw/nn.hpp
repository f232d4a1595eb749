#pragma once

#include <map>
#include <string>
#include <vector>

#include "dw/autograd.hpp"
#include "dw/random.hpp"

/// Parameter bookkeeping, layers and the Adam optimiser.
namespace dw::nn {

/// Ordered named parameters. Trainable entries are gradient leaves; buffers
/// (batch-norm running statistics) are stored alongside but never optimised.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    ag::Var var;
    bool trainable;
  };

  ag::Var add(const std::string& name, Tensor init, bool trainable = true);
  const ag::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t parameter_count() const;
  void zero_grad();
  void set_trainable(bool trainable);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

struct Conv2d {
  ag::Var w;
  ag::Var b;
  int stride = 1;
  int pad = 1;
  ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, w, &b, stride, pad); }
};

/// He-normal weights, zero bias. `zero` initialises the weights to zero as well.
Conv2d make_conv(ParameterStore& store, const std::string& name, int in, int out, int kernel, int stride,
                 RandomStream& rng, bool zero = false);

struct BatchNorm2d {
  ag::Var gamma;
  ag::Var beta;
  ag::Var running_mean;
  ag::Var running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  /// Batch statistics when `training` (running stats updated), running stats otherwise.
  ag::Var operator()(const ag::Var& x, bool training) const;
};

BatchNorm2d make_batch_norm(ParameterStore& store, const std::string& name, int channels);

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update of every trainable parameter from its accumulated gradient.
  void step(const ParameterStore& params, double lr);
  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

}  // namespace dw::nn
