#pragma once

#include <string>

#include "transweather/ops.hpp"
#include "transweather/parameters.hpp"

namespace tw {

// Position-wise x * W + b with W stored as [in, out].
template <typename Real>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t out,
         bool with_bias = true, Init weight_init = Init::trunc_normal())
      : weight_(store.add(name + ".weight", {in, out}, weight_init)) {
    if (with_bias) bias_ = store.add(name + ".bias", {out}, Init::zeros());
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return linear(x, weight_, bias_); }

  const Tensor<Real>& weight() const { return weight_; }
  const Tensor<Real>& bias() const { return bias_; }

 private:
  Tensor<Real> weight_;
  Tensor<Real> bias_;
};

template <typename Real>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore<Real>& store, const std::string& name, std::size_t dim)
      : gamma_(store.add(name + ".gamma", {dim}, Init::ones())),
        beta_(store.add(name + ".beta", {dim}, Init::zeros())) {}

  Tensor<Real> operator()(const Tensor<Real>& x) const { return layernorm(x, gamma_, beta_); }

 private:
  Tensor<Real> gamma_;
  Tensor<Real> beta_;
};

template <typename Real>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t out,
         std::size_t kernel, Conv2dOptions options, bool trainable = true)
      : options_(options) {
    const std::size_t fan_in = in / options.groups * kernel * kernel;
    weight_ = store.add(name + ".weight", {out, in / options.groups, kernel, kernel},
                        Init::fan_in_uniform(fan_in), trainable);
    bias_ = store.add(name + ".bias", {out}, Init::zeros(), trainable);
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return conv2d(x, weight_, bias_, options_); }

  const Tensor<Real>& weight() const { return weight_; }
  const Conv2dOptions& options() const { return options_; }

 private:
  Tensor<Real> weight_;
  Tensor<Real> bias_;
  Conv2dOptions options_;
};

}  // namespace tw
