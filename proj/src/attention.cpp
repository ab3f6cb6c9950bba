#include "transweather/attention.hpp"

#include <cmath>

#include "transweather/error.hpp"

namespace tw {

void AttentionConfig::validate() const {
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
    throw ConfigError("attention: embed_dim " + std::to_string(embed_dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (reduction_ratio == 0) throw ConfigError("attention: reduction ratio must be >= 1");
}

void AttentionConfig::validate_tokens(std::size_t tokens) const {
  if (tokens == 0 || tokens % reduction_ratio != 0) {
    throw ConfigError("attention: token count " + std::to_string(tokens) +
                      " not divisible by reduction ratio " + std::to_string(reduction_ratio));
  }
}

template <typename Real>
Tensor<Real> split_heads(const Tensor<Real>& x, std::size_t heads) {
  const std::size_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  return permute(reshape(x, Shape{b, n, heads, c / heads}), {0, 2, 1, 3});
}

template <typename Real>
Tensor<Real> merge_heads(const Tensor<Real>& x) {
  const std::size_t b = x.dim(0), h = x.dim(1), n = x.dim(2), d = x.dim(3);
  return reshape(permute(x, {0, 2, 1, 3}), Shape{b, n, h * d});
}

template <typename Real>
AttentionResult<Real> scaled_dot_product(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v) {
  const std::size_t d = q.dim(-1);
  const Real inv_sqrt_d = Real(1) / std::sqrt(static_cast<Real>(d));
  const auto scores = scale(matmul(q, transpose(k, -2, -1)), inv_sqrt_d);
  auto weights = softmax(scores, -1);
  auto out = matmul(weights, v);
  return {std::move(out), std::move(weights)};
}

template <typename Real>
EfficientSelfAttention<Real>::EfficientSelfAttention(ParameterStore<Real>& store, const std::string& name,
                                                     AttentionConfig config)
    : config_(config) {
  config_.validate();
  const std::size_t c = config_.embed_dim;
  const std::size_t r = config_.reduction_ratio;
  query_ = Linear<Real>(store, name + ".q", c, c, false);
  reduce_ = Linear<Real>(store, name + ".reduce", c * r, c, false,
                         r == 1 ? Init::identity() : Init::trunc_normal());
  key_ = Linear<Real>(store, name + ".k", c, c, false);
  value_ = Linear<Real>(store, name + ".v", c, c, false);
  out_ = Linear<Real>(store, name + ".proj", c, c, true);
}

template <typename Real>
AttentionResult<Real> EfficientSelfAttention<Real>::forward(const Tensor<Real>& x) const {
  if (x.rank() != 3 || x.dim(2) != config_.embed_dim) {
    throw DimensionError("self-attention expects [B,N," + std::to_string(config_.embed_dim) + "], got " +
                         shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  const std::size_t r = config_.reduction_ratio;
  config_.validate_tokens(n);

  const auto q = query_(x);
  // (N, C) -> (N/R, C*R) -> (N/R, C)
  const auto reduced = reduce_(reshape(x, Shape{b, n / r, c * r}));
  const auto k = key_(reduced);
  const auto v = value_(reduced);

  const std::size_t h = config_.num_heads;
  auto attn = scaled_dot_product(split_heads(q, h), split_heads(k, h), split_heads(v, h));
  attn.output = out_(merge_heads(attn.output));
  return attn;
}

template <typename Real>
CrossAttention<Real>::CrossAttention(ParameterStore<Real>& store, const std::string& name, AttentionConfig config)
    : config_(config) {
  config_.validate();
  const std::size_t c = config_.embed_dim;
  query_ = Linear<Real>(store, name + ".q", c, c, false);
  key_ = Linear<Real>(store, name + ".k", c, c, false);
  value_ = Linear<Real>(store, name + ".v", c, c, false);
  out_ = Linear<Real>(store, name + ".proj", c, c, true);
}

template <typename Real>
AttentionResult<Real> CrossAttention<Real>::forward(const Tensor<Real>& queries, const Tensor<Real>& memory) const {
  const std::size_t c = config_.embed_dim;
  if (queries.rank() != 3 || memory.rank() != 3 || queries.dim(2) != c || memory.dim(2) != c ||
      queries.dim(0) != memory.dim(0)) {
    throw DimensionError("cross-attention: queries " + shape_str(queries.shape()) + " and memory " +
                         shape_str(memory.shape()) + " must share batch and embed dim " + std::to_string(c));
  }
  const std::size_t h = config_.num_heads;
  auto attn = scaled_dot_product(split_heads(query_(queries), h), split_heads(key_(memory), h),
                                 split_heads(value_(memory), h));
  attn.output = out_(merge_heads(attn.output));
  return attn;
}

template class EfficientSelfAttention<float>;
template class EfficientSelfAttention<double>;
template class CrossAttention<float>;
template class CrossAttention<double>;
template AttentionResult<float> scaled_dot_product(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template AttentionResult<double> scaled_dot_product(const Tensor<double>&, const Tensor<double>&,
                                                    const Tensor<double>&);
template Tensor<float> split_heads(const Tensor<float>&, std::size_t);
template Tensor<double> split_heads(const Tensor<double>&, std::size_t);
template Tensor<float> merge_heads(const Tensor<float>&);
template Tensor<double> merge_heads(const Tensor<double>&);

}  // namespace tw
