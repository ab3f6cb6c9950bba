#pragma once

// Multi-head attention with key/value token reduction.
//
// Self-attention compresses the key/value source from N tokens to N/R by
// folding R consecutive tokens into one row of width C*R and mapping it back
// to C with a learned linear layer. Attention cost drops from O(N^2) to
// O(N^2 / R).

#include <cstddef>
#include <string>

#include "transweather/layers.hpp"

namespace tw {

struct AttentionConfig {
  std::size_t embed_dim = 0;
  std::size_t num_heads = 1;
  std::size_t reduction_ratio = 1;

  std::size_t head_dim() const { return embed_dim / num_heads; }
  // Throws ConfigError unless C % h == 0 and R >= 1.
  void validate() const;
  // Throws ConfigError unless the token count is divisible by R.
  void validate_tokens(std::size_t tokens) const;
};

template <typename Real>
struct AttentionResult {
  Tensor<Real> output;   // [B, Nq, C]
  Tensor<Real> weights;  // [B, h, Nq, Nk], post-softmax
};

// softmax(q k^T / sqrt(d)) v on per-head tensors q[B,h,Nq,d], k/v[B,h,Nk,d].
template <typename Real>
AttentionResult<Real> scaled_dot_product(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v);

// [B, N, C] -> [B, h, N, C/h]
template <typename Real>
Tensor<Real> split_heads(const Tensor<Real>& x, std::size_t heads);
// [B, h, N, d] -> [B, N, h*d]
template <typename Real>
Tensor<Real> merge_heads(const Tensor<Real>& x);

template <typename Real>
class EfficientSelfAttention {
 public:
  EfficientSelfAttention() = default;
  // Q/K/V projections carry no bias; the output projection does. The
  // reduction map starts as the identity when R == 1.
  EfficientSelfAttention(ParameterStore<Real>& store, const std::string& name, AttentionConfig config);

  // x: [B, N, C] with N divisible by R.
  AttentionResult<Real> forward(const Tensor<Real>& x) const;
  Tensor<Real> operator()(const Tensor<Real>& x) const { return forward(x).output; }

  const AttentionConfig& config() const { return config_; }

 private:
  AttentionConfig config_;
  Linear<Real> query_;
  Linear<Real> reduce_;
  Linear<Real> key_;
  Linear<Real> value_;
  Linear<Real> out_;
};

template <typename Real>
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(ParameterStore<Real>& store, const std::string& name, AttentionConfig config);

  // queries: [B, Kq, C]; memory: [B, N, C]
  AttentionResult<Real> forward(const Tensor<Real>& queries, const Tensor<Real>& memory) const;

  const AttentionConfig& config() const { return config_; }

 private:
  AttentionConfig config_;
  Linear<Real> query_;
  Linear<Real> key_;
  Linear<Real> value_;
  Linear<Real> out_;
};

}  // namespace tw
