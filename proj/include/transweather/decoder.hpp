#pragma once

// Weather-type query decoder, task fusion and the convolutional projection tail.

#include <string>
#include <vector>

#include "transweather/attention.hpp"
#include "transweather/encoder.hpp"

namespace tw {

template <typename Real>
struct TaskFeature {
  Tensor<Real> decoded;    // [B, Kq, C4]
  Tensor<Real> pooled;     // [B, C4], mean over queries
  Tensor<Real> attention;  // [B, h, Kq, N4] from the last decoder block
};

template <typename Real>
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(ParameterStore<Real>& store, const std::string& name, AttentionConfig attention,
               std::size_t hidden_mult);

  // q += CA(LN(q), LN(memory)); q += MLP(GELU(MLP(LN(q))))
  AttentionResult<Real> forward(const Tensor<Real>& queries, const Tensor<Real>& memory) const;

 private:
  LayerNorm<Real> query_norm_;
  LayerNorm<Real> memory_norm_;
  CrossAttention<Real> attention_;
  LayerNorm<Real> ffn_norm_;
  Linear<Real> expand_;
  Linear<Real> contract_;
};

template <typename Real>
class WeatherDecoder {
 public:
  WeatherDecoder(ParameterStore<Real>& store, const std::string& name, std::size_t embed_dim,
                 std::size_t num_heads, std::size_t num_queries, std::size_t depth, std::size_t hidden_mult);

  // Keys and values come from the deepest pyramid level.
  TaskFeature<Real> operator()(const FeaturePyramid<Real>& pyramid) const;

  const Tensor<Real>& queries() const { return queries_; }

 private:
  Tensor<Real> queries_;  // [Kq, C4]
  std::vector<DecoderBlock<Real>> blocks_;
};

// Adds a per-stage linear projection of the pooled task vector to every
// spatial position of that stage.
template <typename Real>
class TaskFusion {
 public:
  TaskFusion(ParameterStore<Real>& store, const std::string& name, const std::vector<std::size_t>& stage_dims,
             std::size_t task_dim);

  FeaturePyramid<Real> operator()(const FeaturePyramid<Real>& pyramid, const TaskFeature<Real>& task) const;

 private:
  std::vector<Linear<Real>> maps_;
};

// Four (upsample x2, concat skip, conv3x3) layers; GELU between layers and
// tanh at the end. Skips are taken deepest-first from the pyramid below the
// last level; the full-resolution layer has none.
template <typename Real>
class ProjectionTail {
 public:
  ProjectionTail(ParameterStore<Real>& store, const std::string& name, const std::vector<std::size_t>& stage_dims,
                 const std::vector<std::size_t>& widths);

  Tensor<Real> operator()(const FeaturePyramid<Real>& pyramid) const;

 private:
  std::vector<Conv2d<Real>> convs_;
  std::size_t pyramid_levels_ = 0;
};

}  // namespace tw
