#include "transweather/decoder.hpp"

#include "transweather/error.hpp"

namespace tw {

template <typename Real>
DecoderBlock<Real>::DecoderBlock(ParameterStore<Real>& store, const std::string& name, AttentionConfig attention,
                                 std::size_t hidden_mult)
    : query_norm_(store, name + ".norm_q", attention.embed_dim),
      memory_norm_(store, name + ".norm_kv", attention.embed_dim),
      attention_(store, name + ".attn", attention),
      ffn_norm_(store, name + ".norm_ffn", attention.embed_dim),
      expand_(store, name + ".fc1", attention.embed_dim, attention.embed_dim * hidden_mult),
      contract_(store, name + ".fc2", attention.embed_dim * hidden_mult, attention.embed_dim) {}

template <typename Real>
AttentionResult<Real> DecoderBlock<Real>::forward(const Tensor<Real>& queries, const Tensor<Real>& memory) const {
  auto attn = attention_.forward(query_norm_(queries), memory_norm_(memory));
  const auto q = add(queries, attn.output);
  attn.output = add(q, contract_(gelu(expand_(ffn_norm_(q)))));
  return attn;
}

template <typename Real>
WeatherDecoder<Real>::WeatherDecoder(ParameterStore<Real>& store, const std::string& name, std::size_t embed_dim,
                                     std::size_t num_heads, std::size_t num_queries, std::size_t depth,
                                     std::size_t hidden_mult)
    : queries_(store.add(name + ".queries", {num_queries, embed_dim}, Init::trunc_normal())) {
  for (std::size_t j = 0; j < depth; ++j) {
    blocks_.emplace_back(store, name + ".block" + std::to_string(j), AttentionConfig{embed_dim, num_heads, 1},
                         hidden_mult);
  }
}

template <typename Real>
TaskFeature<Real> WeatherDecoder<Real>::operator()(const FeaturePyramid<Real>& pyramid) const {
  const auto memory = to_tokens(pyramid.stages.back());
  const std::size_t b = memory.dim(0);
  TaskFeature<Real> task;
  auto q = broadcast_to(queries_, Shape{b, queries_.dim(0), queries_.dim(1)});
  for (const auto& block : blocks_) {
    auto out = block.forward(q, memory);
    q = out.output;
    task.attention = out.weights;
  }
  task.pooled = mean_axis(q, 1);
  task.decoded = q;
  return task;
}

template <typename Real>
TaskFusion<Real>::TaskFusion(ParameterStore<Real>& store, const std::string& name,
                             const std::vector<std::size_t>& stage_dims, std::size_t task_dim) {
  for (std::size_t i = 0; i < stage_dims.size(); ++i) {
    maps_.emplace_back(store, name + ".stage" + std::to_string(i + 1), task_dim, stage_dims[i]);
  }
}

template <typename Real>
FeaturePyramid<Real> TaskFusion<Real>::operator()(const FeaturePyramid<Real>& pyramid,
                                                  const TaskFeature<Real>& task) const {
  if (pyramid.stages.size() != maps_.size()) {
    throw ContractError("task fusion built for " + std::to_string(maps_.size()) + " levels, pyramid has " +
                        std::to_string(pyramid.stages.size()));
  }
  FeaturePyramid<Real> fused;
  for (std::size_t i = 0; i < maps_.size(); ++i) {
    const auto v = maps_[i](task.pooled);
    fused.stages.push_back(add(pyramid.stages[i], reshape(v, Shape{v.dim(0), v.dim(1), 1, 1})));
  }
  return fused;
}

template <typename Real>
ProjectionTail<Real>::ProjectionTail(ParameterStore<Real>& store, const std::string& name,
                                     const std::vector<std::size_t>& stage_dims,
                                     const std::vector<std::size_t>& widths)
    : pyramid_levels_(stage_dims.size()) {
  std::size_t in = stage_dims.back();
  for (std::size_t l = 0; l < widths.size(); ++l) {
    std::size_t skip = 0;
    if (l + 1 < pyramid_levels_) skip = stage_dims[pyramid_levels_ - 2 - l];
    convs_.emplace_back(store, name + ".conv" + std::to_string(l + 1), in + skip, widths[l], 3,
                        Conv2dOptions{1, 1, 1});
    in = widths[l];
  }
}

template <typename Real>
Tensor<Real> ProjectionTail<Real>::operator()(const FeaturePyramid<Real>& pyramid) const {
  if (pyramid.stages.size() != pyramid_levels_) {
    throw ContractError("projection tail built for " + std::to_string(pyramid_levels_) + " levels, pyramid has " +
                        std::to_string(pyramid.stages.size()));
  }
  Tensor<Real> x = pyramid.stages.back();
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    x = upsample_nearest(x, 2);
    if (l + 1 < pyramid_levels_) {
      const auto& skip = pyramid.stages[pyramid_levels_ - 2 - l];
      if (skip.dim(2) != x.dim(2) || skip.dim(3) != x.dim(3)) {
        throw ContractError("tail layer " + std::to_string(l + 1) + ": upsampled " + shape_str(x.shape()) +
                            " does not match skip " + shape_str(skip.shape()));
      }
      x = concat<Real>({x, skip}, 1);
    }
    x = convs_[l](x);
    x = l + 1 < convs_.size() ? gelu(x) : tanh(x);
  }
  return x;
}

template class DecoderBlock<float>;
template class DecoderBlock<double>;
template class WeatherDecoder<float>;
template class WeatherDecoder<double>;
template class TaskFusion<float>;
template class TaskFusion<double>;
template class ProjectionTail<float>;
template class ProjectionTail<double>;

}  // namespace tw
