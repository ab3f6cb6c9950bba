#include "transweather/encoder.hpp"

#include "transweather/error.hpp"

namespace tw {

template <typename Real>
PatchEmbed<Real>::PatchEmbed(ParameterStore<Real>& store, const std::string& name, std::size_t in,
                             std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding)
    : conv_(store, name + ".conv", in, out, kernel, Conv2dOptions{stride, padding, 1}),
      norm_(store, name + ".norm", out) {}

template <typename Real>
TokenGrid<Real> PatchEmbed<Real>::operator()(const Tensor<Real>& x) const {
  const auto y = conv_(x);
  return {norm_(to_tokens(y)), y.dim(2), y.dim(3)};
}

template <typename Real>
PatchEmbed<Real> make_overlapped_patch_merge(ParameterStore<Real>& store, const std::string& name,
                                             std::size_t in, std::size_t out, std::size_t kernel,
                                             std::size_t stride) {
  if (kernel <= stride) {
    throw ConfigError(name + ": merge kernel " + std::to_string(kernel) + " must exceed stride " +
                      std::to_string(stride));
  }
  return PatchEmbed<Real>(store, name, in, out, kernel, stride, (kernel - 1) / 2);
}

template <typename Real>
DwcFfn<Real>::DwcFfn(ParameterStore<Real>& store, const std::string& name, std::size_t dim, std::size_t hidden_mult)
    : norm_(store, name + ".norm", dim),
      expand_(store, name + ".fc1", dim, dim * hidden_mult),
      dwc_(store, name + ".dwc", dim * hidden_mult, dim * hidden_mult, 3, Conv2dOptions{1, 1, dim * hidden_mult}),
      contract_(store, name + ".fc2", dim * hidden_mult, dim) {}

template <typename Real>
Tensor<Real> DwcFfn<Real>::operator()(const Tensor<Real>& x, std::size_t height, std::size_t width) const {
  const auto hidden = to_spatial(expand_(norm_(x)), height, width);
  return add(x, contract_(gelu(to_tokens(dwc_(hidden)))));
}

template <typename Real>
TransformerBlock<Real>::TransformerBlock(ParameterStore<Real>& store, const std::string& name,
                                         AttentionConfig attention, std::size_t hidden_mult)
    : norm_(store, name + ".norm", attention.embed_dim),
      attention_(store, name + ".attn", attention),
      ffn_(store, name + ".ffn", attention.embed_dim, hidden_mult) {}

template <typename Real>
Tensor<Real> TransformerBlock<Real>::operator()(const Tensor<Real>& x, std::size_t height, std::size_t width) const {
  return ffn_(add(x, attention_(norm_(x))), height, width);
}

template <typename Real>
Tensor<Real> split_quadrants(const Tensor<Real>& x) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw DimensionError("sub-patch split needs [B,C,H,W] with even H and W, got " + shape_str(x.shape()));
  }
  const std::size_t h = x.dim(2) / 2, w = x.dim(3) / 2;
  const auto top = slice(x, 2, 0, h);
  const auto bottom = slice(x, 2, h, h);
  return concat<Real>({slice(top, 3, 0, w), slice(top, 3, w, w), slice(bottom, 3, 0, w), slice(bottom, 3, w, w)}, 0);
}

template <typename Real>
Tensor<Real> merge_quadrants(const Tensor<Real>& x) {
  if (x.rank() != 4 || x.dim(0) % 4 != 0) {
    throw ContractError("sub-patch merge needs [4B,C,H,W], got " + shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0) / 4;
  const auto top = concat<Real>({slice(x, 0, 0, b), slice(x, 0, b, b)}, 3);
  const auto bottom = concat<Real>({slice(x, 0, 2 * b, b), slice(x, 0, 3 * b, b)}, 3);
  return concat<Real>({top, bottom}, 2);
}

template <typename Real>
IntraPatchTransformer<Real>::IntraPatchTransformer(ParameterStore<Real>& store, const std::string& name,
                                                   std::size_t in, const StageConfig& stage,
                                                   std::size_t hidden_mult)
    : merge_(make_overlapped_patch_merge(store, name + ".merge", in, stage.embed_dim, stage.merge_kernel,
                                         stage.stride)),
      block_(store, name + ".block", AttentionConfig{stage.embed_dim, stage.num_heads, stage.intra_pt_reduction},
             hidden_mult) {}

template <typename Real>
TokenGrid<Real> IntraPatchTransformer<Real>::operator()(const Tensor<Real>& stage_input) const {
  const auto sub = merge_(split_quadrants(stage_input));
  const auto out = to_spatial(block_(sub.tokens, sub.height, sub.width), sub.height, sub.width);
  return {to_tokens(merge_quadrants(out)), 2 * sub.height, 2 * sub.width};
}

template <typename Real>
EncoderStage<Real>::EncoderStage(ParameterStore<Real>& store, const std::string& name, std::size_t in,
                                 const StageConfig& stage, std::size_t hidden_mult, bool with_intra_pt)
    : merge_(make_overlapped_patch_merge(store, name + ".merge", in, stage.embed_dim, stage.merge_kernel,
                                         stage.stride)) {
  const AttentionConfig attention{stage.embed_dim, stage.num_heads, stage.reduction_ratio};
  for (std::size_t j = 0; j < stage.depth; ++j) {
    blocks_.emplace_back(store, name + ".block" + std::to_string(j), attention, hidden_mult);
  }
  norm_ = LayerNorm<Real>(store, name + ".norm", stage.embed_dim);
  if (with_intra_pt) intra_.emplace(store, name + ".intra", in, stage, hidden_mult);
}

template <typename Real>
Tensor<Real> EncoderStage<Real>::operator()(const Tensor<Real>& x) const {
  const auto grid = merge_(x);
  auto t = grid.tokens;
  for (const auto& block : blocks_) t = block(t, grid.height, grid.width);
  t = norm_(t);
  if (intra_) {
    const auto side = (*intra_)(x);
    if (side.height != grid.height || side.width != grid.width) {
      throw ContractError("intra-pt grid " + std::to_string(side.height) + "x" + std::to_string(side.width) +
                          " does not match main branch " + std::to_string(grid.height) + "x" +
                          std::to_string(grid.width));
    }
    t = add(t, side.tokens);
  }
  return to_spatial(t, grid.height, grid.width);
}

template <typename Real>
Encoder<Real>::Encoder(ParameterStore<Real>& store, const NetworkConfig& config)
    : hierarchical_(config.hierarchical) {
  config.validate();
  if (hierarchical_) {
    std::size_t in = 3;
    for (std::size_t i = 0; i < config.stages.size(); ++i) {
      const auto& stage = config.stages[i];
      stages_.emplace_back(store, "encoder.stage" + std::to_string(i + 1), in, stage, config.ffn_mult,
                           config.intra_pt);
      in = stage.embed_dim;
    }
    return;
  }
  // Single-scale baseline: one non-overlapping H/16 patch embedding and the
  // same total number of blocks at the first stage's width.
  const auto& first = config.stages.front();
  const std::size_t patch = config.total_stride();
  base_embed_ = PatchEmbed<Real>(store, "encoder.embed", 3, first.embed_dim, patch, patch, 0);
  std::size_t depth = 0;
  for (const auto& stage : config.stages) depth += stage.depth;
  for (std::size_t j = 0; j < depth; ++j) {
    base_blocks_.emplace_back(store, "encoder.block" + std::to_string(j),
                              AttentionConfig{first.embed_dim, first.num_heads, 1}, config.ffn_mult);
  }
  base_norm_ = LayerNorm<Real>(store, "encoder.norm", first.embed_dim);
}

template <typename Real>
FeaturePyramid<Real> Encoder<Real>::operator()(const Tensor<Real>& image) const {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw DimensionError("encoder expects [B,3,H,W], got " + shape_str(image.shape()));
  }
  FeaturePyramid<Real> pyramid;
  if (hierarchical_) {
    Tensor<Real> x = image;
    for (const auto& stage : stages_) {
      x = stage(x);
      pyramid.stages.push_back(x);
    }
    return pyramid;
  }
  const auto grid = base_embed_(image);
  auto t = grid.tokens;
  for (const auto& block : base_blocks_) t = block(t, grid.height, grid.width);
  pyramid.stages.push_back(to_spatial(base_norm_(t), grid.height, grid.width));
  return pyramid;
}

#define TW_INSTANTIATE(Real)                                                                            \
  template class PatchEmbed<Real>;                                                                      \
  template class DwcFfn<Real>;                                                                          \
  template class TransformerBlock<Real>;                                                                \
  template class IntraPatchTransformer<Real>;                                                           \
  template class EncoderStage<Real>;                                                                    \
  template class Encoder<Real>;                                                                         \
  template PatchEmbed<Real> make_overlapped_patch_merge(ParameterStore<Real>&, const std::string&,      \
                                                        std::size_t, std::size_t, std::size_t,          \
                                                        std::size_t);                                   \
  template Tensor<Real> split_quadrants(const Tensor<Real>&);                                           \
  template Tensor<Real> merge_quadrants(const Tensor<Real>&);

TW_INSTANTIATE(float)
TW_INSTANTIATE(double)

}  // namespace tw
