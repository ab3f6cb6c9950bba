#pragma once

// Hierarchical transformer encoder.
//
// Each stage merges overlapping patches (strided conv + layernorm), runs
// `depth` transformer blocks over the token grid and adds the Intra-PT side
// branch, which processes the 2x2 sub-patch split of the stage input:
//
//   Y_i = MT_i(X_i) + IntraPT_i(P(X_i))

#include <optional>
#include <string>
#include <vector>

#include "transweather/attention.hpp"
#include "transweather/layers.hpp"
#include "transweather/network_config.hpp"

namespace tw {

template <typename Real>
struct FeaturePyramid {
  // [B, C_i, H_i, W_i], shallowest first.
  std::vector<Tensor<Real>> stages;
};

template <typename Real>
struct TokenGrid {
  Tensor<Real> tokens;  // [B, H*W, C]
  std::size_t height = 0;
  std::size_t width = 0;
};

// Strided convolution followed by a channel layernorm; yields tokens.
template <typename Real>
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t out,
             std::size_t kernel, std::size_t stride, std::size_t padding);

  TokenGrid<Real> operator()(const Tensor<Real>& x) const;

 private:
  Conv2d<Real> conv_;
  LayerNorm<Real> norm_;
};

// Overlapped merge: kernel k > stride s, padding (k - 1) / 2.
template <typename Real>
PatchEmbed<Real> make_overlapped_patch_merge(ParameterStore<Real>& store, const std::string& name,
                                             std::size_t in, std::size_t out, std::size_t kernel,
                                             std::size_t stride);

// x + MLP(GELU(DWC(MLP(LN(x))))) with a 3x3 depth-wise conv over the hidden width.
template <typename Real>
class DwcFfn {
 public:
  DwcFfn() = default;
  DwcFfn(ParameterStore<Real>& store, const std::string& name, std::size_t dim, std::size_t hidden_mult);

  Tensor<Real> operator()(const Tensor<Real>& x, std::size_t height, std::size_t width) const;

 private:
  LayerNorm<Real> norm_;
  Linear<Real> expand_;
  Conv2d<Real> dwc_;
  Linear<Real> contract_;
};

// y = FFN(MSA(LN(x)) + x)
template <typename Real>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore<Real>& store, const std::string& name, AttentionConfig attention,
                   std::size_t hidden_mult);

  Tensor<Real> operator()(const Tensor<Real>& x, std::size_t height, std::size_t width) const;

 private:
  LayerNorm<Real> norm_;
  EfficientSelfAttention<Real> attention_;
  DwcFfn<Real> ffn_;
};

// P(): [B, C, H, W] -> [4B, C, H/2, W/2], quadrants stacked on the batch axis
// in the order top-left, top-right, bottom-left, bottom-right.
template <typename Real>
Tensor<Real> split_quadrants(const Tensor<Real>& x);
// Inverse of split_quadrants.
template <typename Real>
Tensor<Real> merge_quadrants(const Tensor<Real>& x);

// Intra-patch transformer: one merge + one block shared by all four
// sub-patches of a stage input.
template <typename Real>
class IntraPatchTransformer {
 public:
  IntraPatchTransformer() = default;
  IntraPatchTransformer(ParameterStore<Real>& store, const std::string& name, std::size_t in,
                        const StageConfig& stage, std::size_t hidden_mult);

  // stage_input: [B, C_in, H, W] with even H, W. Returns [B, N, C_i] on the
  // same grid as the stage's main branch.
  TokenGrid<Real> operator()(const Tensor<Real>& stage_input) const;

 private:
  PatchEmbed<Real> merge_;
  TransformerBlock<Real> block_;
};

template <typename Real>
class EncoderStage {
 public:
  EncoderStage() = default;
  EncoderStage(ParameterStore<Real>& store, const std::string& name, std::size_t in, const StageConfig& stage,
               std::size_t hidden_mult, bool with_intra_pt);

  // [B, C_in, H, W] -> [B, C_i, H / s, W / s]
  Tensor<Real> operator()(const Tensor<Real>& x) const;

 private:
  PatchEmbed<Real> merge_;
  std::vector<TransformerBlock<Real>> blocks_;
  LayerNorm<Real> norm_;
  std::optional<IntraPatchTransformer<Real>> intra_;
};

template <typename Real>
class Encoder {
 public:
  Encoder(ParameterStore<Real>& store, const NetworkConfig& config);

  FeaturePyramid<Real> operator()(const Tensor<Real>& image) const;

 private:
  // Hierarchical stages, or a single non-overlapping patch embedding followed
  // by plain transformer blocks for the non-hierarchical baseline.
  std::vector<EncoderStage<Real>> stages_;
  PatchEmbed<Real> base_embed_;
  std::vector<TransformerBlock<Real>> base_blocks_;
  LayerNorm<Real> base_norm_;
  bool hierarchical_ = true;
};

}  // namespace tw
