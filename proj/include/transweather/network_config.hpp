#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace tw {

struct StageConfig {
  std::size_t depth = 2;
  std::size_t embed_dim = 16;
  std::size_t num_heads = 1;
  std::size_t reduction_ratio = 1;
  std::size_t stride = 2;
  std::size_t merge_kernel = 3;
  // Reduction ratio of this stage's Intra-PT block.
  std::size_t intra_pt_reduction = 8;
};

// Toy-scale architecture. The defaults give H/16 at the last stage so the
// four x2 upsamples of the projection tail return to full resolution.
struct NetworkConfig {
  std::array<StageConfig, 4> stages{{
      {2, 16, 1, 4, 2, 3, 8},
      {2, 32, 2, 2, 2, 3, 8},
      {2, 64, 4, 2, 2, 3, 4},
      {2, 128, 8, 1, 2, 3, 1},
  }};
  std::size_t ffn_mult = 4;
  std::size_t num_queries = 8;
  std::size_t decoder_depth = 2;
  // Output widths of the four tail convolutions.
  std::array<std::size_t, 4> tail_channels{64, 32, 16, 3};

  // Ablation ladder: Base (all off) -> +HE -> +Intra-PT -> +Weather Queries.
  bool hierarchical = true;
  bool intra_pt = true;
  bool weather_queries = true;

  std::uint64_t seed = 0;

  // Throws ConfigError on inconsistent settings.
  void validate() const;
  // Product of all stage strides.
  std::size_t total_stride() const;
  // Side lengths must be multiples of this.
  std::size_t required_divisor() const;
  // Throws ConfigError naming the violated divisor for an H x W input.
  void validate_input(std::size_t height, std::size_t width) const;
};

}  // namespace tw
