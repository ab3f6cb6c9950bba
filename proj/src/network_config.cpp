#include "transweather/network_config.hpp"

#include <string>

#include "transweather/attention.hpp"
#include "transweather/error.hpp"

namespace tw {

namespace {

std::string stage_label(std::size_t i) { return "stage " + std::to_string(i + 1); }

void check_tokens(std::size_t h, std::size_t w, std::size_t r, const std::string& where) {
  if ((h * w) % r != 0) {
    throw ConfigError(where + ": " + std::to_string(h) + "x" + std::to_string(w) + " = " +
                      std::to_string(h * w) + " tokens not divisible by reduction ratio " + std::to_string(r));
  }
}

}  // namespace

void NetworkConfig::validate() const {
  if (intra_pt && !hierarchical) {
    throw ConfigError("intra_pt requires the hierarchical encoder (hierarchical=on)");
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    try {
      AttentionConfig{s.embed_dim, s.num_heads, s.reduction_ratio}.validate();
      if (intra_pt) AttentionConfig{s.embed_dim, s.num_heads, s.intra_pt_reduction}.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(stage_label(i) + ": " + e.what());
    }
    if (s.depth == 0) throw ConfigError(stage_label(i) + ": depth must be >= 1");
    // The tail upsamples by 2 before every conv, so each stage must halve.
    if (s.stride != 2) throw ConfigError(stage_label(i) + ": stride must be 2 to match the projection tail");
    if (s.merge_kernel <= s.stride) {
      throw ConfigError(stage_label(i) + ": merge kernel " + std::to_string(s.merge_kernel) +
                        " must exceed stride " + std::to_string(s.stride) + " for overlapped merging");
    }
    if (s.merge_kernel % 2 == 0) throw ConfigError(stage_label(i) + ": merge kernel must be odd");
  }
  if (ffn_mult == 0) throw ConfigError("ffn_mult must be >= 1");
  if (weather_queries) {
    if (num_queries == 0) throw ConfigError("num_queries must be >= 1");
    if (decoder_depth == 0) throw ConfigError("decoder_depth must be >= 1");
  }
  for (std::size_t c : tail_channels) {
    if (c == 0) throw ConfigError("tail channel widths must be >= 1");
  }
  if (tail_channels.back() != 3) throw ConfigError("last tail layer must output 3 channels");
}

std::size_t NetworkConfig::total_stride() const {
  std::size_t s = 1;
  for (const auto& st : stages) s *= st.stride;
  return s;
}

std::size_t NetworkConfig::required_divisor() const {
  return intra_pt ? 2 * total_stride() : total_stride();
}

void NetworkConfig::validate_input(std::size_t height, std::size_t width) const {
  const std::size_t d = required_divisor();
  if (height == 0 || width == 0 || height % d != 0 || width % d != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      ": side lengths must be multiples of " + std::to_string(d));
  }
  if (!hierarchical) return;
  std::size_t h = height, w = width;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (intra_pt) check_tokens(h / 2 / s.stride, w / 2 / s.stride, s.intra_pt_reduction, stage_label(i) + " intra-pt");
    h /= s.stride;
    w /= s.stride;
    check_tokens(h, w, s.reduction_ratio, stage_label(i));
  }
}

}  // namespace tw
