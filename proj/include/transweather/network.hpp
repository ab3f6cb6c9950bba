#pragma once

// The full restoration network: B = T(I).

#include <optional>
#include <vector>

#include "transweather/decoder.hpp"
#include "transweather/encoder.hpp"
#include "transweather/network_config.hpp"

namespace tw {

template <typename Real>
struct ForwardTrace {
  FeaturePyramid<Real> pyramid;
  std::optional<TaskFeature<Real>> task;  // absent when the query decoder is disabled
  FeaturePyramid<Real> fused;
  Tensor<Real> output;
};

template <typename Real>
class TransWeather {
 public:
  explicit TransWeather(const NetworkConfig& config);

  FeaturePyramid<Real> encode(const Tensor<Real>& image) const { return encoder_(image); }
  TaskFeature<Real> decode(const FeaturePyramid<Real>& pyramid) const;
  FeaturePyramid<Real> fuse_task(const FeaturePyramid<Real>& pyramid, const TaskFeature<Real>& task) const;
  Tensor<Real> project(const FeaturePyramid<Real>& fused) const { return tail_(fused); }

  // image: [B, 3, H, W] in [-1, 1]; returns the same shape in (-1, 1).
  Tensor<Real> restore(const Tensor<Real>& image) const { return trace(image).output; }
  ForwardTrace<Real> trace(const Tensor<Real>& image) const;

  const NetworkConfig& config() const { return config_; }
  ParameterStore<Real>& parameters() { return store_; }
  const ParameterStore<Real>& parameters() const { return store_; }
  bool has_decoder() const { return decoder_.has_value(); }

 private:
  NetworkConfig config_;
  ParameterStore<Real> store_;
  Encoder<Real> encoder_;
  std::optional<WeatherDecoder<Real>> decoder_;
  std::optional<TaskFusion<Real>> fusion_;
  ProjectionTail<Real> tail_;
};

// Channel widths of the pyramid levels produced by `config`.
std::vector<std::size_t> pyramid_dims(const NetworkConfig& config);

}  // namespace tw
