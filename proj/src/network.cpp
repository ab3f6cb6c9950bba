#include "transweather/network.hpp"

#include "transweather/error.hpp"

namespace tw {

std::vector<std::size_t> pyramid_dims(const NetworkConfig& config) {
  if (!config.hierarchical) return {config.stages.front().embed_dim};
  std::vector<std::size_t> dims;
  for (const auto& s : config.stages) dims.push_back(s.embed_dim);
  return dims;
}

namespace {

std::vector<std::size_t> tail_widths(const NetworkConfig& config) {
  return {config.tail_channels.begin(), config.tail_channels.end()};
}

template <typename Real>
std::optional<WeatherDecoder<Real>> make_decoder(ParameterStore<Real>& store, const NetworkConfig& config) {
  if (!config.weather_queries) return std::nullopt;
  const auto& last = config.stages.back();
  return WeatherDecoder<Real>(store, "decoder", pyramid_dims(config).back(), last.num_heads, config.num_queries,
                              config.decoder_depth, config.ffn_mult);
}

template <typename Real>
std::optional<TaskFusion<Real>> make_fusion(ParameterStore<Real>& store, const NetworkConfig& config) {
  if (!config.weather_queries) return std::nullopt;
  const auto dims = pyramid_dims(config);
  return TaskFusion<Real>(store, "fusion", dims, dims.back());
}

}  // namespace

// Registration order (encoder, decoder, fusion, tail) fixes the parameter
// layout and the init stream.
template <typename Real>
TransWeather<Real>::TransWeather(const NetworkConfig& config)
    : config_(config),
      store_(config.seed),
      encoder_(store_, config_),
      decoder_(make_decoder(store_, config_)),
      fusion_(make_fusion(store_, config_)),
      tail_(store_, "tail", pyramid_dims(config_), tail_widths(config_)) {}

template <typename Real>
TaskFeature<Real> TransWeather<Real>::decode(const FeaturePyramid<Real>& pyramid) const {
  if (!decoder_) throw ContractError("decode called with the query decoder disabled");
  return (*decoder_)(pyramid);
}

template <typename Real>
FeaturePyramid<Real> TransWeather<Real>::fuse_task(const FeaturePyramid<Real>& pyramid,
                                                   const TaskFeature<Real>& task) const {
  if (!fusion_) throw ContractError("fuse_task called with the query decoder disabled");
  return (*fusion_)(pyramid, task);
}

template <typename Real>
ForwardTrace<Real> TransWeather<Real>::trace(const Tensor<Real>& image) const {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw DimensionError("restore expects [B,3,H,W], got " + shape_str(image.shape()));
  }
  config_.validate_input(image.dim(2), image.dim(3));
  ForwardTrace<Real> t;
  t.pyramid = encode(image);
  if (decoder_) {
    t.task = decode(t.pyramid);
    t.fused = fuse_task(t.pyramid, *t.task);
  } else {
    t.fused = t.pyramid;
  }
  t.output = project(t.fused);
  return t;
}

template class TransWeather<float>;
template class TransWeather<double>;

}  // namespace tw
