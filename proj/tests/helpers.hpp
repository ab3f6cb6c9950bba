#pragma once

#include <string>

#include "transweather/network.hpp"
#include "transweather/rng.hpp"

namespace testing_support {

// Small network for fast tests; same topology as the default.
inline tw::NetworkConfig tiny_config(std::uint64_t seed = 3) {
  tw::NetworkConfig c;
  c.stages = {{
      {1, 8, 1, 4, 2, 3, 8},
      {1, 16, 2, 2, 2, 3, 8},
      {1, 16, 2, 2, 2, 3, 4},
      {1, 32, 4, 1, 2, 3, 1},
  }};
  c.ffn_mult = 2;
  c.num_queries = 4;
  c.decoder_depth = 1;
  c.tail_channels = {16, 8, 8, 3};
  c.seed = seed;
  return c;
}

template <typename Real>
tw::Tensor<Real> random_image(std::uint64_t seed, std::size_t b, std::size_t h, std::size_t w,
                              bool requires_grad = false) {
  tw::Rng rng(seed);
  std::vector<Real> d(b * 3 * h * w);
  for (auto& v : d) v = static_cast<Real>(rng.uniform(-1, 1));
  return tw::Tensor<Real>(tw::Shape{b, 3, h, w}, std::move(d), requires_grad);
}

// Copies every tensor present in both stores by name; returns the count.
template <typename Real>
std::size_t copy_shared(const tw::ParameterStore<Real>& from, tw::ParameterStore<Real>& to) {
  std::size_t n = 0;
  for (const auto& e : to.entries()) {
    if (!from.contains(e.name)) continue;
    const auto src = from.get(e.name);
    tw::Tensor<Real> dst = e.tensor;
    std::copy(src.data().begin(), src.data().end(), dst.data().begin());
    ++n;
  }
  return n;
}

template <typename Real>
void zero_matching(tw::ParameterStore<Real>& store, const std::string& needle) {
  for (const auto& e : store.entries()) {
    if (e.name.find(needle) == std::string::npos) continue;
    tw::Tensor<Real> t = e.tensor;
    std::fill(t.data().begin(), t.data().end(), Real(0));
  }
}

}  // namespace testing_support
