#pragma once

// Training objective: smooth L1 plus a weighted feature-space MSE.

#include <cstdint>
#include <vector>

#include "transweather/layers.hpp"

namespace tw {

// mean over elements of 0.5 E^2 (|E| < 1) or |E| - 0.5 (otherwise), E = pred - gt.
template <typename Real>
Tensor<Real> smooth_l1(const Tensor<Real>& pred, const Tensor<Real>& gt);

// mean((a - b)^2)
template <typename Real>
Tensor<Real> mse(const Tensor<Real>& a, const Tensor<Real>& b);

// Fixed, seeded, randomly initialised conv stack standing in for a pretrained
// perceptual network: three stride-2 3x3 convs (3->8->16->32) with GELU,
// tapped after every layer. Its parameters never receive gradients.
template <typename Real>
class FeatureExtractor {
 public:
  explicit FeatureExtractor(std::uint64_t seed);

  std::vector<Tensor<Real>> operator()(const Tensor<Real>& image) const;
  const ParameterStore<Real>& parameters() const { return store_; }

 private:
  ParameterStore<Real> store_;
  std::vector<Conv2d<Real>> layers_;
};

struct LossConfig {
  double lambda = 0.04;
  std::uint64_t extractor_seed = 0x5EED;
};

// Average over taps of the per-tap MSE.
template <typename Real>
Tensor<Real> feature_loss(const Tensor<Real>& pred, const Tensor<Real>& gt, const FeatureExtractor<Real>& extractor);

// smooth_l1 + lambda * feature_loss. With lambda == 0 the feature term is not
// evaluated and the result is smooth_l1 itself.
template <typename Real>
Tensor<Real> total_loss(const Tensor<Real>& pred, const Tensor<Real>& gt, const FeatureExtractor<Real>& extractor,
                        double lambda);

}  // namespace tw
