#pragma once

// Images live in [0,1]; the network works in [-1,1].

#include <vector>

#include "transweather/image.hpp"
#include "transweather/tensor.hpp"

namespace tw {

// Stacks same-sized [3,H,W] images into [B,3,H,W], mapping v -> 2v - 1.
template <typename Real>
Tensor<Real> images_to_tensor(const std::vector<const Image*>& images);

template <typename Real>
Tensor<Real> image_to_tensor(const Image& image) {
  return images_to_tensor<Real>({&image});
}

// Batch entry `index` of [B,C,H,W], mapping v -> (v + 1) / 2.
template <typename Real>
Image tensor_to_image(const Tensor<Real>& tensor, std::size_t index = 0);

}  // namespace tw
