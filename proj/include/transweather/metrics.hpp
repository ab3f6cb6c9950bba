#pragma once

// Image quality metrics on [0,1] images.

#include <span>

#include "transweather/image.hpp"

namespace tw {

// 20 log10(max_val / sqrt(MSE)); +infinity when the images are identical.
double psnr(std::span<const float> a, std::span<const float> b, double max_val = 1.0);
double psnr(const Image& a, const Image& b, double max_val = 1.0);

// Single-scale SSIM on the channel-mean grayscale image: 11x11 Gaussian
// window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, averaged over all positions
// where the window fits. Throws InputError for images smaller than the window.
double ssim(const Image& a, const Image& b);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

}  // namespace tw
