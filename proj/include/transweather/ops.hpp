#pragma once

// Differentiable tensor operations. Every function records itself on the
// current Graph when any input requires a gradient.

#include <cstddef>
#include <vector>

#include "transweather/tensor.hpp"

namespace tw {

// sqrt(2/pi), the constant of the tanh approximation to GELU.
inline constexpr double kGeluTanhScale = 0.7978845608;
inline constexpr double kGeluCubic = 0.044715;
inline constexpr double kLayerNormEps = 1e-6;

// Shape produced by trailing-axis broadcasting; throws DimensionError.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// ---- linear algebra ----

// [..., M, K] x [..., K, N] with broadcast batch axes.
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

// x[..., in] * w[in, out] (+ bias[out]).
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias = {});

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

// Cross-correlation. x[B, Cin, H, W], weight[Cout, Cin / groups, k, k], bias[Cout] optional.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias,
                    Conv2dOptions options);

// ---- elementwise ----

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
// Hadamard product.
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor);
template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real value);
template <typename Real>
Tensor<Real> tanh(const Tensor<Real>& x);
// 0.5 x (1 + tanh(kGeluTanhScale (x + kGeluCubic x^3)))
template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> broadcast_to(const Tensor<Real>& x, const Shape& shape);

// ---- normalization ----

// Max-subtracted softmax along `axis`.
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, int axis);

// Zero-mean unit-variance along the last axis, then gamma * x + beta.
template <typename Real>
Tensor<Real> layernorm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                       double eps = kLayerNormEps);

// ---- reductions ----

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x);
// Removes `axis`.
template <typename Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, int axis);

// ---- data movement ----

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);
template <typename Real>
Tensor<Real> permute(const Tensor<Real>& x, const std::vector<std::size_t>& axes);
template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& x, int axis0, int axis1);
template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis);
template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, int axis, std::size_t start, std::size_t length);
// Nearest-neighbour upsampling of [B, C, H, W] by an integer factor.
template <typename Real>
Tensor<Real> upsample_nearest(const Tensor<Real>& x, std::size_t factor);
// Non-overlapping average pooling of [B, C, H, W].
template <typename Real>
Tensor<Real> avg_pool2d(const Tensor<Real>& x, std::size_t kernel);

// [B, C, H, W] -> [B, H*W, C]
template <typename Real>
Tensor<Real> to_tokens(const Tensor<Real>& x);
// [B, H*W, C] -> [B, C, H, W]
template <typename Real>
Tensor<Real> to_spatial(const Tensor<Real>& tokens, std::size_t height, std::size_t width);

}  // namespace tw
