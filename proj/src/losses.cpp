#include "transweather/losses.hpp"

#include <cmath>

#include "transweather/error.hpp"

namespace tw {

namespace {

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

template <typename Real>
Tensor<Real> smooth_l1(const Tensor<Real>& pred, const Tensor<Real>& gt) {
  require_same_shape(pred, gt, "smooth_l1");
  const auto p = pred.data(), g = gt.data();
  const std::size_t n = p.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = static_cast<double>(p[i]) - static_cast<double>(g[i]);
    acc += std::abs(e) < 1.0 ? 0.5 * e * e : std::abs(e) - 0.5;
  }
  auto result = Tensor<Real>::scalar(static_cast<Real>(acc / static_cast<double>(n)));
  if (needs_grad({pred, gt})) {
    record_op<Real>("smooth_l1", result, {pred, gt}, [pred, gt](std::span<const Real> grad) {
      const auto pv = pred.data(), gv = gt.data();
      const Real scale = grad[0] / static_cast<Real>(pv.size());
      Real* gp = pred.requires_grad() ? pred.grad_buffer().data() : nullptr;
      Real* gg = gt.requires_grad() ? gt.grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const Real e = pv[i] - gv[i];
        const Real d = std::abs(e) < Real(1) ? e : (e > 0 ? Real(1) : Real(-1));
        if (gp) gp[i] += scale * d;
        if (gg) gg[i] -= scale * d;
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> mse(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "mse");
  const auto d = sub(a, b);
  return mean(mul(d, d));
}

template <typename Real>
FeatureExtractor<Real>::FeatureExtractor(std::uint64_t seed) : store_(seed) {
  const std::size_t widths[] = {3, 8, 16, 32};
  for (std::size_t l = 0; l < 3; ++l) {
    layers_.emplace_back(store_, "features.conv" + std::to_string(l + 1), widths[l], widths[l + 1], 3,
                         Conv2dOptions{2, 1, 1}, false);
  }
}

template <typename Real>
std::vector<Tensor<Real>> FeatureExtractor<Real>::operator()(const Tensor<Real>& image) const {
  std::vector<Tensor<Real>> taps;
  Tensor<Real> x = image;
  for (const auto& layer : layers_) {
    x = gelu(layer(x));
    taps.push_back(x);
  }
  return taps;
}

template <typename Real>
Tensor<Real> feature_loss(const Tensor<Real>& pred, const Tensor<Real>& gt, const FeatureExtractor<Real>& extractor) {
  require_same_shape(pred, gt, "feature_loss");
  const auto fp = extractor(pred);
  const auto fg = extractor(gt);
  Tensor<Real> acc = mse(fp[0], fg[0]);
  for (std::size_t l = 1; l < fp.size(); ++l) acc = add(acc, mse(fp[l], fg[l]));
  return scale(acc, Real(1) / static_cast<Real>(fp.size()));
}

template <typename Real>
Tensor<Real> total_loss(const Tensor<Real>& pred, const Tensor<Real>& gt, const FeatureExtractor<Real>& extractor,
                        double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  const auto pixel = smooth_l1(pred, gt);
  if (lambda == 0.0) return pixel;
  return add(pixel, scale(feature_loss(pred, gt, extractor), static_cast<Real>(lambda)));
}

#define TW_INSTANTIATE(Real)                                                                                    \
  template Tensor<Real> smooth_l1(const Tensor<Real>&, const Tensor<Real>&);                                    \
  template Tensor<Real> mse(const Tensor<Real>&, const Tensor<Real>&);                                          \
  template class FeatureExtractor<Real>;                                                                        \
  template Tensor<Real> feature_loss(const Tensor<Real>&, const Tensor<Real>&, const FeatureExtractor<Real>&);  \
  template Tensor<Real> total_loss(const Tensor<Real>&, const Tensor<Real>&, const FeatureExtractor<Real>&,     \
                                   double);

TW_INSTANTIATE(float)
TW_INSTANTIATE(double)

}  // namespace tw
