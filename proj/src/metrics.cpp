#include "transweather/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "transweather/error.hpp"

namespace tw {

double psnr(std::span<const float> a, std::span<const float> b, double max_val) {
  if (a.size() != b.size() || a.empty()) {
    throw DimensionError("psnr: sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(max_val / std::sqrt(mse));
}

double psnr(const Image& a, const Image& b, double max_val) {
  if (!a.same_dims(b)) throw DimensionError("psnr: image dimensions differ");
  return psnr(std::span<const float>(a.data), std::span<const float>(b.data), max_val);
}

namespace {

std::vector<double> grayscale(const Image& img) {
  std::vector<double> g(img.plane(), 0.0);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < img.plane(); ++i) g[i] += img.data[c * img.plane() + i];
  }
  for (auto& v : g) v /= static_cast<double>(img.channels);
  return g;
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  const double centre = (kSsimWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - centre;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Valid-mode separable filtering: (h - 10) x (w - 10) output.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::array<double, kSsimWindow>& k) {
  const std::size_t oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t j = 0; j < kSsimWindow; ++j) acc += k[j] * src[y * w + x + j];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < kSsimWindow; ++i) acc += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.same_dims(b)) throw DimensionError("ssim: image dimensions differ");
  if (a.height < kSsimWindow || a.width < kSsimWindow) {
    throw InputError("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " smaller than the 11x11 window");
  }
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::size_t h = a.height, w = a.width;
  const auto x = grayscale(a), y = grayscale(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = gaussian_window();
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace tw
