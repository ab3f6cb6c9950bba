#pragma once

// Independent reference computations used by the tests. None of these call
// into the library's numeric code; they restate the definitions with plain
// loops in double precision.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "transweather/image.hpp"
#include "transweather/network_config.hpp"

namespace oracle {

// Row-major [rows, cols] matrix helpers.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// O(N^2) multi-head attention for one batch element x[N, C] with projection
// matrices stored [in, out]; output bias bo[C].
inline std::vector<double> naive_attention(const std::vector<double>& x, std::size_t n, std::size_t c,
                                           std::size_t heads, const std::vector<double>& wq,
                                           const std::vector<double>& wk, const std::vector<double>& wv,
                                           const std::vector<double>& wo, const std::vector<double>& bo) {
  const auto q = matmul(x, wq, n, c, c);
  const auto k = matmul(x, wk, n, c, c);
  const auto v = matmul(x, wv, n, c, c);
  const std::size_t d = c / heads;
  std::vector<double> merged(n * c, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < d; ++t) dot += q[i * c + h * d + t] * k[j * c + h * d + t];
        s[j] = dot / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t t = 0; t < d; ++t) merged[i * c + h * d + t] += s[j] / z * v[j * c + h * d + t];
    }
  }
  auto out = matmul(merged, wo, n, c, c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bo[j];
  return out;
}

// SSIM by direct 2-D windowed sums at every valid position.
inline double reference_ssim(const tw::Image& a, const tw::Image& b) {
  const std::size_t h = a.height, w = a.width, win = 11;
  auto gray = [](const tw::Image& img, std::size_t y, std::size_t x) {
    double s = 0.0;
    for (std::size_t c = 0; c < img.channels; ++c) s += img.at(c, y, x);
    return s / static_cast<double>(img.channels);
  };
  std::array<std::array<double, 11>, 11> g{};
  double total = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += (g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5));
  const double c1 = 1e-4, c2 = 9e-4;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + win <= h; ++y) {
    for (std::size_t x = 0; x + win <= w; ++x) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < win; ++i)
        for (std::size_t j = 0; j < win; ++j) {
          mx += g[i][j] / total * gray(a, y + i, x + j);
          my += g[i][j] / total * gray(b, y + i, x + j);
        }
      double vx = 0, vy = 0, cov = 0;
      for (std::size_t i = 0; i < win; ++i)
        for (std::size_t j = 0; j < win; ++j) {
          const double dx = gray(a, y + i, x + j) - mx, dy = gray(b, y + i, x + j) - my;
          vx += g[i][j] / total * dx * dx;
          vy += g[i][j] / total * dy * dy;
          cov += g[i][j] / total * dx * dy;
        }
      acc += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

// Distance in representable floats between a and b.
inline std::int64_t ulp_distance(float a, float b) {
  auto key = [](float f) {
    const auto bits = static_cast<std::int64_t>(std::bit_cast<std::int32_t>(f));
    return bits < 0 ? std::int64_t{INT32_MIN} - bits : bits;
  };
  const auto d = key(a) - key(b);
  return d < 0 ? -d : d;
}

// ---- analytic parameter counting, from layer sizes ----

inline std::size_t linear(std::size_t in, std::size_t out, bool bias = true) { return in * out + (bias ? out : 0); }
inline std::size_t norm(std::size_t d) { return 2 * d; }
inline std::size_t conv(std::size_t in, std::size_t out, std::size_t k, std::size_t groups = 1) {
  return out * (in / groups) * k * k + out;
}
inline std::size_t self_attention(std::size_t c, std::size_t r) {
  return linear(c, c, false) + linear(c * r, c, false) + 2 * linear(c, c, false) + linear(c, c);
}
inline std::size_t ffn(std::size_t c, std::size_t m) {
  return norm(c) + linear(c, m * c) + conv(m * c, m * c, 3, m * c) + linear(m * c, c);
}
inline std::size_t block(std::size_t c, std::size_t r, std::size_t m) { return norm(c) + self_attention(c, r) + ffn(c, m); }
inline std::size_t embed(std::size_t in, std::size_t out, std::size_t k) { return conv(in, out, k) + norm(out); }

inline std::size_t parameter_count(const tw::NetworkConfig& cfg) {
  std::size_t total = 0;
  std::vector<std::size_t> dims;
  if (cfg.hierarchical) {
    std::size_t in = 3;
    for (const auto& s : cfg.stages) {
      total += embed(in, s.embed_dim, s.merge_kernel);
      total += s.depth * block(s.embed_dim, s.reduction_ratio, cfg.ffn_mult);
      total += norm(s.embed_dim);
      if (cfg.intra_pt) total += embed(in, s.embed_dim, s.merge_kernel) + block(s.embed_dim, s.intra_pt_reduction, cfg.ffn_mult);
      dims.push_back(s.embed_dim);
      in = s.embed_dim;
    }
  } else {
    const std::size_t c = cfg.stages[0].embed_dim;
    std::size_t depth = 0;
    for (const auto& s : cfg.stages) depth += s.depth;
    total += embed(3, c, 16) + depth * block(c, 1, cfg.ffn_mult) + norm(c);
    dims.push_back(c);
  }
  const std::size_t c4 = dims.back();
  if (cfg.weather_queries) {
    total += cfg.num_queries * c4;
    total += cfg.decoder_depth * (3 * norm(c4) + 3 * linear(c4, c4, false) + linear(c4, c4) +
                                  linear(c4, cfg.ffn_mult * c4) + linear(cfg.ffn_mult * c4, c4));
    for (auto d : dims) total += linear(c4, d);
  }
  std::size_t in = c4;
  for (std::size_t l = 0; l < 4; ++l) {
    const std::size_t skip = l + 1 < dims.size() ? dims[dims.size() - 2 - l] : 0;
    total += conv(in + skip, cfg.tail_channels[l], 3);
    in = cfg.tail_channels[l];
  }
  return total;
}

}  // namespace oracle
