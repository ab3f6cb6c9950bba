#include <algorithm>
#include <numeric>

#include "transweather/error.hpp"
#include "transweather/ops.hpp"

namespace tw {

namespace {

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

}  // namespace

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor<Real> result(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()));
  if (needs_grad({x})) {
    record_op<Real>("reshape", result, {x}, [x](std::span<const Real> g) {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> permute(const Tensor<Real>& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  std::vector<std::size_t> check = axes;
  std::sort(check.begin(), check.end());
  std::vector<std::size_t> expect(rank);
  std::iota(expect.begin(), expect.end(), 0);
  if (check != expect) throw DimensionError("permute: invalid axis order for " + shape_str(x.shape()));

  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * x.shape()[i];
  Shape out_shape(rank);
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = x.shape()[axes[i]];
    src_stride[i] = in_stride[axes[i]];
  }

  // Maps every output position to its source offset.
  const std::size_t total = x.numel();
  std::vector<std::size_t> index(total);
  if (total > 0 && rank > 0) {
    std::vector<std::size_t> idx(rank, 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < total; ++o) {
      index[o] = off;
      for (std::size_t d = rank; d-- > 0;) {
        ++idx[d];
        off += src_stride[d];
        if (idx[d] < out_shape[d]) break;
        off -= src_stride[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  } else if (total == 1) {
    index[0] = 0;
  }
  std::vector<Real> out(total);
  const Real* px = x.data().data();
  for (std::size_t o = 0; o < total; ++o) out[o] = px[index[o]];
  Tensor<Real> result(std::move(out_shape), std::move(out));
  if (needs_grad({x})) {
    record_op<Real>("permute", result, {x}, [x, index = std::move(index)](std::span<const Real> g) {
      Real* gx = x.grad_buffer().data();
      for (std::size_t o = 0; o < g.size(); ++o) gx[index[o]] += g[o];
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& x, int axis0, int axis1) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[normalize_axis(axis0, x.rank())], axes[normalize_axis(axis1, x.rank())]);
  return permute(x, axes);
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t a = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[a] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw DimensionError("concat: rank mismatch " + shape_str(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != a && s[i] != parts[0].shape()[i]) {
        throw DimensionError("concat: shapes " + shape_str(parts[0].shape()) + " and " + shape_str(s) +
                             " differ off the concat axis");
      }
    }
    out_shape[a] += s[a];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < a; ++i) outer *= out_shape[i];
  for (std::size_t i = a + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
  const std::size_t out_row = out_shape[a] * inner;

  std::vector<Real> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[a] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * chunk, chunk, out.data() + o * out_row + offset);
    }
    offset += chunk;
  }
  Tensor<Real> result(std::move(out_shape), std::move(out));

  bool any = false;
  for (const auto& p : parts) any = any || needs_grad({p});
  if (any) {
    record_op<Real>("concat", result, parts,
                    [parts, offsets, outer, inner, out_row, a](std::span<const Real> g) {
                      for (std::size_t i = 0; i < parts.size(); ++i) {
                        if (!parts[i].requires_grad()) continue;
                        const std::size_t chunk = parts[i].shape()[a] * inner;
                        Real* gp = parts[i].grad_buffer().data();
                        for (std::size_t o = 0; o < outer; ++o) {
                          const Real* src = g.data() + o * out_row + offsets[i];
                          for (std::size_t j = 0; j < chunk; ++j) gp[o * chunk + j] += src[j];
                        }
                      }
                    });
  }
  return result;
}

template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t a = normalize_axis(axis, x.rank());
  if (start + length > x.shape()[a] || length == 0) {
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                         ") out of range for axis of " + shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < a; ++i) outer *= x.shape()[i];
  for (std::size_t i = a + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  const std::size_t in_row = x.shape()[a] * inner;
  const std::size_t chunk = length * inner;
  Shape out_shape = x.shape();
  out_shape[a] = length;
  std::vector<Real> out(outer * chunk);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().data() + o * in_row + start * inner, chunk, out.data() + o * chunk);
  }
  Tensor<Real> result(std::move(out_shape), std::move(out));
  if (needs_grad({x})) {
    record_op<Real>("slice", result, {x}, [x, outer, in_row, chunk, start, inner](std::span<const Real> g) {
      Real* gx = x.grad_buffer().data();
      for (std::size_t o = 0; o < outer; ++o) {
        Real* dst = gx + o * in_row + start * inner;
        const Real* src = g.data() + o * chunk;
        for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> upsample_nearest(const Tensor<Real>& x, std::size_t factor) {
  if (x.rank() != 4) throw DimensionError("upsample_nearest expects [B,C,H,W], got " + shape_str(x.shape()));
  if (factor == 0) throw DimensionError("upsample_nearest: factor must be a positive integer");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  std::vector<Real> out(planes * oh * ow);
  const Real* px = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      const Real* src = px + (p * h + y / factor) * w;
      Real* dst = out.data() + (p * oh + y) * ow;
      for (std::size_t xo = 0; xo < ow; ++xo) dst[xo] = src[xo / factor];
    }
  }
  Tensor<Real> result(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out));
  if (needs_grad({x})) {
    record_op<Real>("upsample_nearest", result, {x}, [x, planes, h, w, factor](std::span<const Real> g) {
      Real* gx = x.grad_buffer().data();
      const std::size_t oh = h * factor, ow = w * factor;
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
          Real* dst = gx + (p * h + y / factor) * w;
          const Real* src = g.data() + (p * oh + y) * ow;
          for (std::size_t xo = 0; xo < ow; ++xo) dst[xo / factor] += src[xo];
        }
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> avg_pool2d(const Tensor<Real>& x, std::size_t kernel) {
  if (x.rank() != 4 || kernel == 0 || x.dim(2) % kernel != 0 || x.dim(3) % kernel != 0) {
    throw DimensionError("avg_pool2d: kernel " + std::to_string(kernel) + " does not tile " +
                         shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / kernel, ow = w / kernel;
  const Real norm = Real(1) / static_cast<Real>(kernel * kernel);
  std::vector<Real> out(planes * oh * ow, Real(0));
  const Real* px = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      const Real* src = px + (p * h + y) * w;
      Real* dst = out.data() + (p * oh + y / kernel) * ow;
      for (std::size_t xi = 0; xi < w; ++xi) dst[xi / kernel] += src[xi];
    }
  }
  for (auto& v : out) v *= norm;
  Tensor<Real> result(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out));
  if (needs_grad({x})) {
    record_op<Real>("avg_pool2d", result, {x}, [x, planes, h, w, kernel, norm](std::span<const Real> g) {
      Real* gx = x.grad_buffer().data();
      const std::size_t oh = h / kernel, ow = w / kernel;
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
          Real* dst = gx + (p * h + y) * w;
          const Real* src = g.data() + (p * oh + y / kernel) * ow;
          for (std::size_t xi = 0; xi < w; ++xi) dst[xi] += src[xi / kernel] * norm;
        }
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> to_tokens(const Tensor<Real>& x) {
  if (x.rank() != 4) throw DimensionError("to_tokens expects [B,C,H,W], got " + shape_str(x.shape()));
  const auto flat = reshape(x, Shape{x.dim(0), x.dim(1), x.dim(2) * x.dim(3)});
  return permute(flat, {0, 2, 1});
}

template <typename Real>
Tensor<Real> to_spatial(const Tensor<Real>& tokens, std::size_t height, std::size_t width) {
  if (tokens.rank() != 3 || tokens.dim(1) != height * width) {
    throw ContractError("to_spatial: " + shape_str(tokens.shape()) + " is not a " + std::to_string(height) +
                        "x" + std::to_string(width) + " token grid");
  }
  const auto chw = permute(tokens, {0, 2, 1});
  return reshape(chw, Shape{tokens.dim(0), tokens.dim(2), height, width});
}

#define TW_INSTANTIATE(Real)                                                                  \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape);                                  \
  template Tensor<Real> permute(const Tensor<Real>&, const std::vector<std::size_t>&);        \
  template Tensor<Real> transpose(const Tensor<Real>&, int, int);                             \
  template Tensor<Real> concat(const std::vector<Tensor<Real>>&, int);                        \
  template Tensor<Real> slice(const Tensor<Real>&, int, std::size_t, std::size_t);            \
  template Tensor<Real> upsample_nearest(const Tensor<Real>&, std::size_t);                   \
  template Tensor<Real> avg_pool2d(const Tensor<Real>&, std::size_t);                         \
  template Tensor<Real> to_tokens(const Tensor<Real>&);                                       \
  template Tensor<Real> to_spatial(const Tensor<Real>&, std::size_t, std::size_t);

TW_INSTANTIATE(float)
TW_INSTANTIATE(double)
#undef TW_INSTANTIATE

}  // namespace tw
