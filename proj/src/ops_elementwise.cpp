#include <algorithm>
#include <cmath>

#include "ops_internal.hpp"
#include "transweather/error.hpp"
#include "transweather/ops.hpp"

namespace tw {

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

namespace detail {

namespace {
std::vector<std::size_t> aligned_strides(const Shape& s, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t running = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    const std::size_t o = i + (rank - s.size());
    strides[o] = s[i] == 1 ? 0 : running;
    running *= s[i];
  }
  return strides;
}
}  // namespace

BroadcastPlan make_plan(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.out = broadcast_shapes(a, b);
  plan.a_stride = aligned_strides(a, plan.out);
  plan.b_stride = aligned_strides(b, plan.out);
  return plan;
}

}  // namespace detail

namespace {

enum class BinaryKind { kAdd, kSub, kMul };

template <typename Real>
Tensor<Real> binary(const Tensor<Real>& a, const Tensor<Real>& b, BinaryKind kind, const char* name) {
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  const bool same = a.shape() == b.shape();
  detail::BroadcastPlan plan;
  if (!same) plan = detail::make_plan(a.shape(), b.shape());
  const Shape out_shape = same ? a.shape() : plan.out;
  std::vector<Real> out(shape_numel(out_shape));

  auto apply = [&](std::size_t o, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case BinaryKind::kAdd: out[o] = pa[ia] + pb[ib]; break;
      case BinaryKind::kSub: out[o] = pa[ia] - pb[ib]; break;
      case BinaryKind::kMul: out[o] = pa[ia] * pb[ib]; break;
    }
  };
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) apply(i, i, i);
  } else {
    detail::for_each_broadcast(plan, apply);
  }

  Tensor<Real> result(out_shape, std::move(out));
  if (needs_grad({a, b})) {
    record_op<Real>(name, result, {a, b}, [a, b, kind, same, plan](std::span<const Real> g) {
      Real* ga = a.requires_grad() ? a.grad_buffer().data() : nullptr;
      Real* gb = b.requires_grad() ? b.grad_buffer().data() : nullptr;
      const Real* pa = a.data().data();
      const Real* pb = b.data().data();
      auto step = [&](std::size_t o, std::size_t ia, std::size_t ib) {
        switch (kind) {
          case BinaryKind::kAdd:
            if (ga) ga[ia] += g[o];
            if (gb) gb[ib] += g[o];
            break;
          case BinaryKind::kSub:
            if (ga) ga[ia] += g[o];
            if (gb) gb[ib] -= g[o];
            break;
          case BinaryKind::kMul:
            if (ga) ga[ia] += g[o] * pb[ib];
            if (gb) gb[ib] += g[o] * pa[ia];
            break;
        }
      };
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) step(i, i, i);
      } else {
        detail::for_each_broadcast(plan, step);
      }
    });
  }
  return result;
}

// Pointwise unary op: fwd(x) -> y, grad(x, y) -> dy/dx.
template <typename Real, typename Fwd, typename Deriv>
Tensor<Real> unary(const Tensor<Real>& x, const char* name, Fwd fwd, Deriv deriv) {
  std::vector<Real> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  Tensor<Real> result(x.shape(), std::move(out));
  if (needs_grad({x})) {
    Tensor<Real> y = result;
    record_op<Real>(name, result, {x}, [x, y, deriv](std::span<const Real> g) {
      auto gx = x.grad_buffer();
      const auto in = x.data();
      const auto yv = y.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(in[i], yv[i]);
    });
  }
  return result;
}

}  // namespace

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, BinaryKind::kAdd, "add");
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, BinaryKind::kSub, "sub");
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, BinaryKind::kMul, "mul");
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor) {
  return unary(
      x, "scale", [factor](Real v) { return v * factor; }, [factor](Real, Real) { return factor; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real value) {
  return unary(
      x, "add_scalar", [value](Real v) { return v + value; }, [](Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> tanh(const Tensor<Real>& x) {
  return unary(
      x, "tanh", [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real(1) - y * y; });
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  const Real c = static_cast<Real>(kGeluTanhScale);
  const Real a = static_cast<Real>(kGeluCubic);
  return unary(
      x, "gelu",
      [c, a](Real v) { return Real(0.5) * v * (Real(1) + std::tanh(c * (v + a * v * v * v))); },
      [c, a](Real v, Real) {
        const Real t = std::tanh(c * (v + a * v * v * v));
        return Real(0.5) * (Real(1) + t) +
               Real(0.5) * v * (Real(1) - t * t) * c * (Real(1) + Real(3) * a * v * v);
      });
}

template <typename Real>
Tensor<Real> broadcast_to(const Tensor<Real>& x, const Shape& shape) {
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw DimensionError("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const detail::BroadcastPlan plan = detail::make_plan(shape, x.shape());
  std::vector<Real> out(shape_numel(shape));
  const Real* px = x.data().data();
  detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t, std::size_t ix) { out[o] = px[ix]; });
  Tensor<Real> result(shape, std::move(out));
  if (needs_grad({x})) {
    record_op<Real>("broadcast_to", result, {x}, [x, plan](std::span<const Real> g) {
      Real* gx = x.grad_buffer().data();
      detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t, std::size_t ix) { gx[ix] += g[o]; });
    });
  }
  return result;
}

namespace {

struct AxisSplit {
  std::size_t outer, n, inner;
};

template <typename Real>
AxisSplit split_axis(const Tensor<Real>& x, int axis) {
  const int r = static_cast<int>(x.rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  }
  AxisSplit s{1, x.shape()[static_cast<std::size_t>(a)], 1};
  for (int i = 0; i < a; ++i) s.outer *= x.shape()[static_cast<std::size_t>(i)];
  for (int i = a + 1; i < r; ++i) s.inner *= x.shape()[static_cast<std::size_t>(i)];
  return s;
}

}  // namespace

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, int axis) {
  const AxisSplit s = split_axis(x, axis);
  std::vector<Real> out(x.numel());
  const Real* px = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      Real mx = px[base];
      for (std::size_t i = 1; i < s.n; ++i) mx = std::max(mx, px[base + i * s.inner]);
      Real total = 0;
      for (std::size_t i = 0; i < s.n; ++i) {
        const Real e = std::exp(px[base + i * s.inner] - mx);
        out[base + i * s.inner] = e;
        total += e;
      }
      const Real inv = Real(1) / total;
      for (std::size_t i = 0; i < s.n; ++i) out[base + i * s.inner] *= inv;
    }
  }
  Tensor<Real> result(x.shape(), std::move(out));
  if (needs_grad({x})) {
    Tensor<Real> y = result;
    record_op<Real>("softmax", result, {x}, [x, y, s](std::span<const Real> g) {
      Real* gx = x.grad_buffer().data();
      const Real* py = y.data().data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.n * s.inner + in;
          Real dot = 0;
          for (std::size_t i = 0; i < s.n; ++i) dot += g[base + i * s.inner] * py[base + i * s.inner];
          for (std::size_t i = 0; i < s.n; ++i) {
            const std::size_t k = base + i * s.inner;
            gx[k] += py[k] * (g[k] - dot);
          }
        }
      }
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> layernorm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                       double eps) {
  if (x.rank() < 1 || x.dim(-1) == 0) throw DimensionError("layernorm: empty last axis");
  const std::size_t c = x.dim(-1);
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layernorm: affine parameters " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " for input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / c;
  std::vector<Real> out(x.numel());
  std::vector<Real> xhat(x.numel());
  std::vector<Real> inv_std(rows);
  const Real* px = x.data().data();
  const Real* pg = gamma.data().data();
  const Real* pb = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = px + r * c;
    Real mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<Real>(c);
    Real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Real>(c);
    const Real is = Real(1) / std::sqrt(var + static_cast<Real>(eps));
    inv_std[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const Real h = (row[j] - mu) * is;
      xhat[r * c + j] = h;
      out[r * c + j] = h * pg[j] + pb[j];
    }
  }
  Tensor<Real> result(x.shape(), std::move(out));
  if (needs_grad({x, gamma, beta})) {
    record_op<Real>("layernorm", result, {x, gamma, beta},
                    [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                     c](std::span<const Real> g) {
                      const Real* pg = gamma.data().data();
                      Real* gx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
                      Real* ggam = gamma.requires_grad() ? gamma.grad_buffer().data() : nullptr;
                      Real* gbet = beta.requires_grad() ? beta.grad_buffer().data() : nullptr;
                      for (std::size_t r = 0; r < rows; ++r) {
                        const Real* gr = g.data() + r * c;
                        const Real* hr = xhat.data() + r * c;
                        if (ggam || gbet) {
                          for (std::size_t j = 0; j < c; ++j) {
                            if (ggam) ggam[j] += gr[j] * hr[j];
                            if (gbet) gbet[j] += gr[j];
                          }
                        }
                        if (!gx) continue;
                        Real mean_d = 0, mean_dh = 0;
                        for (std::size_t j = 0; j < c; ++j) {
                          const Real d = gr[j] * pg[j];
                          mean_d += d;
                          mean_dh += d * hr[j];
                        }
                        mean_d /= static_cast<Real>(c);
                        mean_dh /= static_cast<Real>(c);
                        for (std::size_t j = 0; j < c; ++j) {
                          const Real d = gr[j] * pg[j];
                          gx[r * c + j] += inv_std[r] * (d - mean_d - hr[j] * mean_dh);
                        }
                      }
                    });
  }
  return result;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  Tensor<Real> result = Tensor<Real>::scalar(total);
  if (needs_grad({x})) {
    record_op<Real>("sum", result, {x}, [x](std::span<const Real> g) {
      for (auto& v : x.grad_buffer()) v += g[0];
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  const Real n = static_cast<Real>(x.numel());
  Tensor<Real> result = Tensor<Real>::scalar(total / n);
  if (needs_grad({x})) {
    record_op<Real>("mean", result, {x}, [x, n](std::span<const Real> g) {
      const Real d = g[0] / n;
      for (auto& v : x.grad_buffer()) v += d;
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, int axis) {
  const AxisSplit s = split_axis(x, axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + (axis < 0 ? axis + static_cast<int>(x.rank()) : axis));
  std::vector<Real> out(s.outer * s.inner, Real(0));
  const Real* px = x.data().data();
  const Real n = static_cast<Real>(s.n);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.n; ++i) {
      const Real* src = px + (o * s.n + i) * s.inner;
      Real* dst = out.data() + o * s.inner;
      for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
    }
  }
  for (auto& v : out) v /= n;
  Tensor<Real> result(std::move(out_shape), std::move(out));
  if (needs_grad({x})) {
    record_op<Real>("mean_axis", result, {x}, [x, s, n](std::span<const Real> g) {
      Real* gx = x.grad_buffer().data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.n; ++i) {
          Real* dst = gx + (o * s.n + i) * s.inner;
          const Real* src = g.data() + o * s.inner;
          for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in] / n;
        }
      }
    });
  }
  return result;
}

#define TW_INSTANTIATE(Real)                                                                    \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                          \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                          \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                          \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                       \
  template Tensor<Real> add_scalar(const Tensor<Real>&, Real);                                  \
  template Tensor<Real> tanh(const Tensor<Real>&);                                              \
  template Tensor<Real> gelu(const Tensor<Real>&);                                              \
  template Tensor<Real> broadcast_to(const Tensor<Real>&, const Shape&);                        \
  template Tensor<Real> softmax(const Tensor<Real>&, int);                                      \
  template Tensor<Real> layernorm(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, \
                                  double);                                                      \
  template Tensor<Real> sum(const Tensor<Real>&);                                               \
  template Tensor<Real> mean(const Tensor<Real>&);                                              \
  template Tensor<Real> mean_axis(const Tensor<Real>&, int);

TW_INSTANTIATE(float)
TW_INSTANTIATE(double)
#undef TW_INSTANTIATE

}  // namespace tw
