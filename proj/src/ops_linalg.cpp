#include <algorithm>

#include "kernels.hpp"
#include "ops_internal.hpp"
#include "transweather/error.hpp"
#include "transweather/ops.hpp"

namespace tw {

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.dim(-1) != b.dim(-2)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);

  if (b.rank() == 2) {
    // Weight-style right operand: fold every leading axis of `a` into rows.
    const std::size_t rows = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<Real> out(rows * n, Real(0));
    kernels::gemm_acc(rows, n, k, a.data().data(), b.data().data(), out.data());
    Tensor<Real> result(std::move(out_shape), std::move(out));
    if (needs_grad({a, b})) {
      record_op<Real>("matmul", result, {a, b}, [a, b, rows, n, k](std::span<const Real> g) {
        std::vector<Real> scratch;
        if (a.requires_grad()) {
          kernels::gemm_acc_bt(rows, n, k, g.data(), b.data().data(), a.grad_buffer().data(), scratch);
        }
        if (b.requires_grad()) {
          kernels::gemm_acc_at(rows, n, k, a.data().data(), g.data(), b.grad_buffer().data(), scratch);
        }
      });
    }
    return result;
  }

  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  const detail::BroadcastPlan plan = detail::make_plan(batch_a, batch_b);
  Shape out_shape = plan.out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<Real> out(shape_numel(out_shape), Real(0));
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    kernels::gemm_acc(m, n, k, pa + ia * m * k, pb + ib * k * n, out.data() + o * m * n);
  });
  Tensor<Real> result(std::move(out_shape), std::move(out));
  if (needs_grad({a, b})) {
    record_op<Real>("matmul", result, {a, b}, [a, b, plan, m, n, k](std::span<const Real> g) {
      std::vector<Real> scratch;
      const Real* pa = a.data().data();
      const Real* pb = b.data().data();
      Real* ga = a.requires_grad() ? a.grad_buffer().data() : nullptr;
      Real* gb = b.requires_grad() ? b.grad_buffer().data() : nullptr;
      detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        const Real* go = g.data() + o * m * n;
        if (ga) kernels::gemm_acc_bt(m, n, k, go, pb + ib * k * n, ga + ia * m * k, scratch);
        if (gb) kernels::gemm_acc_at(m, n, k, pa + ia * m * k, go, gb + ib * k * n, scratch);
      });
    });
  }
  return result;
}

template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not fit weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t in = weight.dim(0), out_dim = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not fit weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<Real> out(rows * out_dim, Real(0));
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(bias.data().begin(), bias.data().end(), out.begin() + static_cast<std::ptrdiff_t>(r * out_dim));
    }
  }
  kernels::gemm_acc(rows, out_dim, in, x.data().data(), weight.data().data(), out.data());
  Tensor<Real> result(std::move(out_shape), std::move(out));
  if (needs_grad({x, weight, bias})) {
    record_op<Real>("linear", result, {x, weight, bias},
                    [x, weight, bias, rows, in, out_dim](std::span<const Real> g) {
                      std::vector<Real> scratch;
                      if (x.requires_grad()) {
                        kernels::gemm_acc_bt(rows, out_dim, in, g.data(), weight.data().data(),
                                             x.grad_buffer().data(), scratch);
                      }
                      if (weight.requires_grad()) {
                        kernels::gemm_acc_at(rows, out_dim, in, x.data().data(), g.data(),
                                             weight.grad_buffer().data(), scratch);
                      }
                      if (bias.defined() && bias.requires_grad()) {
                        auto gb = bias.grad_buffer();
                        for (std::size_t r = 0; r < rows; ++r) {
                          const Real* gr = g.data() + r * out_dim;
                          for (std::size_t j = 0; j < out_dim; ++j) gb[j] += gr[j];
                        }
                      }
                    });
  }
  return result;
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, k, stride, pad, groups, ho, wo;
  std::size_t cin_g() const { return cin / groups; }
  std::size_t cout_g() const { return cout / groups; }
  std::size_t col_rows() const { return cin_g() * k * k; }
  std::size_t col_cols() const { return ho * wo; }
};

// col[(c*k + ky)*k + kx, oy*wo + ox] = x[c0 + c, oy*s + ky - p, ox*s + kx - p]
template <typename Real>
void im2col(const ConvGeometry& g, const Real* x, std::size_t c0, Real* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.cin_g(); ++c) {
    const Real* plane = x + (c0 + c) * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        Real* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          Real* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, Real(0));
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? Real(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im_acc(const ConvGeometry& g, const Real* col, std::size_t c0, Real* dx) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.cin_g(); ++c) {
    Real* plane = dx + (c0 + c) * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const Real* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          Real* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const Real* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Real>
void depthwise_forward(const ConvGeometry& g, const Real* x, const Real* w, Real* out) {
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t c = 0; c < g.cin; ++c) {
      const Real* plane = x + (b * g.cin + c) * g.h * g.w;
      const Real* kern = w + c * g.k * g.k;
      Real* dst = out + (b * g.cout + c) * g.ho * g.wo;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const Real kv = kern[ky * g.k + kx];
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const Real* src = plane + static_cast<std::size_t>(iy) * g.w;
            Real* drow = dst + oy * g.wo;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
              if (ix >= 0 && ix < static_cast<long>(g.w)) drow[ox] += kv * src[ix];
            }
          }
        }
      }
    }
  }
}

template <typename Real>
void depthwise_backward(const ConvGeometry& g, const Real* x, const Real* w, const Real* gout,
                        Real* dx, Real* dw) {
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t c = 0; c < g.cin; ++c) {
      const Real* plane = x + (b * g.cin + c) * g.h * g.w;
      Real* dplane = dx ? dx + (b * g.cin + c) * g.h * g.w : nullptr;
      const Real* kern = w + c * g.k * g.k;
      Real* dkern = dw ? dw + c * g.k * g.k : nullptr;
      const Real* go = gout + (b * g.cout + c) * g.ho * g.wo;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const Real kv = kern[ky * g.k + kx];
          Real acc = 0;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const std::size_t row = static_cast<std::size_t>(iy) * g.w;
            const Real* grow = go + oy * g.wo;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
              if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
              acc += grow[ox] * plane[row + static_cast<std::size_t>(ix)];
              if (dplane) dplane[row + static_cast<std::size_t>(ix)] += kv * grow[ox];
            }
          }
          if (dkern) dkern[ky * g.k + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias,
                    Conv2dOptions options) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d: expected x[B,C,H,W] and square weight[Co,Ci/g,k,k], got " +
                         shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  }
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = options.stride;
  g.pad = options.padding;
  g.groups = options.groups;
  if (g.groups == 0 || g.stride == 0 || g.cin % g.groups != 0 || g.cout % g.groups != 0 ||
      weight.dim(1) != g.cin / g.groups) {
    throw DimensionError("conv2d: channels of " + shape_str(x.shape()) + " / weight " +
                         shape_str(weight.shape()) + " not divisible into " +
                         std::to_string(g.groups) + " groups");
  }
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.k) + " larger than padded input " +
                         shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(g.cout) + " output channels");
  }
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;

  const std::size_t plane_out = g.ho * g.wo;
  std::vector<Real> out(g.batch * g.cout * plane_out, Real(0));
  if (bias.defined()) {
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t c = 0; c < g.cout; ++c) {
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((b * g.cout + c) * plane_out), plane_out,
                    bias.data()[c]);
      }
    }
  }
  const bool depthwise = g.groups == g.cin && g.cout == g.cin;
  if (depthwise) {
    depthwise_forward(g, x.data().data(), weight.data().data(), out.data());
  } else {
    std::vector<Real> col(g.col_rows() * g.col_cols());
    for (std::size_t b = 0; b < g.batch; ++b) {
      const Real* xb = x.data().data() + b * g.cin * g.h * g.w;
      for (std::size_t grp = 0; grp < g.groups; ++grp) {
        im2col(g, xb, grp * g.cin_g(), col.data());
        kernels::gemm_acc(g.cout_g(), g.col_cols(), g.col_rows(),
                          weight.data().data() + grp * g.cout_g() * g.col_rows(), col.data(),
                          out.data() + (b * g.cout + grp * g.cout_g()) * plane_out);
      }
    }
  }

  Tensor<Real> result(Shape{g.batch, g.cout, g.ho, g.wo}, std::move(out));
  if (needs_grad({x, weight, bias})) {
    record_op<Real>("conv2d", result, {x, weight, bias},
                    [x, weight, bias, g, depthwise](std::span<const Real> gout) {
      const std::size_t plane_out = g.ho * g.wo;
      Real* dx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
      Real* dw = weight.requires_grad() ? weight.grad_buffer().data() : nullptr;
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.grad_buffer();
        for (std::size_t b = 0; b < g.batch; ++b) {
          for (std::size_t c = 0; c < g.cout; ++c) {
            const Real* go = gout.data() + (b * g.cout + c) * plane_out;
            Real acc = 0;
            for (std::size_t i = 0; i < plane_out; ++i) acc += go[i];
            db[c] += acc;
          }
        }
      }
      if (!dx && !dw) return;
      if (depthwise) {
        depthwise_backward(g, x.data().data(), weight.data().data(), gout.data(), dx, dw);
        return;
      }
      std::vector<Real> col(g.col_rows() * g.col_cols());
      std::vector<Real> dcol(dx ? col.size() : 0);
      std::vector<Real> scratch;
      for (std::size_t b = 0; b < g.batch; ++b) {
        const Real* xb = x.data().data() + b * g.cin * g.h * g.w;
        for (std::size_t grp = 0; grp < g.groups; ++grp) {
          const Real* go = gout.data() + (b * g.cout + grp * g.cout_g()) * plane_out;
          const Real* wg = weight.data().data() + grp * g.cout_g() * g.col_rows();
          if (dw) {
            im2col(g, xb, grp * g.cin_g(), col.data());
            kernels::gemm_acc_bt(g.cout_g(), g.col_cols(), g.col_rows(), go, col.data(),
                                 dw + grp * g.cout_g() * g.col_rows(), scratch);
          }
          if (dx) {
            std::fill(dcol.begin(), dcol.end(), Real(0));
            kernels::gemm_acc_at(g.cout_g(), g.col_cols(), g.col_rows(), wg, go, dcol.data(), scratch);
            col2im_acc(g, dcol.data(), grp * g.cin_g(), dx + b * g.cin * g.h * g.w);
          }
        }
      }
    });
  }
  return result;
}

#define TW_INSTANTIATE(Real)                                                                      \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                         \
  template Tensor<Real> linear(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);    \
  template Tensor<Real> conv2d(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,     \
                               Conv2dOptions);

TW_INSTANTIATE(float)
TW_INSTANTIATE(double)
#undef TW_INSTANTIATE

}  // namespace tw
