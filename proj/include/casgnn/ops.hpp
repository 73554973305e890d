#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "casgnn/errors.hpp"
#include "casgnn/tape.hpp"
#include "casgnn/tensor.hpp"

namespace casgnn {

namespace detail {

template <class S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class S>
bool any_requires_grad(std::span<const Tensor<S>> ts) {
  for (const auto& t : ts)
    if (t.requires_grad()) return true;
  return false;
}

template <class S>
void record_if(bool requires_grad, std::function<void()> rule) {
  if (!requires_grad) return;
  if (auto* tape = Tape<S>::active()) tape->record(std::move(rule));
}

template <class S>
std::vector<S>& grad_of(const std::shared_ptr<TensorImpl<S>>& impl) {
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), S(0));
  return impl->grad;
}

// Unpacks input patches into a (inC*kh*kw) x (outH*outW) row-major matrix for
// one batch item. Out-of-range taps read as zero. Stride 1 copies whole row
// spans.
template <class S>
void im2col(const S* x, int ci, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, S* col) {
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        S* dst = col + (static_cast<std::size_t>((c * kh + ky) * kw + kx)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, S(0));
            dst += ow;
            continue;
          }
          const S* src = x + (static_cast<std::size_t>(c) * h + iy) * w;
          if (stride == 1) {
            const int ox0 = std::max(0, pad - kx);
            const int ox1 = std::min(ow, w + pad - kx);
            if (ox0 > 0) std::fill(dst, dst + ox0, S(0));
            if (ox1 > ox0) std::copy_n(src + ox0 + kx - pad, ox1 - ox0, dst + ox0);
            if (ox1 < ow) std::fill(dst + ox1, dst + ow, S(0));
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : S(0);
            }
          }
          dst += ow;
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
template <class S>
void col2im(const S* col, int ci, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, S* x) {
  for (int c = 0; c < ci; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const S* src = col + (static_cast<std::size_t>((c * kh + ky) * kw + kx)) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            src += ow;
            continue;
          }
          S* dst = x + (static_cast<std::size_t>(c) * h + iy) * w;
          if (stride == 1) {
            const int ox0 = std::max(0, pad - kx);
            const int ox1 = std::min(ow, w + pad - kx);
            const int shift = kx - pad;
            for (int ox = ox0; ox < ox1; ++ox) dst[ox + shift] += src[ox];
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < w) dst[ix] += src[ox];
            }
          }
          src += ow;
        }
      }
    }
  }
}

// Per-thread scratch for column buffers outside recorded forwards.
template <class S>
std::vector<S>& conv_scratch() {
  thread_local std::vector<S> buffer;
  return buffer;
}

// Per-axis bilinear sampling table with half-pixel centers.
struct ResizeTap {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;
};

inline std::vector<ResizeTap> resize_taps(int in, int out) {
  std::vector<ResizeTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(src);
    taps[i].lo = lo;
    taps[i].hi = std::min(lo + 1, in - 1);
    taps[i].frac = src - lo;
  }
  return taps;
}

}  // namespace detail

/// 2-D cross-correlation with zero padding and square stride.
/// input (B,Ci,H,W), weight (Co,Ci,kh,kw), bias of Co scalars.
template <class S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                 int stride, int padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (stride < 1) throw ConfigError("conv2d stride must be positive, got " + std::to_string(stride));
  if (padding < 0) throw ConfigError("conv2d padding must be non-negative, got " + std::to_string(padding));
  if (xs.c != ws.c) {
    throw DimensionError("conv2d channel mismatch: input " + xs.str() + " vs weight " + ws.str());
  }
  if (static_cast<int>(bias.size()) != ws.n) {
    throw DimensionError("conv2d bias size " + std::to_string(bias.size()) +
                         " does not match output channels " + std::to_string(ws.n));
  }
  const int oh = (xs.h + 2 * padding - ws.h) / stride + 1;
  const int ow = (xs.w + 2 * padding - ws.w) / stride + 1;
  if (ws.h > xs.h + 2 * padding || ws.w > xs.w + 2 * padding || oh < 1 || ow < 1) {
    throw DimensionError("conv2d kernel " + ws.str() + " does not fit input " + xs.str() +
                         " with padding " + std::to_string(padding));
  }

  const int b = xs.n, ci = xs.c, co = ws.n;
  const int k = ci * ws.h * ws.w;
  const int npix = oh * ow;
  Tensor<S> out = Tensor<S>::zeros({b, co, oh, ow});

  const bool req = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
  const bool recording = req && Tape<S>::active() != nullptr;

  // One column buffer covers all batch items; when recording it is kept
  // alive for the weight-gradient GEMM in the backward rule.
  const std::size_t col_len = static_cast<std::size_t>(k) * npix;
  std::shared_ptr<std::vector<S>> col_keep;
  std::vector<S>* col;
  if (recording) {
    col_keep = std::make_shared<std::vector<S>>(col_len * b);
    col = col_keep.get();
  } else {
    col = &detail::conv_scratch<S>();
    col->resize(col_len * b);
  }

  detail::ConstMatMap<S> wm(weight.data().data(), co, k);
  for (int bi = 0; bi < b; ++bi) {
    S* col_b = col->data() + col_len * bi;
    detail::im2col(input.data().data() + input.offset(bi, 0, 0, 0), ci, xs.h, xs.w, ws.h,
                   ws.w, stride, padding, oh, ow, col_b);
    detail::ConstMatMap<S> cm(col_b, k, npix);
    detail::MatMap<S> om(out.data().data() + out.offset(bi, 0, 0, 0), co, npix);
    om.noalias() = wm * cm;
    for (int oc = 0; oc < co; ++oc) om.row(oc).array() += bias.data()[oc];
  }
  check_finite("conv2d", out);

  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = input.impl(), wi = weight.impl(), bi2 = bias.impl(),
                             oi = out.impl(), col_keep, stride, padding, oh, ow]() {
    if (oi->grad.empty()) return;
    const Shape& xs = xi->shape;
    const Shape& ws = wi->shape;
    const int b = xs.n, ci = xs.c, co = ws.n;
    const int k = ci * ws.h * ws.w;
    const int npix = oh * ow;
    const std::size_t col_len = static_cast<std::size_t>(k) * npix;
    const std::size_t xstep = static_cast<std::size_t>(ci) * xs.h * xs.w;
    const std::size_t ostep = static_cast<std::size_t>(co) * npix;

    std::vector<S>& dcol = detail::conv_scratch<S>();
    dcol.resize(col_len);
    detail::ConstMatMap<S> wm(wi->data.data(), co, k);
    for (int bb = 0; bb < b; ++bb) {
      detail::ConstMatMap<S> gm(oi->grad.data() + bb * ostep, co, npix);
      if (bi2->requires_grad) {
        auto& gb = detail::grad_of(bi2);
        for (int oc = 0; oc < co; ++oc) gb[oc] += gm.row(oc).sum();
      }
      if (wi->requires_grad) {
        detail::ConstMatMap<S> cm(col_keep->data() + col_len * bb, k, npix);
        detail::MatMap<S> gw(detail::grad_of(wi).data(), co, k);
        gw.noalias() += gm * cm.transpose();
      }
      if (xi->requires_grad) {
        detail::MatMap<S> cm(dcol.data(), k, npix);
        cm.noalias() = wm.transpose() * gm;
        detail::col2im(dcol.data(), ci, xs.h, xs.w, ws.h, ws.w, stride, padding, oh, ow,
                       detail::grad_of(xi).data() + bb * xstep);
      }
    }
  });
  return out;
}

/// Mean pooling onto an (out_h, out_w) grid; output cell (i,j) averages the
/// input window [floor(i*H/oh), ceil((i+1)*H/oh)) x [floor(j*W/ow), ceil((j+1)*W/ow)).
template <class S>
Tensor<S> adaptive_avg_pool(const Tensor<S>& input, int out_h, int out_w) {
  const Shape& xs = input.shape();
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("adaptive_avg_pool output extent must be positive, got " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  if (out_h > xs.h || out_w > xs.w) {
    throw DimensionError("adaptive_avg_pool output " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " exceeds input " + xs.str());
  }
  Tensor<S> out = Tensor<S>::zeros({xs.n, xs.c, out_h, out_w});
  const auto row_lo = [&](int i) { return (i * xs.h) / out_h; };
  const auto row_hi = [&](int i) { return ((i + 1) * xs.h + out_h - 1) / out_h; };
  const auto col_lo = [&](int j) { return (j * xs.w) / out_w; };
  const auto col_hi = [&](int j) { return ((j + 1) * xs.w + out_w - 1) / out_w; };

  for (int b = 0; b < xs.n; ++b) {
    for (int c = 0; c < xs.c; ++c) {
      for (int i = 0; i < out_h; ++i) {
        for (int j = 0; j < out_w; ++j) {
          S acc = 0;
          for (int y = row_lo(i); y < row_hi(i); ++y)
            for (int x = col_lo(j); x < col_hi(j); ++x) acc += input.at(b, c, y, x);
          const int cnt = (row_hi(i) - row_lo(i)) * (col_hi(j) - col_lo(j));
          out.at(b, c, i, j) = acc / static_cast<S>(cnt);
        }
      }
    }
  }
  check_finite("adaptive_avg_pool", out);

  const bool req = input.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = input.impl(), oi = out.impl(), out_h, out_w]() {
    if (oi->grad.empty()) return;
    const Shape& xs = xi->shape;
    auto& gx = detail::grad_of(xi);
    for (int b = 0; b < xs.n; ++b) {
      for (int c = 0; c < xs.c; ++c) {
        const std::size_t xbase = (static_cast<std::size_t>(b) * xs.c + c) * xs.h * xs.w;
        const std::size_t obase = (static_cast<std::size_t>(b) * xs.c + c) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
          const int y0 = (i * xs.h) / out_h;
          const int y1 = ((i + 1) * xs.h + out_h - 1) / out_h;
          for (int j = 0; j < out_w; ++j) {
            const int x0 = (j * xs.w) / out_w;
            const int x1 = ((j + 1) * xs.w + out_w - 1) / out_w;
            const S g = oi->grad[obase + static_cast<std::size_t>(i) * out_w + j] /
                        static_cast<S>((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
              for (int x = x0; x < x1; ++x)
                gx[xbase + static_cast<std::size_t>(y) * xs.w + x] += g;
          }
        }
      }
    }
  });
  return out;
}

/// Bilinear interpolation to (out_h, out_w) using half-pixel centers:
/// source = (dst + 0.5) * in/out - 0.5, clamped to the valid range.
/// Constant maps are preserved exactly.
template <class S>
Tensor<S> bilinear_resize(const Tensor<S>& input, int out_h, int out_w) {
  const Shape& xs = input.shape();
  if (out_h < 1 || out_w < 1) {
    throw DimensionError("bilinear_resize output extent must be positive, got " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const auto ytap = detail::resize_taps(xs.h, out_h);
  const auto xtap = detail::resize_taps(xs.w, out_w);

  Tensor<S> out = Tensor<S>::zeros({xs.n, xs.c, out_h, out_w});
  for (int b = 0; b < xs.n; ++b) {
    for (int c = 0; c < xs.c; ++c) {
      for (int i = 0; i < out_h; ++i) {
        const auto& ty = ytap[i];
        for (int j = 0; j < out_w; ++j) {
          const auto& tx = xtap[j];
          const S a = input.at(b, c, ty.lo, tx.lo);
          const S bb = input.at(b, c, ty.lo, tx.hi);
          const S cc = input.at(b, c, ty.hi, tx.lo);
          const S d = input.at(b, c, ty.hi, tx.hi);
          const S top = a + static_cast<S>(tx.frac) * (bb - a);
          const S bot = cc + static_cast<S>(tx.frac) * (d - cc);
          out.at(b, c, i, j) = top + static_cast<S>(ty.frac) * (bot - top);
        }
      }
    }
  }
  check_finite("bilinear_resize", out);

  const bool req = input.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = input.impl(), oi = out.impl(), ytap, xtap, out_h, out_w]() {
    if (oi->grad.empty()) return;
    const Shape& xs = xi->shape;
    auto& gx = detail::grad_of(xi);
    std::size_t o = 0;
    for (int b = 0; b < xs.n; ++b) {
      for (int c = 0; c < xs.c; ++c) {
        const std::size_t base = (static_cast<std::size_t>(b) * xs.c + c) * xs.h * xs.w;
        for (int i = 0; i < out_h; ++i) {
          const auto& ty = ytap[i];
          for (int j = 0; j < out_w; ++j, ++o) {
            const auto& tx = xtap[j];
            const S g = oi->grad[o];
            const S fy = static_cast<S>(ty.frac), fx = static_cast<S>(tx.frac);
            gx[base + static_cast<std::size_t>(ty.lo) * xs.w + tx.lo] += g * (1 - fy) * (1 - fx);
            gx[base + static_cast<std::size_t>(ty.lo) * xs.w + tx.hi] += g * (1 - fy) * fx;
            gx[base + static_cast<std::size_t>(ty.hi) * xs.w + tx.lo] += g * fy * (1 - fx);
            gx[base + static_cast<std::size_t>(ty.hi) * xs.w + tx.hi] += g * fy * fx;
          }
        }
      }
    }
  });
  return out;
}

namespace detail {

template <class S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(op) + " shape mismatch: " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("add", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  check_finite("add", out);
  const bool req = a.requires_grad() || b.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
    if (oi->grad.empty()) return;
    if (ai->requires_grad) {
      auto& g = detail::grad_of(ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      auto& g = detail::grad_of(bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
    }
  });
  return out;
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("sub", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  check_finite("sub", out);
  const bool req = a.requires_grad() || b.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
    if (oi->grad.empty()) return;
    if (ai->requires_grad) {
      auto& g = detail::grad_of(ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      auto& g = detail::grad_of(bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= oi->grad[i];
    }
  });
  return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("mul", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  check_finite("mul", out);
  const bool req = a.requires_grad() || b.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [ai = a.impl(), bi = b.impl(), oi = out.impl()]() {
    if (oi->grad.empty()) return;
    if (ai->requires_grad) {
      auto& g = detail::grad_of(ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      auto& g = detail::grad_of(bi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * ai->data[i];
    }
  });
  return out;
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const S v = x.data()[i];
    out.data()[i] = v >= 0 ? S(1) / (S(1) + std::exp(-v))
                           : std::exp(v) / (S(1) + std::exp(v));
  }
  check_finite("sigmoid", out);
  const bool req = x.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = x.impl(), oi = out.impl()]() {
    if (oi->grad.empty() || !xi->requires_grad) return;
    auto& g = detail::grad_of(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const S y = oi->data[i];
      g[i] += oi->grad[i] * y * (S(1) - y);
    }
  });
  return out;
}

template <class S>
Tensor<S> tanh(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(x.data()[i]);
  check_finite("tanh", out);
  const bool req = x.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = x.impl(), oi = out.impl()]() {
    if (oi->grad.empty() || !xi->requires_grad) return;
    auto& g = detail::grad_of(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const S y = oi->data[i];
      g[i] += oi->grad[i] * (S(1) - y * y);
    }
  });
  return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(S(0), x.data()[i]);
  check_finite("relu", out);
  const bool req = x.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = x.impl(), oi = out.impl()]() {
    if (oi->grad.empty() || !xi->requires_grad) return;
    auto& g = detail::grad_of(xi);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xi->data[i] > S(0)) g[i] += oi->grad[i];
  });
  return out;
}

/// Multiplies every spatial position of channel c by gate[c]. The gate is a
/// channel vector shaped (1,C,1,1) (shared across the batch) or (B,C,1,1)
/// (one gate per batch item).
template <class S>
Tensor<S> scale_channels(const Tensor<S>& x, const Tensor<S>& gate) {
  const Shape& xs = x.shape();
  const Shape& gs = gate.shape();
  if (gs.c != xs.c || gs.h != 1 || gs.w != 1 || (gs.n != 1 && gs.n != xs.n)) {
    throw DimensionError("scale_channels gate " + gs.str() + " incompatible with input " +
                         xs.str());
  }
  Tensor<S> out = Tensor<S>::zeros(xs);
  const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
  for (int b = 0; b < xs.n; ++b) {
    const int gb = gs.n == 1 ? 0 : b;
    for (int c = 0; c < xs.c; ++c) {
      const S s = gate.data()[static_cast<std::size_t>(gb) * gs.c + c];
      const std::size_t base = (static_cast<std::size_t>(b) * xs.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) out.data()[base + i] = x.data()[base + i] * s;
    }
  }
  check_finite("scale_channels", out);
  const bool req = x.requires_grad() || gate.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = x.impl(), gi = gate.impl(), oi = out.impl()]() {
    if (oi->grad.empty()) return;
    const Shape& xs = xi->shape;
    const Shape& gs = gi->shape;
    const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
    for (int b = 0; b < xs.n; ++b) {
      const int gb = gs.n == 1 ? 0 : b;
      for (int c = 0; c < xs.c; ++c) {
        const std::size_t gidx = static_cast<std::size_t>(gb) * gs.c + c;
        const std::size_t base = (static_cast<std::size_t>(b) * xs.c + c) * plane;
        if (xi->requires_grad) {
          auto& gx = detail::grad_of(xi);
          const S s = gi->data[gidx];
          for (std::size_t i = 0; i < plane; ++i) gx[base + i] += oi->grad[base + i] * s;
        }
        if (gi->requires_grad) {
          auto& gg = detail::grad_of(gi);
          S acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += oi->grad[base + i] * xi->data[base + i];
          gg[gidx] += acc;
        }
      }
    }
  });
  return out;
}

/// Per-channel spatial mean, (B,C,H,W) -> (B,C,1,1).
template <class S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  const Shape& xs = x.shape();
  if (xs.h < 1 || xs.w < 1) {
    throw DimensionError("global_avg_pool requires nonzero spatial extents, got " + xs.str());
  }
  Tensor<S> out = Tensor<S>::zeros({xs.n, xs.c, 1, 1});
  const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
  for (int b = 0; b < xs.n; ++b) {
    for (int c = 0; c < xs.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(b) * xs.c + c) * plane;
      S acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += x.data()[base + i];
      out.data()[static_cast<std::size_t>(b) * xs.c + c] = acc / static_cast<S>(plane);
    }
  }
  check_finite("global_avg_pool", out);
  const bool req = x.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = x.impl(), oi = out.impl()]() {
    if (oi->grad.empty() || !xi->requires_grad) return;
    const Shape& xs = xi->shape;
    const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
    auto& gx = detail::grad_of(xi);
    for (int b = 0; b < xs.n; ++b) {
      for (int c = 0; c < xs.c; ++c) {
        const S g = oi->grad[static_cast<std::size_t>(b) * xs.c + c] / static_cast<S>(plane);
        const std::size_t base = (static_cast<std::size_t>(b) * xs.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) gx[base + i] += g;
      }
    }
  });
  return out;
}

/// Concatenates along the channel axis; inputs must agree on batch and
/// spatial extents. Input order is preserved.
template <class S>
Tensor<S> concat_channels(std::span<const Tensor<S>> inputs) {
  if (inputs.empty()) throw UsageError("concat_channels requires at least one input");
  const Shape& first = inputs[0].shape();
  int total_c = 0;
  for (const auto& t : inputs) {
    const Shape& s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw DimensionError("concat_channels extent mismatch: " + first.str() + " vs " + s.str());
    }
    total_c += s.c;
  }
  Tensor<S> out = Tensor<S>::zeros({first.n, total_c, first.h, first.w});
  const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;
  for (int b = 0; b < first.n; ++b) {
    std::size_t dst = (static_cast<std::size_t>(b) * total_c) * plane;
    for (const auto& t : inputs) {
      const std::size_t len = static_cast<std::size_t>(t.shape().c) * plane;
      const std::size_t src = (static_cast<std::size_t>(b) * t.shape().c) * plane;
      std::copy_n(t.data().data() + src, len, out.data().data() + dst);
      dst += len;
    }
  }
  check_finite("concat_channels", out);
  const bool req = detail::any_requires_grad(inputs);
  out.set_requires_grad(req);
  if (req) {
    std::vector<std::shared_ptr<TensorImpl<S>>> impls;
    impls.reserve(inputs.size());
    for (const auto& t : inputs) impls.push_back(t.impl());
    detail::record_if<S>(req, [impls = std::move(impls), oi = out.impl(), total_c, plane]() {
      if (oi->grad.empty()) return;
      const int b_n = oi->shape.n;
      for (int b = 0; b < b_n; ++b) {
        std::size_t src = (static_cast<std::size_t>(b) * total_c) * plane;
        for (const auto& xi : impls) {
          const std::size_t len = static_cast<std::size_t>(xi->shape.c) * plane;
          if (xi->requires_grad) {
            auto& g = detail::grad_of(xi);
            const std::size_t dst = (static_cast<std::size_t>(b) * xi->shape.c) * plane;
            for (std::size_t i = 0; i < len; ++i) g[dst + i] += oi->grad[src + i];
          }
          src += len;
        }
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> concat_channels(std::initializer_list<Tensor<S>> inputs) {
  std::vector<Tensor<S>> v(inputs);
  return concat_channels(std::span<const Tensor<S>>(v));
}

/// Channel slice [c0, c0+len).
template <class S>
Tensor<S> slice_channels(const Tensor<S>& x, int c0, int len) {
  const Shape& xs = x.shape();
  if (c0 < 0 || len < 1 || c0 + len > xs.c) {
    throw DimensionError("slice_channels [" + std::to_string(c0) + "," +
                         std::to_string(c0 + len) + ") out of range for " + xs.str());
  }
  Tensor<S> out = Tensor<S>::zeros({xs.n, len, xs.h, xs.w});
  const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
  for (int b = 0; b < xs.n; ++b) {
    std::copy_n(x.data().data() + (static_cast<std::size_t>(b) * xs.c + c0) * plane,
                static_cast<std::size_t>(len) * plane,
                out.data().data() + (static_cast<std::size_t>(b) * len) * plane);
  }
  const bool req = x.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = x.impl(), oi = out.impl(), c0, len, plane]() {
    if (oi->grad.empty() || !xi->requires_grad) return;
    const Shape& xs = xi->shape;
    auto& g = detail::grad_of(xi);
    for (int b = 0; b < xs.n; ++b) {
      const std::size_t dst = (static_cast<std::size_t>(b) * xs.c + c0) * plane;
      const std::size_t src = (static_cast<std::size_t>(b) * len) * plane;
      for (std::size_t i = 0; i < static_cast<std::size_t>(len) * plane; ++i)
        g[dst + i] += oi->grad[src + i];
    }
  });
  return out;
}

/// Sum of all cells as a (1,1,1,1) scalar.
template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc = 0;
  for (const S v : x.data()) acc += v;
  Tensor<S> out = Tensor<S>::scalar(acc);
  check_finite("sum", out);
  const bool req = x.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = x.impl(), oi = out.impl()]() {
    if (oi->grad.empty() || !xi->requires_grad) return;
    auto& g = detail::grad_of(xi);
    const S go = oi->grad[0];
    for (auto& v : g) v += go;
  });
  return out;
}

/// Mean binary cross entropy on logits, in the numerically stable form
/// max(x,0) - x*t + log(1 + exp(-|x|)). Targets must lie in [0,1].
template <class S>
Tensor<S> bce_with_logits(const Tensor<S>& logits, const Tensor<S>& target) {
  detail::check_same_shape("bce_with_logits", logits, target);
  for (const S t : target.data()) {
    if (!(t >= S(0) && t <= S(1))) {
      throw DomainError("bce_with_logits target outside [0,1]");
    }
  }
  const std::size_t count = logits.size();
  S acc = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const S x = logits.data()[i];
    const S t = target.data()[i];
    acc += std::max(x, S(0)) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  Tensor<S> out = Tensor<S>::scalar(acc / static_cast<S>(count));
  check_finite("bce_with_logits", out);
  const bool req = logits.requires_grad() || target.requires_grad();
  out.set_requires_grad(req);
  detail::record_if<S>(req, [xi = logits.impl(), ti = target.impl(), oi = out.impl(), count]() {
    if (oi->grad.empty()) return;
    const S go = oi->grad[0] / static_cast<S>(count);
    if (xi->requires_grad) {
      auto& g = detail::grad_of(xi);
      for (std::size_t i = 0; i < count; ++i) {
        const S x = xi->data[i];
        const S sig = x >= 0 ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
        g[i] += go * (sig - ti->data[i]);
      }
    }
    if (ti->requires_grad) {
      auto& g = detail::grad_of(ti);
      for (std::size_t i = 0; i < count; ++i) g[i] += go * (-xi->data[i]);
    }
  });
  return out;
}

}  // namespace casgnn
