#pragma once

// Independent nested-loop reference implementations used by the unit and
// acceptance suites. These deliberately share no code with casgnn/ops.hpp:
// convolution is computed by direct patch loops, pooling by explicit window
// enumeration, resizing by the four-tap half-pixel formula.

#include <algorithm>
#include <cmath>
#include <vector>

#include "casgnn/graph.hpp"
#include "casgnn/rng.hpp"
#include "casgnn/tensor.hpp"

namespace oracles {

template <class S>
casgnn::Tensor<S> random_tensor(casgnn::Shape shape, casgnn::Rng& rng, double lo = -1.0,
                                double hi = 1.0, bool requires_grad = false) {
  auto t = casgnn::Tensor<S>::zeros(shape, requires_grad);
  for (auto& v : t.data()) v = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <class S>
double max_abs_diff(const casgnn::Tensor<S>& a, const casgnn::Tensor<S>& b) {
  if (!(a.shape() == b.shape())) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
  }
  return m;
}

template <class S>
casgnn::Tensor<S> conv_oracle(const casgnn::Tensor<S>& x, const casgnn::Tensor<S>& w,
                              const casgnn::Tensor<S>& bias, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1;
  const int ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  auto out = casgnn::Tensor<S>::zeros({xs.n, ws.n, oh, ow});
  for (int b = 0; b < xs.n; ++b) {
    for (int oc = 0; oc < ws.n; ++oc) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = static_cast<double>(bias.data()[oc]);
          for (int ic = 0; ic < xs.c; ++ic) {
            for (int ky = 0; ky < ws.h; ++ky) {
              for (int kx = 0; kx < ws.w; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                acc += static_cast<double>(x.at(b, ic, iy, ix)) *
                       static_cast<double>(w.at(oc, ic, ky, kx));
              }
            }
          }
          out.at(b, oc, oy, ox) = static_cast<S>(acc);
        }
      }
    }
  }
  return out;
}

template <class S>
casgnn::Tensor<S> adaptive_pool_oracle(const casgnn::Tensor<S>& x, int oh, int ow) {
  const auto& xs = x.shape();
  auto out = casgnn::Tensor<S>::zeros({xs.n, xs.c, oh, ow});
  for (int b = 0; b < xs.n; ++b) {
    for (int c = 0; c < xs.c; ++c) {
      for (int i = 0; i < oh; ++i) {
        const int y0 = static_cast<int>(std::floor(static_cast<double>(i) * xs.h / oh));
        const int y1 = static_cast<int>(std::ceil(static_cast<double>(i + 1) * xs.h / oh));
        for (int j = 0; j < ow; ++j) {
          const int x0 = static_cast<int>(std::floor(static_cast<double>(j) * xs.w / ow));
          const int x1 = static_cast<int>(std::ceil(static_cast<double>(j + 1) * xs.w / ow));
          double acc = 0;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) acc += static_cast<double>(x.at(b, c, y, xx));
          out.at(b, c, i, j) = static_cast<S>(acc / ((y1 - y0) * (x1 - x0)));
        }
      }
    }
  }
  return out;
}

template <class S>
casgnn::Tensor<S> resize_oracle(const casgnn::Tensor<S>& x, int oh, int ow) {
  const auto& xs = x.shape();
  auto out = casgnn::Tensor<S>::zeros({xs.n, xs.c, oh, ow});
  const auto tap = [](int dst, int in, int outn, int* lo, int* hi, double* f) {
    double src = (dst + 0.5) * (static_cast<double>(in) / outn) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    *lo = static_cast<int>(std::floor(src));
    *hi = std::min(*lo + 1, in - 1);
    *f = src - *lo;
  };
  for (int b = 0; b < xs.n; ++b) {
    for (int c = 0; c < xs.c; ++c) {
      for (int i = 0; i < oh; ++i) {
        int y0, y1;
        double fy;
        tap(i, xs.h, oh, &y0, &y1, &fy);
        for (int j = 0; j < ow; ++j) {
          int x0, x1;
          double fx;
          tap(j, xs.w, ow, &x0, &x1, &fx);
          const double v = (1 - fy) * (1 - fx) * static_cast<double>(x.at(b, c, y0, x0)) +
                           (1 - fy) * fx * static_cast<double>(x.at(b, c, y0, x1)) +
                           fy * (1 - fx) * static_cast<double>(x.at(b, c, y1, x0)) +
                           fy * fx * static_cast<double>(x.at(b, c, y1, x1));
          out.at(b, c, i, j) = static_cast<S>(v);
        }
      }
    }
  }
  return out;
}

template <class S>
casgnn::Tensor<S> gap_oracle(const casgnn::Tensor<S>& x) {
  const auto& xs = x.shape();
  auto out = casgnn::Tensor<S>::zeros({xs.n, xs.c, 1, 1});
  for (int b = 0; b < xs.n; ++b) {
    for (int c = 0; c < xs.c; ++c) {
      double acc = 0;
      for (int y = 0; y < xs.h; ++y)
        for (int xx = 0; xx < xs.w; ++xx) acc += static_cast<double>(x.at(b, c, y, xx));
      out.at(b, c, 0, 0) = static_cast<S>(acc / (static_cast<double>(xs.h) * xs.w));
    }
  }
  return out;
}

/// Brute-force message aggregation: walks every edge, applies the sigmoid
/// gate elementwise and accumulates per destination node.
template <class S>
std::vector<casgnn::Tensor<S>> message_oracle(const std::vector<casgnn::Tensor<S>>& states,
                                              const std::vector<casgnn::Tensor<S>>& edges,
                                              const casgnn::GraphTopology& topology) {
  std::vector<casgnn::Tensor<S>> messages;
  for (const auto& s : states) messages.push_back(casgnn::Tensor<S>::zeros(s.shape()));
  for (std::size_t i = 0; i < topology.edges.size(); ++i) {
    const auto& e = topology.edges[i];
    for (std::size_t j = 0; j < states[e.src].size(); ++j) {
      const double gate = 1.0 / (1.0 + std::exp(-static_cast<double>(edges[i].data()[j])));
      messages[e.dst].data()[j] +=
          static_cast<S>(gate * static_cast<double>(states[e.src].data()[j]));
    }
  }
  return messages;
}

}  // namespace oracles
