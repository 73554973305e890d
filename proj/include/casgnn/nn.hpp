#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "casgnn/ops.hpp"
#include "casgnn/rng.hpp"
#include "casgnn/tensor.hpp"

namespace casgnn {

/// Convolution layer: weight (outC,inC,k,k) + bias, fixed stride/padding.
/// Weights draw from uniform(-b, b) with b = sqrt(6 / (fanIn + fanOut)),
/// fan counted over the full kernel; biases start at zero.
template <class S>
struct Conv2d {
  Tensor<S> weight;
  Tensor<S> bias;
  int stride = 1;
  int padding = 0;

  static Conv2d init(int in_c, int out_c, int k, int stride, int padding, Rng& rng) {
    Conv2d layer;
    layer.stride = stride;
    layer.padding = padding;
    layer.weight = Tensor<S>::zeros({out_c, in_c, k, k}, /*requires_grad=*/true);
    layer.bias = Tensor<S>::zeros({1, out_c, 1, 1}, /*requires_grad=*/true);
    const double bound = xavier_bound(in_c, out_c, k);
    for (auto& v : layer.weight.data()) v = static_cast<S>(rng.uniform(-bound, bound));
    return layer;
  }

  static double xavier_bound(int in_c, int out_c, int k) {
    const double fan_in = static_cast<double>(in_c) * k * k;
    const double fan_out = static_cast<double>(out_c) * k * k;
    return std::sqrt(6.0 / (fan_in + fan_out));
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return conv2d(x, weight, bias, stride, padding);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

}  // namespace casgnn
