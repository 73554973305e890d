#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "casgnn/cascade.hpp"
#include "casgnn/graph.hpp"
#include "casgnn/model.hpp"
#include "casgnn/ops.hpp"
#include "casgnn/rng.hpp"
#include "casgnn/tape.hpp"

namespace casgnn {

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-6;
  int coords_per_tensor = 100;
  std::string fault_target;  // testing hook: corrupts matching analytic grads
};

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Central finite-difference check of d(loss)/d(param) for every named
/// parameter, on up to coords_per_tensor sampled coordinates each. The
/// relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1),
/// i.e. relative for O(1) gradients and absolute below that scale.
template <class S>
std::vector<GradCheckReport> check_gradients(
    std::vector<std::pair<std::string, Tensor<S>>> params,
    const std::function<Tensor<S>()>& loss_fn, const GradCheckOptions& opts, Rng& rng) {
  for (auto& [name, p] : params) p.zero_grad();
  std::vector<std::vector<S>> analytic;
  {
    Tape<S> tape;
    Tensor<S> loss = loss_fn();
    tape.backward(loss);
  }
  for (auto& [name, p] : params) {
    analytic.push_back(p.has_grad() ? p.grad() : std::vector<S>(p.size(), S(0)));
    p.zero_grad();
  }

  std::vector<GradCheckReport> reports;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& tensor = params[pi].second;
    GradCheckReport report;
    report.name = params[pi].first;

    if (!opts.fault_target.empty() &&
        report.name.starts_with(opts.fault_target)) {
      analytic[pi][0] += S(0.01);
    }

    const std::size_t size = tensor.size();
    std::vector<std::size_t> coords(size);
    for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    for (std::size_t i = size; i > 1; --i) {
      std::swap(coords[i - 1], coords[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    }
    const std::size_t checked = std::min<std::size_t>(size, opts.coords_per_tensor);

    for (std::size_t ci = 0; ci < checked; ++ci) {
      const std::size_t j = coords[ci];
      const S original = tensor.data()[j];
      tensor.data()[j] = original + static_cast<S>(opts.eps);
      const double plus = static_cast<double>(loss_fn().item());
      tensor.data()[j] = original - static_cast<S>(opts.eps);
      const double minus = static_cast<double>(loss_fn().item());
      tensor.data()[j] = original;
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      const double a = static_cast<double>(analytic[pi][j]);
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
      report.max_rel_err = std::max(report.max_rel_err, rel);
    }
    report.pass = report.max_rel_err < opts.tolerance;
    reports.push_back(std::move(report));
  }
  return reports;
}

namespace gradcheck_detail {

template <class S>
Tensor<S> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = true) {
  Tensor<S> t = Tensor<S>::zeros(shape, requires_grad);
  for (auto& v : t.data()) v = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

/// Values in +-[0.2, 1]: keeps relu pre-activations away from the kink.
template <class S>
Tensor<S> random_signed_tensor(Shape shape, Rng& rng) {
  Tensor<S> t = Tensor<S>::zeros(shape, true);
  for (auto& v : t.data()) {
    const double magnitude = rng.uniform(0.2, 1.0);
    v = static_cast<S>(rng.coin() ? magnitude : -magnitude);
  }
  return t;
}

/// Weighted sum against fixed positive weights: keeps the per-coordinate
/// loss gradients O(1) regardless of tensor size.
template <class S>
Tensor<S> weighted_sum(const Tensor<S>& x, const Tensor<S>& weights) {
  return sum(mul(x, weights));
}

}  // namespace gradcheck_detail

/// Per-operation gradient checks on small random inputs.
template <class S>
std::vector<GradCheckReport> run_ops_gradcheck(const GradCheckOptions& opts) {
  namespace gd = gradcheck_detail;
  std::vector<GradCheckReport> all;
  Rng rng(20240811u);

  const auto run = [&](const std::string& op,
                       std::vector<std::pair<std::string, Tensor<S>>> params,
                       std::function<Tensor<S>()> loss) {
    Rng coord_rng(rng.next_u32());
    for (auto& [name, p] : params) name = op + "." + name;
    auto reports = check_gradients<S>(std::move(params), loss, opts, coord_rng);
    for (auto& r : reports) all.push_back(std::move(r));
  };

  {
    auto x = gd::random_tensor<S>({2, 3, 5, 5}, rng);
    auto w = gd::random_tensor<S>({4, 3, 3, 3}, rng);
    auto b = gd::random_tensor<S>({1, 4, 1, 1}, rng);
    auto r = gd::random_tensor<S>({2, 4, 5, 5}, rng, 0.5, 1.5, false);
    run("conv2d", {{"input", x}, {"weight", w}, {"bias", b}},
        [=]() { return gd::weighted_sum(conv2d(x, w, b, 1, 1), r); });
  }
  {
    auto x = gd::random_tensor<S>({1, 2, 6, 6}, rng);
    auto w = gd::random_tensor<S>({3, 2, 3, 3}, rng);
    auto b = gd::random_tensor<S>({1, 3, 1, 1}, rng);
    auto r = gd::random_tensor<S>({1, 3, 3, 3}, rng, 0.5, 1.5, false);
    run("conv2d_strided", {{"input", x}, {"weight", w}, {"bias", b}},
        [=]() { return gd::weighted_sum(conv2d(x, w, b, 2, 1), r); });
  }
  {
    auto x = gd::random_tensor<S>({1, 2, 7, 5}, rng);
    auto r = gd::random_tensor<S>({1, 2, 3, 2}, rng, 0.5, 1.5, false);
    run("adaptive_avg_pool", {{"input", x}},
        [=]() { return gd::weighted_sum(adaptive_avg_pool(x, 3, 2), r); });
  }
  {
    auto x = gd::random_tensor<S>({1, 2, 5, 7}, rng);
    auto r = gd::random_tensor<S>({1, 2, 8, 4}, rng, 0.5, 1.5, false);
    run("bilinear_resize", {{"input", x}},
        [=]() { return gd::weighted_sum(bilinear_resize(x, 8, 4), r); });
  }
  {
    auto a = gd::random_tensor<S>({2, 3, 4, 4}, rng);
    auto b = gd::random_tensor<S>({2, 3, 4, 4}, rng);
    auto r = gd::random_tensor<S>({2, 3, 4, 4}, rng, 0.5, 1.5, false);
    run("add", {{"a", a}, {"b", b}}, [=]() { return gd::weighted_sum(add(a, b), r); });
    run("sub", {{"a", a}, {"b", b}}, [=]() { return gd::weighted_sum(sub(a, b), r); });
    run("mul", {{"a", a}, {"b", b}}, [=]() { return gd::weighted_sum(mul(a, b), r); });
  }
  {
    auto x = gd::random_tensor<S>({1, 2, 4, 4}, rng, -2.0, 2.0);
    auto r = gd::random_tensor<S>({1, 2, 4, 4}, rng, 0.5, 1.5, false);
    run("sigmoid", {{"input", x}}, [=]() { return gd::weighted_sum(sigmoid(x), r); });
    run("tanh", {{"input", x}}, [=]() { return gd::weighted_sum(casgnn::tanh(x), r); });
  }
  {
    auto x = gd::random_signed_tensor<S>({1, 3, 4, 4}, rng);
    auto r = gd::random_tensor<S>({1, 3, 4, 4}, rng, 0.5, 1.5, false);
    run("relu", {{"input", x}}, [=]() { return gd::weighted_sum(relu(x), r); });
  }
  {
    auto x = gd::random_tensor<S>({2, 3, 4, 4}, rng);
    auto g_shared = gd::random_tensor<S>({1, 3, 1, 1}, rng);
    auto g_batched = gd::random_tensor<S>({2, 3, 1, 1}, rng);
    auto r = gd::random_tensor<S>({2, 3, 4, 4}, rng, 0.5, 1.5, false);
    run("scale_channels", {{"input", x}, {"gate", g_shared}},
        [=]() { return gd::weighted_sum(scale_channels(x, g_shared), r); });
    run("scale_channels_batched", {{"input", x}, {"gate", g_batched}},
        [=]() { return gd::weighted_sum(scale_channels(x, g_batched), r); });
  }
  {
    auto x = gd::random_tensor<S>({2, 4, 6, 6}, rng);
    auto r = gd::random_tensor<S>({2, 4, 1, 1}, rng, 0.5, 1.5, false);
    run("global_avg_pool", {{"input", x}},
        [=]() { return gd::weighted_sum(global_avg_pool(x), r); });
  }
  {
    auto a = gd::random_tensor<S>({1, 2, 4, 4}, rng);
    auto b = gd::random_tensor<S>({1, 3, 4, 4}, rng);
    auto c = gd::random_tensor<S>({1, 1, 4, 4}, rng);
    auto r = gd::random_tensor<S>({1, 6, 4, 4}, rng, 0.5, 1.5, false);
    run("concat_channels", {{"a", a}, {"b", b}, {"c", c}},
        [=]() { return gd::weighted_sum(concat_channels<S>({a, b, c}), r); });
  }
  {
    auto x = gd::random_tensor<S>({1, 5, 3, 3}, rng);
    auto r = gd::random_tensor<S>({1, 3, 3, 3}, rng, 0.5, 1.5, false);
    run("slice_channels", {{"input", x}},
        [=]() { return gd::weighted_sum(slice_channels(x, 1, 3), r); });
  }
  {
    auto x = gd::random_tensor<S>({2, 2, 3, 3}, rng);
    run("sum", {{"input", x}}, [=]() { return sum(x); });
  }
  {
    auto logits = gd::random_tensor<S>({1, 1, 3, 3}, rng, -2.0, 2.0);
    auto target = gd::random_tensor<S>({1, 1, 3, 3}, rng, 0.05, 0.95);
    run("bce_with_logits", {{"logits", logits}, {"target", target}},
        [=]() { return bce_with_logits(logits, target); });
  }
  return all;
}

/// GR module + readout on 8x8 features: every GRParams tensor must receive a
/// finite-difference-verified gradient.
template <class S>
std::vector<GradCheckReport> run_gr_gradcheck(const GradCheckOptions& opts) {
  namespace gd = gradcheck_detail;
  Rng rng(7151u);
  const int c = 4, n = 2, t_iters = 2;
  Rng init_rng(3u);
  GrParams<S> params = GrParams<S>::init(3, 3, n, c, init_rng);
  ReadoutParams<S> ro = ReadoutParams<S>::init(c, init_rng);

  auto feat_a = gd::random_tensor<S>({1, 3, 8, 8}, rng, 0.0, 1.0, false);
  auto feat_g = gd::random_tensor<S>({1, 3, 8, 8}, rng, 0.0, 1.0, false);
  auto weights = gd::random_tensor<S>({1, 1, 8, 8}, rng, 0.5, 1.5, false);
  const std::vector<int> scales = {2, 4};

  std::vector<std::pair<std::string, Tensor<S>>> named;
  params.visit("gr", [&](const std::string& name, Tensor<S>& p) { named.emplace_back(name, p); });
  ro.visit("readout", [&](const std::string& name, Tensor<S>& p) { named.emplace_back(name, p); });

  const auto loss = [&, feat_a, feat_g, weights]() {
    GrOutput<S> out = run_gr(feat_a, feat_g, params, scales, t_iters);
    Tensor<S> logits = readout(out.appearance, out.geometry, ro, 8, 8);
    return gd::weighted_sum(logits, weights);
  };
  Rng coord_rng(rng.next_u32());
  return check_gradients<S>(std::move(named), loss, opts, coord_rng);
}

/// Full micro-model (twin backbones + CGR cascade + readout) end to end.
template <class S>
std::vector<GradCheckReport> run_cascade_gradcheck(const GradCheckOptions& opts) {
  namespace gd = gradcheck_detail;
  Rng rng(90125u);
  ModelConfig config;
  config.mode = Mode::cgr;
  config.input_h = 16;
  config.input_w = 16;
  config.level_channels = {3, 4};
  config.node_channels = 3;
  config.scales_per_modality = 2;
  config.iterations = 2;
  config.seed = 11;
  Model<S> model = Model<S>::init(config);

  auto rgb = gd::random_tensor<S>({1, 3, 16, 16}, rng, 0.0, 1.0, false);
  auto depth = gd::random_tensor<S>({1, 1, 16, 16}, rng, 0.0, 1.0, false);
  auto target = gd::random_tensor<S>({1, 1, 16, 16}, rng, 0.1, 0.9, false);

  std::vector<std::pair<std::string, Tensor<S>>> named;
  model.visit_params([&](const std::string& name, Tensor<S>& p) { named.emplace_back(name, p); });
  // Jitter every parameter (biases start at exactly zero) so no relu
  // pre-activation sits on its kink, where a finite difference is undefined.
  for (auto& [name, p] : named) {
    for (auto& v : p.data()) v += static_cast<S>(rng.uniform(-0.05, 0.05));
  }

  const auto loss = [&, rgb, depth, target]() {
    return bce_with_logits(model.forward_logits(rgb, depth), target);
  };
  Rng coord_rng(rng.next_u32());
  return check_gradients<S>(std::move(named), loss, opts, coord_rng);
}

}  // namespace casgnn
