#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "casgnn/adam.hpp"
#include "casgnn/backbone.hpp"
#include "casgnn/cascade.hpp"
#include "casgnn/errors.hpp"
#include "casgnn/graph.hpp"
#include "casgnn/rng.hpp"

namespace casgnn {

enum class Mode { fusion, hr, cgr };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::fusion: return "fusion";
    case Mode::hr: return "hr";
    case Mode::cgr: return "cgr";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "fusion") return Mode::fusion;
  if (s == "hr") return Mode::hr;
  if (s == "cgr") return Mode::cgr;
  throw ConfigError("unknown mode '" + s + "' (expected fusion, hr or cgr)");
}

struct ModelConfig {
  Mode mode = Mode::cgr;
  int input_h = 64;
  int input_w = 64;
  std::vector<int> level_channels = {8, 16, 32};  // W levels
  int node_channels = 16;                         // c
  int scales_per_modality = 3;                    // n
  int iterations = 3;                             // T
  std::uint32_t seed = 0;

  int levels() const { return static_cast<int>(level_channels.size()); }

  BackboneConfig backbone() const {
    BackboneConfig b;
    b.input_h = input_h;
    b.input_w = input_w;
    b.level_channels = level_channels;
    return b;
  }

  void validate() const {
    backbone().validate();
    if (node_channels < 1) throw ConfigError("node channels must be positive");
    if (scales_per_modality < 1) throw ConfigError("graph scale count must be positive");
    if (iterations < 1) throw ConfigError("iteration count must be positive");
  }
};

/// Full saliency model: twin toy encoders plus the mode's reasoning head.
/// Parameter creation order is fixed by construction, so visit order (and
/// with it checkpoint layout and optimizer slots) is deterministic.
template <class S>
struct Model {
  ModelConfig config;
  BackboneParams<S> encoder_rgb;
  BackboneParams<S> encoder_depth;
  CascadeParams<S> cascade;        // hr / cgr
  FusionBaselineParams<S> fusion;  // fusion

  static Model init(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config = config;
    Rng rng(config.seed);
    const BackboneConfig backbone = config.backbone();
    m.encoder_rgb = init_backbone<S>(backbone, 3, rng);
    m.encoder_depth = init_backbone<S>(backbone, 1, rng);
    if (config.mode == Mode::fusion) {
      m.fusion = FusionBaselineParams<S>::init(backbone.level_channels.back(),
                                               backbone.level_channels.back(),
                                               config.node_channels, rng);
    } else {
      m.cascade = init_cascade<S>(backbone, config.scales_per_modality, config.node_channels,
                                  config.iterations,
                                  /*with_guidance=*/config.mode == Mode::cgr, rng);
    }
    return m;
  }

  /// Saliency logits for a batch of paired inputs. rgb is (B,3,H,W), depth
  /// (B,1,H,W); H and W must be divisible by the backbone stride.
  Tensor<S> forward_logits(const Tensor<S>& rgb, const Tensor<S>& depth) const {
    const Shape& rs = rgb.shape();
    const Shape& ds = depth.shape();
    if (rs.n != ds.n || rs.h != ds.h || rs.w != ds.w) {
      throw DimensionError("rgb " + rs.str() + " and depth " + ds.str() + " disagree");
    }
    const BackboneConfig backbone = config.backbone();
    FeaturePyramid<S> pa = encode(rgb, encoder_rgb, backbone, Modality::appearance);
    FeaturePyramid<S> pg = encode(depth, encoder_depth, backbone, Modality::geometry);
    switch (config.mode) {
      case Mode::fusion:
        return run_fusion_baseline(pa, pg, fusion, rs.h, rs.w);
      case Mode::hr:
        return run_hierarchical(pa, pg, cascade, rs.h, rs.w);
      case Mode::cgr:
        return run_cascade(pa, pg, cascade, rs.h, rs.w);
    }
    throw UsageError("invalid mode");
  }

  /// Saliency probability map in (0,1).
  Tensor<S> forward(const Tensor<S>& rgb, const Tensor<S>& depth) const {
    return sigmoid(forward_logits(rgb, depth));
  }

  template <class F>
  void visit_params(F&& f) {
    encoder_rgb.visit("enc_rgb", f);
    encoder_depth.visit("enc_depth", f);
    if (config.mode == Mode::fusion) {
      fusion.visit("fusion", f);
    } else {
      cascade.visit("cascade", f);
    }
  }

  std::vector<Tensor<S>> parameters() {
    std::vector<Tensor<S>> out;
    visit_params([&](const std::string&, Tensor<S>& t) { out.push_back(t); });
    return out;
  }

  std::vector<std::pair<std::string, Tensor<S>>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    visit_params([&](const std::string& name, Tensor<S>& t) { out.emplace_back(name, t); });
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit_params([&](const std::string&, Tensor<S>& t) { n += t.size(); });
    return n;
  }

  void zero_grads() {
    visit_params([](const std::string&, Tensor<S>& t) { t.zero_grad(); });
  }
};

}  // namespace casgnn
