#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "casgnn/backbone.hpp"
#include "casgnn/errors.hpp"
#include "casgnn/graph.hpp"

namespace casgnn {

/// Parameters for the cascaded multi-level reasoning stack. Level index 0 is
/// the shallowest pyramid level; processing runs deepest-first so guidance
/// flows top-down. The coarsen convs exist only per receiving level (the
/// deepest graph has no predecessor) and only in cascade mode; the fusion
/// convs exist only for W > 1 (a single-level "fusion" is the identity, which
/// keeps the W=1 cascade exactly equal to a plain GR + readout).
template <class S>
struct CascadeParams {
  int node_channels = 16;   // c
  int iterations = 3;       // T
  std::vector<std::vector<int>> level_scales;  // per level, clipped to feature size
  std::vector<GrParams<S>> gr;                 // per level
  std::vector<Conv2d<S>> coarsen_appearance;   // per receiving level [0, W-1)
  std::vector<Conv2d<S>> coarsen_geometry;
  Conv2d<S> fuse_appearance;  // 3x3, W*c -> c (W > 1 only)
  Conv2d<S> fuse_geometry;
  ReadoutParams<S> readout;

  int levels() const { return static_cast<int>(gr.size()); }
  bool has_fusion() const { return levels() > 1; }
  bool has_guidance() const { return !coarsen_appearance.empty(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (int w = 0; w < levels(); ++w) {
      gr[w].visit(prefix + ".level" + std::to_string(w), f);
    }
    for (std::size_t w = 0; w < coarsen_appearance.size(); ++w) {
      coarsen_appearance[w].visit(prefix + ".coarsen_app" + std::to_string(w), f);
      coarsen_geometry[w].visit(prefix + ".coarsen_geo" + std::to_string(w), f);
    }
    if (has_fusion()) {
      fuse_appearance.visit(prefix + ".fuse_app", f);
      fuse_geometry.visit(prefix + ".fuse_geo", f);
    }
    readout.visit(prefix + ".readout", f);
  }
};

/// Pyramid scales {2, 4, 8, 16, ...} clipped to the feature extent; duplicate
/// clipped entries are kept so the node count stays at n.
inline std::vector<int> pyramid_scales(int n, int feat_h, int feat_w) {
  std::vector<int> scales;
  const int cap = std::min(feat_h, feat_w);
  for (int i = 0; i < n; ++i) {
    scales.push_back(std::min(1 << (i + 1), cap));
  }
  return scales;
}

template <class S>
CascadeParams<S> init_cascade(const BackboneConfig& backbone, int n, int c, int iterations,
                              bool with_guidance, Rng& rng) {
  if (backbone.levels() < 1) throw ConfigError("cascade needs at least one level");
  if (n < 1) throw ConfigError("cascade needs at least one scale per modality");
  CascadeParams<S> params;
  params.node_channels = c;
  params.iterations = iterations;
  const int w_levels = backbone.levels();
  for (int w = 0; w < w_levels; ++w) {
    const int feat_h = backbone.input_h / backbone.stride_at(w);
    const int feat_w = backbone.input_w / backbone.stride_at(w);
    params.level_scales.push_back(pyramid_scales(n, feat_h, feat_w));
    const int feat_c = backbone.level_channels[w];
    params.gr.push_back(GrParams<S>::init(feat_c, feat_c, n, c, rng));
  }
  if (with_guidance) {
    for (int w = 0; w + 1 < w_levels; ++w) {
      params.coarsen_appearance.push_back(Conv2d<S>::init(n * c, c, 3, 1, 1, rng));
      params.coarsen_geometry.push_back(Conv2d<S>::init(n * c, c, 3, 1, 1, rng));
    }
  }
  if (w_levels > 1) {
    params.fuse_appearance = Conv2d<S>::init(w_levels * c, c, 3, 1, 1, rng);
    params.fuse_geometry = Conv2d<S>::init(w_levels * c, c, 3, 1, 1, rng);
  }
  params.readout = ReadoutParams<S>::init(c, rng);
  return params;
}

/// Coarsens a finished graph into one guidance embedding per modality:
/// concat the modality's n final node states, 3x3 conv.
template <class S>
GuidancePair<S> coarsen_to_guidance(const std::vector<Tensor<S>>& final_nodes, int n,
                                    const Conv2d<S>& conv_appearance,
                                    const Conv2d<S>& conv_geometry, int source_level) {
  if (static_cast<int>(final_nodes.size()) != 2 * n) {
    throw DimensionError("coarsen_to_guidance expected " + std::to_string(2 * n) +
                         " node states, got " + std::to_string(final_nodes.size()));
  }
  GuidancePair<S> pair;
  pair.source_level = source_level;
  std::span<const Tensor<S>> all(final_nodes);
  pair.appearance = conv_appearance(concat_channels(all.subspan(0, n)));
  pair.geometry = conv_geometry(concat_channels(all.subspan(n, n)));
  return pair;
}

namespace detail {

template <class S>
Tensor<S> run_levels(const FeaturePyramid<S>& appearance, const FeaturePyramid<S>& geometry,
                     const CascadeParams<S>& params, int out_h, int out_w, bool with_guidance) {
  const int w_levels = params.levels();
  if (w_levels < 1) throw ConfigError("cascade has no levels");
  if (static_cast<int>(appearance.levels.size()) != w_levels ||
      static_cast<int>(geometry.levels.size()) != w_levels) {
    throw DimensionError("pyramid depth mismatch: cascade has " + std::to_string(w_levels) +
                         " levels, pyramids have " + std::to_string(appearance.levels.size()) +
                         "/" + std::to_string(geometry.levels.size()));
  }

  std::vector<Tensor<S>> merged_appearance(w_levels), merged_geometry(w_levels);
  std::vector<Tensor<S>> previous_nodes;
  for (int w = w_levels - 1; w >= 0; --w) {
    GuidancePair<S> guidance;
    bool gated = false;
    if (with_guidance && w + 1 < w_levels) {
      const int n = static_cast<int>(params.level_scales[w + 1].size());
      guidance = coarsen_to_guidance(previous_nodes, n, params.coarsen_appearance[w],
                                     params.coarsen_geometry[w], w + 1);
      const Shape& target = appearance.levels[w].shape();
      guidance.appearance = bilinear_resize(guidance.appearance, target.h, target.w);
      guidance.geometry = bilinear_resize(guidance.geometry, target.h, target.w);
      gated = true;
    }
    GrOutput<S> out = run_gr(appearance.levels[w], geometry.levels[w], params.gr[w],
                             params.level_scales[w], params.iterations,
                             gated ? &guidance : nullptr);
    merged_appearance[w] = out.appearance;
    merged_geometry[w] = out.geometry;
    previous_nodes = std::move(out.final_nodes);
  }

  Tensor<S> fused_appearance, fused_geometry;
  if (w_levels == 1) {
    fused_appearance = merged_appearance[0];
    fused_geometry = merged_geometry[0];
  } else {
    const Shape& target = merged_appearance[0].shape();
    const auto fuse = [&](std::vector<Tensor<S>>& embeddings, const Conv2d<S>& conv) {
      std::vector<Tensor<S>> resized;
      resized.reserve(embeddings.size());
      for (auto& e : embeddings) resized.push_back(bilinear_resize(e, target.h, target.w));
      return conv(concat_channels(std::span<const Tensor<S>>(resized)));
    };
    fused_appearance = fuse(merged_appearance, params.fuse_appearance);
    fused_geometry = fuse(merged_geometry, params.fuse_geometry);
  }
  return readout(fused_appearance, fused_geometry, params.readout, out_h, out_w);
}

}  // namespace detail

/// Cascade graph reasoning: deepest level first with no guidance, then each
/// shallower level gated by guidance coarsened from its predecessor; fuse the
/// per-level merged embeddings and read out the saliency logits.
template <class S>
Tensor<S> run_cascade(const FeaturePyramid<S>& appearance, const FeaturePyramid<S>& geometry,
                      const CascadeParams<S>& params, int out_h, int out_w) {
  if (params.levels() > 1 && !params.has_guidance()) {
    throw ConfigError("run_cascade requires guidance parameters (init with guidance)");
  }
  return detail::run_levels(appearance, geometry, params, out_h, out_w, /*with_guidance=*/true);
}

/// Hierarchical-reasoning ablation arm: identical to run_cascade but with all
/// levels reasoned independently (no guidance nodes anywhere).
template <class S>
Tensor<S> run_hierarchical(const FeaturePyramid<S>& appearance,
                           const FeaturePyramid<S>& geometry, const CascadeParams<S>& params,
                           int out_h, int out_w) {
  return detail::run_levels(appearance, geometry, params, out_h, out_w, /*with_guidance=*/false);
}

/// Plain cross-modality fusion baseline: concat the deepest features of both
/// modalities, two 1x1 convs, resize to the input size.
template <class S>
struct FusionBaselineParams {
  Conv2d<S> first;   // 1x1, (Ca + Cg) -> c
  Conv2d<S> second;  // 1x1, c -> 1

  static FusionBaselineParams init(int feat_c_appearance, int feat_c_geometry, int c,
                                   Rng& rng) {
    FusionBaselineParams p;
    p.first = Conv2d<S>::init(feat_c_appearance + feat_c_geometry, c, 1, 1, 0, rng);
    p.second = Conv2d<S>::init(c, 1, 1, 1, 0, rng);
    return p;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    first.visit(prefix + ".first", f);
    second.visit(prefix + ".second", f);
  }
};

template <class S>
Tensor<S> run_fusion_baseline(const FeaturePyramid<S>& appearance,
                              const FeaturePyramid<S>& geometry,
                              const FusionBaselineParams<S>& params, int out_h, int out_w) {
  if (appearance.levels.empty() || geometry.levels.empty()) {
    throw DimensionError("fusion baseline needs non-empty pyramids");
  }
  Tensor<S> fused = params.second(
      params.first(concat_channels<S>({appearance.levels.back(), geometry.levels.back()})));
  return bilinear_resize(fused, out_h, out_w);
}

}  // namespace casgnn
