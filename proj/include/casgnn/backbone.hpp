#pragma once

#include <string>
#include <vector>

#include "casgnn/errors.hpp"
#include "casgnn/nn.hpp"
#include "casgnn/ops.hpp"
#include "casgnn/rng.hpp"
#include "casgnn/tensor.hpp"

namespace casgnn {

enum class Modality { appearance, geometry };

inline const char* modality_name(Modality m) {
  return m == Modality::appearance ? "appearance" : "geometry";
}

/// Toy twin-encoder configuration. Each level halves the spatial extent
/// (one stride-2 conv followed by one stride-1 conv, both 3x3 + relu), so
/// the cumulative strides are 2, 4, 8, ... per level.
struct BackboneConfig {
  int input_h = 64;
  int input_w = 64;
  std::vector<int> level_channels = {8, 16, 32};

  int levels() const { return static_cast<int>(level_channels.size()); }

  int stride_at(int level) const { return 1 << (level + 1); }

  int total_stride() const { return 1 << levels(); }

  void validate() const {
    if (level_channels.empty()) throw ConfigError("backbone needs at least one level");
    for (int c : level_channels) {
      if (c < 1) throw ConfigError("backbone level channels must be positive");
    }
    if (input_h % total_stride() != 0 || input_w % total_stride() != 0) {
      throw ConfigError("input size " + std::to_string(input_h) + "x" +
                        std::to_string(input_w) + " not divisible by backbone stride " +
                        std::to_string(total_stride()));
    }
  }
};

/// Side-output feature maps of one modality, ordered shallow to deep with
/// strictly decreasing spatial extents.
template <class S>
struct FeaturePyramid {
  std::vector<Tensor<S>> levels;
  Modality modality = Modality::appearance;
};

template <class S>
struct BackboneParams {
  struct Level {
    Conv2d<S> down;  // 3x3, stride 2
    Conv2d<S> same;  // 3x3, stride 1
  };
  std::vector<Level> levels;
  int in_channels = 3;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < levels.size(); ++i) {
      levels[i].down.visit(prefix + ".l" + std::to_string(i) + ".down", f);
      levels[i].same.visit(prefix + ".l" + std::to_string(i) + ".same", f);
    }
  }
};

/// Builds one encoder parameter set. in_channels is 3 for the appearance
/// stream and 1 for the geometry stream; the two encoders share architecture
/// but never parameters.
template <class S>
BackboneParams<S> init_backbone(const BackboneConfig& config, int in_channels, Rng& rng) {
  config.validate();
  if (in_channels != 1 && in_channels != 3) {
    throw ConfigError("backbone input channels must be 1 or 3, got " +
                      std::to_string(in_channels));
  }
  BackboneParams<S> params;
  params.in_channels = in_channels;
  int prev = in_channels;
  for (int ch : config.level_channels) {
    typename BackboneParams<S>::Level level;
    level.down = Conv2d<S>::init(prev, ch, 3, /*stride=*/2, /*padding=*/1, rng);
    level.same = Conv2d<S>::init(ch, ch, 3, /*stride=*/1, /*padding=*/1, rng);
    params.levels.push_back(level);
    prev = ch;
  }
  return params;
}

template <class S>
FeaturePyramid<S> encode(const Tensor<S>& input, const BackboneParams<S>& params,
                         const BackboneConfig& config, Modality modality) {
  const Shape& s = input.shape();
  if (s.c != params.in_channels) {
    throw DimensionError("encoder expects " + std::to_string(params.in_channels) +
                         " input channels, got " + s.str());
  }
  if (s.h % config.total_stride() != 0 || s.w % config.total_stride() != 0) {
    throw ConfigError("input size " + s.str() + " not divisible by backbone stride " +
                      std::to_string(config.total_stride()));
  }
  FeaturePyramid<S> pyramid;
  pyramid.modality = modality;
  Tensor<S> x = input;
  for (const auto& level : params.levels) {
    x = relu(level.down(x));
    x = relu(level.same(x));
    pyramid.levels.push_back(x);
  }
  return pyramid;
}

}  // namespace casgnn
