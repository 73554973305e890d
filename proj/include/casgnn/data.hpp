#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "casgnn/rng.hpp"
#include "casgnn/tensor.hpp"

namespace casgnn {

/// One synthetic RGB-D scene: rgb (1,3,H,W) and depth (1,1,H,W) in [0,1]
/// (depth 0 = near, 1 = far), mask (1,1,H,W) strictly binary.
struct SceneSample {
  TensorF rgb;
  TensorF depth;
  TensorF mask;
  std::string id;
};

enum class Regime { color_salient, depth_salient, both };

const char* regime_name(Regime r);
Regime parse_regime(const std::string& s);

struct GenConfig {
  int size = 64;
  int min_objects = 1;  // total shapes including the salient one
  int max_objects = 3;
  Regime regime = Regime::both;
  double texture_amplitude = 0.08;
  double depth_noise = 0.02;
  double min_area_frac = 0.04;   // salient object pixel-count bounds
  double max_area_frac = 0.20;
  double camouflage = 0.06;      // rgb boundary-contrast budget when depth-salient
  std::uint32_t seed = 0;        // dataset base seed; sample i uses seed + i

  void validate() const;
};

/// Deterministic scene synthesis: one salient shape whose contrast against
/// the background follows the regime (color pop, depth pop with camouflaged
/// color, or both), optional decoy shapes that carry the opposite cue, a
/// textured background and noisy depth.
SceneSample generate_sample(std::uint32_t seed, const GenConfig& config);

struct AugmentToggles {
  bool flip = true;
  bool rotate = true;
  bool brightness = true;
};

// Geometric augmentations apply identically to rgb, depth and mask;
// brightness scales rgb only and clamps to [0,1]. Rotation is restricted to
// quarter turns so the mask stays exactly binary.
SceneSample flip_horizontal(const SceneSample& s);
SceneSample rotate90(const SceneSample& s, int quarter_turns);
SceneSample scale_brightness(const SceneSample& s, float factor);
SceneSample augment(const SceneSample& s, Rng& rng, const AugmentToggles& toggles);

// Disk layout: <prefix>_rgb.ppm, <prefix>_depth.pgm, <prefix>_mask.pgm.
void save_sample(const SceneSample& s, const std::string& prefix);
SceneSample load_sample(const std::string& prefix, const std::string& id);

struct Dataset {
  std::vector<SceneSample> samples;
};

/// Writes all samples plus manifest.csv (columns id,rgb,depth,mask).
void save_dataset(const Dataset& dataset, const std::string& dir);

/// Loads a directory written by save_dataset via its manifest.
Dataset load_dataset(const std::string& dir);

/// Generates `count` samples with ids s<seed> for seeds [base, base+count).
Dataset generate_dataset(const GenConfig& config, int count);

}  // namespace casgnn
