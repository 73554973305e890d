#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "casgnn/adam.hpp"
#include "casgnn/model.hpp"

namespace casgnn {

// Checkpoint file layout (all integers little-endian):
//   magic "CASGNN01" (8 bytes)
//   u32 version = 1
//   u32 tensor count, then per tensor:
//     u16 name length, UTF-8 name, u8 rank (= 4), 4 x u32 extents,
//     raw little-endian f32 data
//   optimizer state in the same tensor encoding (u32 count + entries,
//     names adam.m.<param> / adam.v.<param>)
//   u64 train step
//
// The model configuration is echoed as scalar tensors named cfg.* inside the
// first section, so a checkpoint is self-describing.

struct Checkpoint {
  std::uint32_t version = 1;
  ModelConfig config;
  std::vector<std::pair<std::string, TensorF>> params;
  std::vector<std::pair<std::string, std::vector<float>>> optimizer;  // file order
  std::uint64_t step = 0;
};

void save_checkpoint(const std::string& path, Model<float>& model,
                     const AdamState<float>* adam, std::uint64_t step);

Checkpoint read_checkpoint(const std::string& path);

/// Rebuilds the model from the config echo and assigns every stored
/// parameter tensor; missing or mismatched tensors are format errors.
Model<float> restore_model(const Checkpoint& ckpt);

/// Restores Adam moments and the step counter for a model restored from the
/// same checkpoint.
AdamState<float> restore_adam(const Checkpoint& ckpt, Model<float>& model,
                              const AdamHyper& hyper);

}  // namespace casgnn
