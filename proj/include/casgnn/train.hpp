#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "casgnn/adam.hpp"
#include "casgnn/data.hpp"
#include "casgnn/metrics.hpp"
#include "casgnn/model.hpp"

namespace casgnn {

struct TrainConfig {
  ModelConfig model;
  int epochs = 0;  // when > 0 overrides steps: total = epochs * batches/epoch
  int steps = 2000;
  int batch_size = 4;
  double base_lr = 1e-4;
  double poly_power = 0.9;
  double weight_decay = 1e-4;
  bool augment_flip = true;
  bool augment_rotate = true;
  bool augment_brightness = true;
  bool deterministic = true;

  // Optional early exit once the train-set goal is met (both thresholds
  // must be >= 0 and check_every > 0); the poly schedule still spans the
  // configured total.
  double stop_mae = -1.0;
  double stop_fbeta = -1.0;
  int stop_check_every = 0;

  void validate() const;
};

/// lr(step) = base * (1 - step/total)^power; steps past the end clamp to 0
/// with a warning on standard error.
double poly_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr, double power);

struct LossLogRow {
  std::uint64_t step = 0;
  double lr = 0;
  double loss = 0;
};

/// CSV with header step,lr,loss.
void write_loss_log(const std::vector<LossLogRow>& log, const std::string& path);

struct TrainResult {
  Model<float> model;
  AdamState<float> adam;
  std::uint64_t steps_run = 0;
  std::vector<LossLogRow> log;
};

/// Full optimization loop: epoch-shuffled batches, per-sample augmentation,
/// BCE on the final saliency map, Adam with the poly schedule. Deterministic
/// for a fixed seed. A non-finite loss aborts with step/lr diagnostics.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

/// Runs the model over every sample and accumulates all measures plus the
/// dataset PR curve.
metrics::MetricsReport evaluate_model(const Model<float>& model, const Dataset& dataset);

/// Metric-pipeline oracle: scores the ground truth against itself.
metrics::MetricsReport evaluate_oracle(const Dataset& dataset);

}  // namespace casgnn
