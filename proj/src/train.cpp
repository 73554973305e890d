#include "casgnn/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "casgnn/errors.hpp"
#include "casgnn/ops.hpp"
#include "casgnn/rng.hpp"
#include "casgnn/tape.hpp"

namespace casgnn {

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (epochs < 0 || steps < 0 || (epochs == 0 && steps == 0)) {
    throw ConfigError("training needs a positive step or epoch budget");
  }
  if (base_lr < 0 || poly_power < 0 || weight_decay < 0) {
    throw ConfigError("learning-rate settings must be non-negative");
  }
}

double poly_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr, double power) {
  if (total_steps == 0) throw ConfigError("poly_lr needs a positive total step count");
  if (step > total_steps) {
    std::cerr << "warning: poly_lr step " << step << " past total " << total_steps
              << ", clamping to 0\n";
    return 0.0;
  }
  const double remain = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * std::pow(remain, power);
}

void write_loss_log(const std::vector<LossLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "step,lr,loss\n";
  char line[128];
  for (const LossLogRow& row : log) {
    std::snprintf(line, sizeof(line), "%llu,%.8g,%.8g\n",
                  static_cast<unsigned long long>(row.step), row.lr, row.loss);
    out << line;
  }
  if (!out) throw IoError("write failed for " + path);
}

namespace {

void check_sample_sizes(const Dataset& dataset, const ModelConfig& model) {
  for (const SceneSample& s : dataset.samples) {
    const Shape& r = s.rgb.shape();
    if (r.h != model.input_h || r.w != model.input_w) {
      throw ConfigError("sample " + s.id + " is " + std::to_string(r.h) + "x" +
                        std::to_string(r.w) + " but the model expects " +
                        std::to_string(model.input_h) + "x" + std::to_string(model.input_w));
    }
    if (!(s.depth.shape() == Shape{1, 1, r.h, r.w}) ||
        !(s.mask.shape() == Shape{1, 1, r.h, r.w})) {
      throw DimensionError("sample " + s.id + " has inconsistent rgb/depth/mask extents");
    }
  }
}

struct Batch {
  TensorF rgb;
  TensorF depth;
  TensorF mask;
};

Batch assemble(const std::vector<const SceneSample*>& samples, int h, int w) {
  const int b = static_cast<int>(samples.size());
  Batch batch;
  batch.rgb = TensorF::zeros({b, 3, h, w});
  batch.depth = TensorF::zeros({b, 1, h, w});
  batch.mask = TensorF::zeros({b, 1, h, w});
  const std::size_t rgb_len = static_cast<std::size_t>(3) * h * w;
  const std::size_t map_len = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < b; ++i) {
    std::copy_n(samples[i]->rgb.data().data(), rgb_len, batch.rgb.data().data() + i * rgb_len);
    std::copy_n(samples[i]->depth.data().data(), map_len,
                batch.depth.data().data() + i * map_len);
    std::copy_n(samples[i]->mask.data().data(), map_len, batch.mask.data().data() + i * map_len);
  }
  return batch;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
}

// Quick MAE / F-measure sweep over the training set for early stopping.
std::pair<double, double> train_set_score(const Model<float>& model, const Dataset& dataset) {
  double mae_sum = 0, f_sum = 0;
  for (const SceneSample& s : dataset.samples) {
    TensorF prob = model.forward(s.rgb, s.depth);
    std::vector<double> pred(prob.data().begin(), prob.data().end());
    std::vector<double> gt(s.mask.data().begin(), s.mask.data().end());
    mae_sum += metrics::mae(pred, gt);
    f_sum += metrics::f_measure(pred, gt);
  }
  const double n = static_cast<double>(dataset.samples.size());
  return {mae_sum / n, f_sum / n};
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.samples.empty()) throw UsageError("train called with an empty dataset");
  check_sample_sizes(dataset, config.model);

  const std::size_t sample_count = dataset.samples.size();
  const std::uint64_t batches_per_epoch =
      (sample_count + config.batch_size - 1) / config.batch_size;
  const std::uint64_t total_steps = config.epochs > 0
                                        ? batches_per_epoch * static_cast<std::uint64_t>(config.epochs)
                                        : static_cast<std::uint64_t>(config.steps);

  TrainResult result;
  result.model = Model<float>::init(config.model);
  auto params = result.model.parameters();
  AdamHyper hyper;
  hyper.lr = config.base_lr;
  hyper.weight_decay = config.weight_decay;
  result.adam = AdamState<float>(hyper);
  result.adam.attach(params);

  Rng order_rng(config.model.seed);
  Rng augment_rng(config.model.seed ^ 0x9e3779b9u);
  const AugmentToggles toggles{config.augment_flip, config.augment_rotate,
                               config.augment_brightness};
  const bool augmenting = toggles.flip || toggles.rotate || toggles.brightness;

  std::vector<std::size_t> order(sample_count);
  for (std::size_t i = 0; i < sample_count; ++i) order[i] = i;
  std::size_t cursor = sample_count;  // forces a shuffle on first use

  const bool early_stop =
      config.stop_check_every > 0 && config.stop_mae >= 0 && config.stop_fbeta >= 0;

  result.log.reserve(total_steps);
  for (std::uint64_t step = 0; step < total_steps; ++step) {
    std::vector<SceneSample> augmented;
    std::vector<const SceneSample*> batch_samples;
    augmented.reserve(config.batch_size);
    batch_samples.reserve(config.batch_size);
    for (int i = 0; i < config.batch_size; ++i) {
      if (cursor >= sample_count) {
        shuffle_indices(order, order_rng);
        cursor = 0;
      }
      const SceneSample& base = dataset.samples[order[cursor++]];
      if (augmenting) {
        augmented.push_back(augment(base, augment_rng, toggles));
        batch_samples.push_back(&augmented.back());
      } else {
        batch_samples.push_back(&base);
      }
    }
    Batch batch = assemble(batch_samples, config.model.input_h, config.model.input_w);

    const double lr = poly_lr(step, total_steps, config.base_lr, config.poly_power);
    double loss_value = 0;
    try {
      Tape<float> tape;
      TensorF logits = result.model.forward_logits(batch.rgb, batch.depth);
      TensorF loss = bce_with_logits(logits, batch.mask);
      loss_value = static_cast<double>(loss.item());
      tape.backward(loss);
      result.adam.step(params, lr);
      result.model.zero_grads();
    } catch (const NumericError& e) {
      throw NumericError("training aborted at step " + std::to_string(step) + " (lr " +
                         std::to_string(lr) + ", last loss " + std::to_string(loss_value) +
                         "): " + e.what());
    }
    result.log.push_back({step, lr, loss_value});
    result.steps_run = step + 1;

    if (early_stop && (step + 1) % static_cast<std::uint64_t>(config.stop_check_every) == 0) {
      const auto [mae_now, f_now] = train_set_score(result.model, dataset);
      if (mae_now < config.stop_mae && f_now > config.stop_fbeta) break;
    }
  }
  return result;
}

metrics::MetricsReport evaluate_model(const Model<float>& model, const Dataset& dataset) {
  if (dataset.samples.empty()) throw UsageError("evaluate called with an empty dataset");
  metrics::MetricsReport report;
  metrics::PrAccumulator pr;
  for (const SceneSample& s : dataset.samples) {
    TensorF prob = model.forward(s.rgb, s.depth);
    std::vector<double> pred(prob.data().begin(), prob.data().end());
    std::vector<double> gt(s.mask.data().begin(), s.mask.data().end());
    metrics::SampleMetrics row;
    row.id = s.id;
    row.mae = metrics::mae(pred, gt);
    row.f_beta = metrics::f_measure(pred, gt);
    row.s_alpha = metrics::s_measure(pred, gt, s.mask.shape().h, s.mask.shape().w);
    row.e_xi = metrics::e_measure(pred, gt);
    report.rows.push_back(std::move(row));
    pr.add(pred, gt);
  }
  report.aggregate = metrics::aggregate_rows(report.rows);
  report.pr = metrics::finish(pr);
  return report;
}

metrics::MetricsReport evaluate_oracle(const Dataset& dataset) {
  if (dataset.samples.empty()) throw UsageError("evaluate called with an empty dataset");
  metrics::MetricsReport report;
  metrics::PrAccumulator pr;
  for (const SceneSample& s : dataset.samples) {
    std::vector<double> gt(s.mask.data().begin(), s.mask.data().end());
    metrics::SampleMetrics row;
    row.id = s.id;
    row.mae = metrics::mae(gt, gt);
    row.f_beta = metrics::f_measure(gt, gt);
    row.s_alpha = metrics::s_measure(gt, gt, s.mask.shape().h, s.mask.shape().w);
    row.e_xi = metrics::e_measure(gt, gt);
    report.rows.push_back(std::move(row));
    pr.add(gt, gt);
  }
  report.aggregate = metrics::aggregate_rows(report.rows);
  report.pr = metrics::finish(pr);
  return report;
}

}  // namespace casgnn
