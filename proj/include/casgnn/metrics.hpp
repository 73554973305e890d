#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace casgnn::metrics {

// Saliency evaluation measures. Predictions are per-pixel values in [0,1],
// ground truths strictly binary {0,1}; everything is computed at double
// precision.

/// Mean absolute error over pixels.
double mae(std::span<const double> pred, std::span<const double> gt);

/// min(2 * mean(pred), 1): the adaptive binarization threshold shared by the
/// F-measure and E-measure.
double adaptive_threshold(std::span<const double> pred);

/// F-measure at the adaptive threshold with beta^2 = 0.3. Precision counts
/// as 1 when nothing is predicted positive; the value is 0 when both
/// precision and recall vanish. Empty ground truth is a domain error.
double f_measure(std::span<const double> pred, std::span<const double> gt,
                 double beta2 = 0.3);

/// Structure measure: alpha * object term + (1 - alpha) * region term,
/// following its originating publication (object similarity over
/// foreground/background, region SSIM over the four centroid quadrants).
double s_measure(std::span<const double> pred, std::span<const double> gt, int h, int w,
                 double alpha = 0.5);

/// Enhanced-alignment measure of the binarized prediction: bias matrices
/// phi = map - mean(map), alignment 2*phiG*phiS / (phiG^2 + phiS^2 + eps),
/// enhanced ((align + 1)^2) / 4, averaged over pixels.
double e_measure(std::span<const double> pred, std::span<const double> gt);

/// Dataset-level precision/recall at the 256 byte thresholds t = i / 255.
struct PrAccumulator {
  std::array<double, 256> tp{};
  std::array<double, 256> fp{};
  std::array<double, 256> fn{};

  void add(std::span<const double> pred, std::span<const double> gt);
};

struct PrCurve {
  std::array<double, 256> precision{};
  std::array<double, 256> recall{};
};

PrCurve finish(const PrAccumulator& acc);

struct SampleMetrics {
  std::string id;
  double mae = 0;
  double f_beta = 0;
  double s_alpha = 0;
  double e_xi = 0;
};

struct MetricsReport {
  std::vector<SampleMetrics> rows;
  SampleMetrics aggregate;  // id "MEAN", columns are means of the rows
  PrCurve pr;
};

SampleMetrics aggregate_rows(const std::vector<SampleMetrics>& rows);

/// Writes metrics.csv (id,mae,f_beta,s_alpha,e_xi with a final MEAN row) and
/// pr_curve.csv (threshold,precision,recall; 256 rows), 6 decimal places.
void write_report(const MetricsReport& report, const std::string& dir);

}  // namespace casgnn::metrics
