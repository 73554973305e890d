#include "casgnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "casgnn/errors.hpp"

namespace casgnn::metrics {

namespace {

constexpr double kEps = 1e-8;

void check_sizes(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw DimensionError("metric input sizes disagree: " + std::to_string(pred.size()) +
                         " vs " + std::to_string(gt.size()));
  }
}

double mean(std::span<const double> v) {
  double acc = 0;
  for (const double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> gt) {
  check_sizes(pred, gt);
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - gt[i]);
  return acc / static_cast<double>(pred.size());
}

double adaptive_threshold(std::span<const double> pred) {
  return std::min(2.0 * mean(pred), 1.0);
}

double f_measure(std::span<const double> pred, std::span<const double> gt, double beta2) {
  check_sizes(pred, gt);
  double fg = 0;
  for (const double g : gt) fg += g;
  if (fg == 0) throw DomainError("f_measure requires a non-empty ground truth");

  const double tau = adaptive_threshold(pred);
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= tau;
    const bool g = gt[i] > 0.5;
    if (p && g) ++tp;
    else if (p && !g) ++fp;
    else if (!p && g) ++fn;
  }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 1.0;
  const double recall = tp / (tp + fn);
  const double denom = beta2 * precision + recall;
  return denom > 0 ? (1.0 + beta2) * precision * recall / denom : 0.0;
}

namespace {

// Object-level similarity of one region: 2*mean / (mean^2 + 1 + std + eps)
// with the sample standard deviation (zero for regions of size <= 1).
double object_score(std::span<const double> values, std::span<const double> gt, bool in_fg) {
  double acc = 0, count = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if ((gt[i] > 0.5) == in_fg) {
      acc += in_fg ? values[i] : 1.0 - values[i];
      count += 1;
    }
  }
  if (count == 0) return 0.0;
  const double m = acc / count;
  double var = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if ((gt[i] > 0.5) == in_fg) {
      const double v = (in_fg ? values[i] : 1.0 - values[i]) - m;
      var += v * v;
    }
  }
  const double sd = count > 1 ? std::sqrt(var / (count - 1)) : 0.0;
  return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

double object_term(std::span<const double> pred, std::span<const double> gt) {
  const double u = mean(gt);
  const double fg = object_score(pred, gt, true);
  const double bg = object_score(pred, gt, false);
  return u * fg + (1.0 - u) * bg;
}

// Region SSIM over a rectangular block [y0,y1) x [x0,x1).
double block_ssim(std::span<const double> pred, std::span<const double> gt, int w, int y0,
                  int y1, int x0, int x1) {
  const double n = static_cast<double>(y1 - y0) * (x1 - x0);
  double mx = 0, my = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      mx += pred[static_cast<std::size_t>(y) * w + x];
      my += gt[static_cast<std::size_t>(y) * w + x];
    }
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, vxy = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double dx = pred[static_cast<std::size_t>(y) * w + x] - mx;
      const double dy = gt[static_cast<std::size_t>(y) * w + x] - my;
      vx += dx * dx;
      vy += dy * dy;
      vxy += dx * dy;
    }
  }
  const double norm = n > 1 ? n - 1 : 1;
  vx /= norm;
  vy /= norm;
  vxy /= norm;
  const double alpha = 4.0 * mx * my * vxy;
  const double beta = (mx * mx + my * my) * (vx + vy);
  if (alpha != 0) return alpha / (beta + kEps);
  return beta == 0 ? 1.0 : 0.0;
}

double region_term(std::span<const double> pred, std::span<const double> gt, int h, int w) {
  // Foreground centroid (1-indexed, clamped so all four quadrants are
  // non-empty); image center when the ground truth is empty.
  double total = 0, sx = 0, sy = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = gt[static_cast<std::size_t>(y) * w + x];
      total += g;
      sx += g * (x + 1);
      sy += g * (y + 1);
    }
  }
  int cx, cy;
  if (total == 0) {
    cx = static_cast<int>(std::lround(w / 2.0));
    cy = static_cast<int>(std::lround(h / 2.0));
  } else {
    cx = static_cast<int>(std::lround(sx / total));
    cy = static_cast<int>(std::lround(sy / total));
  }
  cx = std::clamp(cx, 1, w - 1);
  cy = std::clamp(cy, 1, h - 1);

  const double area = static_cast<double>(h) * w;
  const double w1 = static_cast<double>(cx) * cy / area;
  const double w2 = static_cast<double>(w - cx) * cy / area;
  const double w3 = static_cast<double>(cx) * (h - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;

  return w1 * block_ssim(pred, gt, w, 0, cy, 0, cx) +
         w2 * block_ssim(pred, gt, w, 0, cy, cx, w) +
         w3 * block_ssim(pred, gt, w, cy, h, 0, cx) +
         w4 * block_ssim(pred, gt, w, cy, h, cx, w);
}

}  // namespace

double s_measure(std::span<const double> pred, std::span<const double> gt, int h, int w,
                 double alpha) {
  check_sizes(pred, gt);
  if (static_cast<std::size_t>(h) * w != gt.size()) {
    throw DimensionError("s_measure extents " + std::to_string(h) + "x" + std::to_string(w) +
                         " do not cover " + std::to_string(gt.size()) + " pixels");
  }
  const double y = mean(gt);
  if (y == 0) return 1.0 - mean(pred);
  if (y == 1) return mean(pred);
  const double q = alpha * object_term(pred, gt) + (1.0 - alpha) * region_term(pred, gt, h, w);
  return std::clamp(q, 0.0, 1.0);
}

double e_measure(std::span<const double> pred, std::span<const double> gt) {
  check_sizes(pred, gt);
  const double tau = adaptive_threshold(pred);
  double mean_b = 0, mean_g = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mean_b += pred[i] >= tau ? 1.0 : 0.0;
    mean_g += gt[i];
  }
  mean_b /= static_cast<double>(pred.size());
  mean_g /= static_cast<double>(pred.size());

  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double phi_s = (pred[i] >= tau ? 1.0 : 0.0) - mean_b;
    const double phi_g = gt[i] - mean_g;
    const double align = 2.0 * phi_g * phi_s / (phi_g * phi_g + phi_s * phi_s + kEps);
    acc += (align + 1.0) * (align + 1.0) / 4.0;
  }
  return acc / static_cast<double>(pred.size());
}

void PrAccumulator::add(std::span<const double> pred, std::span<const double> gt) {
  check_sizes(pred, gt);
  for (int t = 0; t < 256; ++t) {
    const double tau = static_cast<double>(t) / 255.0;
    double tp_ = 0, fp_ = 0, fn_ = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] >= tau;
      const bool g = gt[i] > 0.5;
      if (p && g) ++tp_;
      else if (p && !g) ++fp_;
      else if (!p && g) ++fn_;
    }
    tp[t] += tp_;
    fp[t] += fp_;
    fn[t] += fn_;
  }
}

PrCurve finish(const PrAccumulator& acc) {
  PrCurve curve;
  for (int t = 0; t < 256; ++t) {
    const double predicted = acc.tp[t] + acc.fp[t];
    curve.precision[t] = predicted > 0 ? acc.tp[t] / predicted : 1.0;
    const double actual = acc.tp[t] + acc.fn[t];
    curve.recall[t] = actual > 0 ? acc.tp[t] / actual : 1.0;
  }
  return curve;
}

SampleMetrics aggregate_rows(const std::vector<SampleMetrics>& rows) {
  SampleMetrics agg;
  agg.id = "MEAN";
  if (rows.empty()) return agg;
  for (const SampleMetrics& r : rows) {
    agg.mae += r.mae;
    agg.f_beta += r.f_beta;
    agg.s_alpha += r.s_alpha;
    agg.e_xi += r.e_xi;
  }
  const double n = static_cast<double>(rows.size());
  agg.mae /= n;
  agg.f_beta /= n;
  agg.s_alpha /= n;
  agg.e_xi /= n;
  return agg;
}

void write_report(const MetricsReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/metrics.csv");
    if (!out) throw IoError("cannot write " + dir + "/metrics.csv");
    out << "id,mae,f_beta,s_alpha,e_xi\n";
    char line[256];
    const auto emit = [&](const SampleMetrics& r) {
      std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f\n", r.id.c_str(), r.mae,
                    r.f_beta, r.s_alpha, r.e_xi);
      out << line;
    };
    for (const SampleMetrics& r : report.rows) emit(r);
    emit(report.aggregate);
    if (!out) throw IoError("write failed for " + dir + "/metrics.csv");
  }
  {
    std::ofstream out(dir + "/pr_curve.csv");
    if (!out) throw IoError("cannot write " + dir + "/pr_curve.csv");
    out << "threshold,precision,recall\n";
    char line[128];
    for (int t = 0; t < 256; ++t) {
      std::snprintf(line, sizeof(line), "%d,%.6f,%.6f\n", t, report.pr.precision[t],
                    report.pr.recall[t]);
      out << line;
    }
    if (!out) throw IoError("write failed for " + dir + "/pr_curve.csv");
  }
}

}  // namespace casgnn::metrics
