#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "casgnn/errors.hpp"
#include "casgnn/tensor.hpp"

namespace casgnn {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Per-parameter first/second moment estimates plus a shared step counter.
/// Weight decay is applied as an additive lambda*theta term on the gradient
/// before the moment updates (classic L2 coupling).
template <class S>
class AdamState {
 public:
  explicit AdamState(AdamHyper hyper = {}) : hyper_(hyper) {}

  AdamHyper& hyper() { return hyper_; }
  const AdamHyper& hyper() const { return hyper_; }

  std::uint64_t step_count() const { return step_; }
  void set_step_count(std::uint64_t t) { step_ = t; }

  std::vector<S>& first_moment(std::size_t slot) { return m_[slot]; }
  std::vector<S>& second_moment(std::size_t slot) { return v_[slot]; }
  const std::vector<S>& first_moment(std::size_t slot) const { return m_[slot]; }
  const std::vector<S>& second_moment(std::size_t slot) const { return v_[slot]; }
  std::size_t slots() const { return m_.size(); }

  /// Registers parameters once; moment buffers are zero-initialised to
  /// matching shapes.
  void attach(const std::vector<Tensor<S>>& params) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (m_[i].size() != params[i].size()) m_[i].assign(params[i].size(), S(0));
      if (v_[i].size() != params[i].size()) v_[i].assign(params[i].size(), S(0));
    }
  }

  /// One Adam update over all attached parameters using their accumulated
  /// gradients; lr overrides the stored base rate (poly schedule hook).
  void step(std::vector<Tensor<S>>& params, double lr) {
    if (params.size() != m_.size()) {
      throw UsageError("adam_step called with " + std::to_string(params.size()) +
                       " params but " + std::to_string(m_.size()) + " attached slots");
    }
    if (!(lr >= 0) || hyper_.beta1 <= 0 || hyper_.beta1 >= 1 || hyper_.beta2 <= 0 ||
        hyper_.beta2 >= 1 || hyper_.eps <= 0) {
      throw ConfigError("adam_step hyperparameters out of range");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].data();
      const auto& grad = params[i].has_grad() ? params[i].grad() : empty_grad(p.size());
      auto& m = m_[i];
      auto& v = v_[i];
      if (m.size() != p.size()) {
        throw DimensionError("adam moment size " + std::to_string(m.size()) +
                             " does not match parameter size " + std::to_string(p.size()));
      }
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double g = static_cast<double>(grad[j]) +
                         hyper_.weight_decay * static_cast<double>(p[j]);
        const double mj = hyper_.beta1 * m[j] + (1.0 - hyper_.beta1) * g;
        const double vj = hyper_.beta2 * v[j] + (1.0 - hyper_.beta2) * g * g;
        m[j] = static_cast<S>(mj);
        v[j] = static_cast<S>(vj);
        const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + hyper_.eps);
        p[j] = static_cast<S>(p[j] - update);
        if (!std::isfinite(static_cast<double>(p[j]))) {
          throw NumericError("adam_step produced a non-finite parameter");
        }
      }
    }
  }

 private:
  const std::vector<S>& empty_grad(std::size_t n) {
    if (zeros_.size() < n) zeros_.assign(n, S(0));
    return zeros_;
  }

  AdamHyper hyper_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<S>> m_;
  std::vector<std::vector<S>> v_;
  std::vector<S> zeros_;
};

}  // namespace casgnn
