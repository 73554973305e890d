#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "casgnn/errors.hpp"
#include "casgnn/tensor.hpp"

namespace casgnn {

/// Ordered record of executed operations with their backward rules.
///
/// A Tape registers itself as the active tape for the current thread on
/// construction and unregisters on destruction. While active, every
/// differentiable operation whose output requires gradients appends a
/// backward closure. backward() replays the closures in reverse execution
/// order, accumulating into Tensor::grad, then clears the tape.
///
/// Model instances on different threads each own their tape; there is no
/// shared mutable state between them.
template <class S>
class Tape {
 public:
  Tape() { stack().push_back(this); }
  ~Tape() { stack().pop_back(); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return stack().empty() ? nullptr : stack().back(); }

  void record(std::function<void()> backward_rule) {
    entries_.push_back(std::move(backward_rule));
  }

  std::size_t size() const { return entries_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and replays all backward rules in reverse.
  /// The tape is cleared afterwards; a second backward needs a new forward.
  void backward(Tensor<S>& loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw UsageError("backward requires a scalar loss, got " +
                       (loss.defined() ? loss.shape().str() : std::string("undefined")));
    }
    if (entries_.empty()) {
      throw UsageError("backward called without a recorded forward tape");
    }
    loss.grad()[0] += S(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

  void clear() { entries_.clear(); }

 private:
  static std::vector<Tape*>& stack() {
    thread_local std::vector<Tape*> s;
    return s;
  }

  std::vector<std::function<void()>> entries_;
};

}  // namespace casgnn
