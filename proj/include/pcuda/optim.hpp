#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "pcuda/error.hpp"
#include "pcuda/tensor.hpp"

namespace pcuda {

struct AdamOptions {
  double learning_rate = 1e-3;
  double weight_decay = 5e-5;  // decoupled
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam with decoupled weight decay.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {})
      : params_(std::move(params)), options_(options) {
    for (auto& p : params_) {
      if (!p.requires_grad()) throw ValueError("Adam: parameter does not require grad");
      first_.emplace_back(p.size(), 0.0);
      second_.emplace_back(p.size(), 0.0);
    }
  }

  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  double learning_rate() const { return options_.learning_rate; }
  std::uint64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return first_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return second_[i]; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// Applies one update from the gradients currently held by the parameters.
  /// Non-finite gradients reject the whole step before anything is modified.
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i)
      for (double g : params_[i].grad())
        if (!std::isfinite(g))
          throw ValueError("Adam: non-finite gradient in parameter " + std::to_string(i) +
                           " at step " + std::to_string(step_ + 1));
    ++step_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    const double lr = options_.learning_rate;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto w = params_[i].mutable_values();
      auto g = params_[i].grad();
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        w[j] -= lr * (mhat / (std::sqrt(vhat) + options_.epsilon) + options_.weight_decay * w[j]);
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::uint64_t step_ = 0;
};

struct LRSchedule {
  double lr_max = 1e-3;
  double lr_min = 0.0;
  int total_epochs = 200;
};

/// Epoch-wise cosine annealing from lr_max (epoch 0) to lr_min (epoch total).
inline double cosine_lr(const LRSchedule& s, int epoch) {
  if (s.total_epochs <= 0) throw ValueError("cosine_lr: total_epochs must be positive");
  if (s.lr_min < 0.0 || s.lr_max < s.lr_min) throw ValueError("cosine_lr: need 0 <= lr_min <= lr_max");
  if (epoch < 0 || epoch > s.total_epochs)
    throw ValueError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(s.total_epochs) + "]");
  const double phase = std::numbers::pi * static_cast<double>(epoch) / s.total_epochs;
  return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(phase));
}

}  // namespace pcuda
