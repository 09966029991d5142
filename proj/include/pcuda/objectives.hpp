#pragma once

// Training objectives: translation-distance prediction, supervised source
// classification over original and augmented views, self-paced target
// self-training, and their weighted total.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcuda/error.hpp"
#include "pcuda/tensor.hpp"

namespace pcuda {

struct LossWeights {
  double alpha = 1.0;   // translation
  double beta = 1.0;    // source classification
  double eta = 1.0;     // target self-training (second phase only)
  double lambda = 0.5;  // original→weak relational pair
  double gamma = 0.25;  // self-paced regularizer, overridden per round

  void validate() const {
    if (alpha < 0 || beta < 0 || eta < 0 || lambda < 0 || gamma < 0)
      throw ValueError("loss weights must be non-negative");
  }
};

namespace detail {

/// −(1/n)·Σ log clamp(p[i, index[i]]) summed over several index columns.
inline Tensor picked_nll(const Tensor& probs, const std::vector<std::vector<std::size_t>>& columns,
                         double divisor) {
  Tensor acc;
  for (const auto& col : columns) {
    Tensor s = sum(log_clamped(pick(probs, col), kProbEpsilon));
    acc = acc.defined() ? add(acc, s) : s;
  }
  return scale(acc, -1.0 / divisor);
}

}  // namespace detail

/// Translation-distance loss over N samples; one label column per
/// translated axis, labels in 1..4. Each axis contributes one log term.
inline Tensor translation_loss(const Tensor& probs, const std::vector<std::vector<int>>& labels_per_axis) {
  if (labels_per_axis.empty()) throw ValueError("translation_loss: no label columns");
  const std::size_t n = probs.rows(), classes = probs.cols();
  std::vector<std::vector<std::size_t>> cols;
  for (const auto& labels : labels_per_axis) {
    if (labels.size() != n)
      throw ShapeError("translation_loss: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(n) + " predictions");
    std::vector<std::size_t> c;
    for (int y : labels) {
      if (y < 1 || static_cast<std::size_t>(y) > classes)
        throw ValueError("translation_loss: label " + std::to_string(y) + " outside 1.." +
                         std::to_string(classes));
      c.push_back(static_cast<std::size_t>(y - 1));
    }
    cols.push_back(std::move(c));
  }
  return detail::picked_nll(probs, cols, static_cast<double>(n));
}

inline Tensor translation_loss(const Tensor& probs, const std::vector<int>& labels_x,
                               const std::vector<int>& labels_y) {
  return translation_loss(probs, std::vector<std::vector<int>>{labels_x, labels_y});
}

/// −(1/n)·Σ_views Σ_i log p_view[i, y_i]; every view shares the labels.
inline Tensor source_supervised_loss(const std::vector<Tensor>& views, std::span<const std::size_t> labels) {
  if (views.empty()) throw ValueError("source_supervised_loss: no prediction views");
  const std::size_t n = labels.size();
  Tensor acc;
  for (const auto& p : views) {
    if (p.rows() != n)
      throw ShapeError("source_supervised_loss: " + std::to_string(p.rows()) + " predictions for " +
                       std::to_string(n) + " labels");
    for (auto y : labels)
      if (y >= p.cols())
        throw ValueError("source_supervised_loss: label " + std::to_string(y) + " out of range");
    Tensor s = sum(log_clamped(pick(p, labels), kProbEpsilon));
    acc = acc.defined() ? add(acc, s) : s;
  }
  return scale(acc, -1.0 / static_cast<double>(n));
}

inline Tensor source_supervised_loss(const Tensor& p, const Tensor& p_weak, const Tensor& p_strong,
                                     std::span<const std::size_t> labels) {
  return source_supervised_loss(std::vector<Tensor>{p, p_weak, p_strong}, labels);
}

/// A selected one-hot pseudo-label, or the zero vector when `label` is empty.
struct PseudoLabel {
  std::optional<std::size_t> label;
  double confidence = 0.0;  // max class probability

  std::size_t l1_norm() const { return label ? 1 : 0; }

  std::vector<double> one_hot(std::size_t classes) const {
    std::vector<double> v(classes, 0.0);
    if (label) v.at(*label) = 1.0;
    return v;
  }
};

inline double selection_threshold(double gamma) { return std::exp(-gamma); }

/// Closed-form minimizer of the self-paced objective over {0} ∪ one-hots:
/// select argmax (lowest index on ties) iff its probability exceeds e^{−γ}.
inline std::vector<PseudoLabel> select_pseudo_labels(std::span<const double> probs, std::size_t classes,
                                                     double gamma) {
  if (classes == 0 || probs.size() % classes != 0)
    throw ShapeError("select_pseudo_labels: ragged probability matrix");
  const double threshold = selection_threshold(gamma);
  std::vector<PseudoLabel> out(probs.size() / classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = probs.data() + i * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (row[c] > row[best]) best = c;
    out[i].confidence = row[best];
    if (row[best] > threshold) out[i].label = best;
  }
  return out;
}

inline std::vector<PseudoLabel> select_pseudo_labels(const Tensor& probs, double gamma) {
  return select_pseudo_labels(probs.values(), probs.cols(), gamma);
}

/// −(1/n_t)·Σ_i (Σ_c ŷ_ic·log p_ic + γ·|ŷ_i|₁). Unselected rows contribute
/// nothing; with no selection the result is a constant zero.
inline Tensor selfpaced_target_loss(const Tensor& probs, const std::vector<PseudoLabel>& pseudo, double gamma) {
  const std::size_t n = probs.rows();
  if (pseudo.size() != n)
    throw ShapeError("selfpaced_target_loss: " + std::to_string(pseudo.size()) + " labels for " +
                     std::to_string(n) + " predictions");
  std::vector<std::size_t> rows, cls;
  for (std::size_t i = 0; i < n; ++i)
    if (pseudo[i].label) {
      if (*pseudo[i].label >= probs.cols()) throw ValueError("selfpaced_target_loss: label out of range");
      rows.push_back(i);
      cls.push_back(*pseudo[i].label);
    }
  if (rows.empty()) return Tensor::scalar(0.0);
  Tensor logs = sum(log_clamped(pick(gather_rows(probs, rows), cls), kProbEpsilon));
  Tensor reg = Tensor::scalar(gamma * static_cast<double>(rows.size()));
  return scale(add(logs, reg), -1.0 / static_cast<double>(n));
}

enum class TrainingPhase { Adaptation, SelfTraining };

/// Loss components; undefined tensors count as zero (module disabled).
struct LossComponents {
  Tensor relational;     // L_rm
  Tensor translation;    // L_trans
  Tensor source;         // L_cls^s
  Tensor target;         // L_cls^t
};

/// L_rm + α·L_trans + β·L_cls^s + η·L_cls^t, with η = 0 in the adaptation phase.
inline Tensor total_loss(const LossComponents& c, const LossWeights& w, TrainingPhase phase) {
  w.validate();
  Tensor acc;
  auto accumulate = [&](const Tensor& t, double weight) {
    if (!t.defined() || weight == 0.0) return;
    if (t.size() != 1) throw ShapeError("total_loss: components must be scalars");
    if (!std::isfinite(t.item())) throw ValueError("total_loss: non-finite component");
    Tensor term = weight == 1.0 ? t : scale(t, weight);
    acc = acc.defined() ? add(acc, term) : term;
  };
  accumulate(c.relational, 1.0);
  accumulate(c.translation, w.alpha);
  accumulate(c.source, w.beta);
  if (phase == TrainingPhase::SelfTraining) accumulate(c.target, w.eta);
  return acc.defined() ? acc : Tensor::scalar(0.0);
}

}  // namespace pcuda
