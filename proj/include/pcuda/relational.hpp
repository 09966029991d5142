#pragma once

// Cascaded relational consistency over a FIFO memory bank of embeddings.
//
// For an embedding z and bank entries z_k, the relational distribution is
// softmax_k(cos(z, z_k) / τ). Two pairs are aligned by cross-entropy:
// (weak → strong) and (original → weak); the left member of each pair is
// the gradient-stopped target.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pcuda/error.hpp"
#include "pcuda/tensor.hpp"

namespace pcuda {

class MemoryBank {
 public:
  static constexpr double kNormTolerance = 1e-6;

  MemoryBank(std::size_t capacity, std::size_t dim)
      : capacity_(capacity), dim_(dim), storage_(capacity * dim) {
    if (capacity == 0 || dim == 0) throw ValueError("memory bank: capacity and dim must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  /// Appends rows in order, evicting the oldest entries beyond capacity.
  void push(std::span<const double> rows, std::size_t n) {
    if (rows.size() != n * dim_)
      throw ShapeError("memory bank: expected rows of dimension " + std::to_string(dim_));
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) s += rows[i * dim_ + j] * rows[i * dim_ + j];
      if (std::abs(std::sqrt(s) - 1.0) > kNormTolerance)
        throw ValueError("memory bank: row " + std::to_string(i) + " is not unit norm");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t slot = (head_ + count_) % capacity_;
      std::copy_n(rows.data() + i * dim_, dim_, storage_.data() + slot * dim_);
      if (count_ < capacity_)
        ++count_;
      else
        head_ = (head_ + 1) % capacity_;
    }
  }

  /// Pushes the values of a [n × dim] tensor; no gradient is kept.
  void push(const Tensor& embeddings) {
    if (embeddings.cols() != dim_)
      throw ShapeError("memory bank: embedding dimension " + std::to_string(embeddings.cols()) +
                       " vs bank dimension " + std::to_string(dim_));
    push(embeddings.values(), embeddings.rows());
  }

  /// Entry i, 0 = oldest.
  std::span<const double> entry(std::size_t i) const {
    if (i >= count_) throw ShapeError("memory bank: entry " + std::to_string(i) + " out of range");
    return {storage_.data() + ((head_ + i) % capacity_) * dim_, dim_};
  }

  /// Oldest-first copy of the contents as a constant [size × dim] tensor.
  Tensor snapshot() const {
    if (empty()) throw ValueError("memory bank: snapshot of empty bank");
    std::vector<double> v;
    v.reserve(count_ * dim_);
    for (std::size_t i = 0; i < count_; ++i) {
      auto e = entry(i);
      v.insert(v.end(), e.begin(), e.end());
    }
    return Tensor::constant({count_, dim_}, std::move(v));
  }

  void clear() {
    head_ = 0;
    count_ = 0;
  }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::vector<double> storage_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

/// Stable view of the bank for one training step.
struct BankSnapshot {
  Tensor transposed;  // [dim × size]
  std::size_t size = 0;

  static BankSnapshot of(const MemoryBank& bank) {
    if (bank.empty()) throw ValueError("relational: memory bank is empty");
    return {transpose(bank.snapshot()), bank.size()};
  }
};

struct TemperatureSet {
  double target = 0.03;       // r, original sample (target of L_e)
  double weak_target = 0.05;  // r^w as target of L_o
  double weak_online = 0.08;  // r^w as online of L_e
  double strong = 0.12;       // r^s, online of L_o

  void validate() const {
    if (!(target > 0.0 && weak_target > 0.0 && weak_online > 0.0 && strong > 0.0))
      throw ValueError("temperatures must be positive");
    if (!(target < weak_online))
      throw ValueError("temperatures: original-sample target must be sharper than weak online");
    if (!(weak_target < strong))
      throw ValueError("temperatures: weak target must be sharper than strong online");
  }
};

/// Rows of softmax(z·bankᵀ / τ); z rows must be unit norm so the dot
/// product is the cosine similarity.
inline Tensor similarity_distribution(const Tensor& z, const BankSnapshot& bank, double temperature) {
  if (!(temperature > 0.0)) throw ValueError("similarity_distribution: temperature must be positive");
  if (bank.size == 0) throw ValueError("similarity_distribution: empty bank");
  const std::size_t d = z.cols();
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += z.at(i, j) * z.at(i, j);
    if (std::abs(std::sqrt(s) - 1.0) > MemoryBank::kNormTolerance)
      throw ValueError("similarity_distribution: embedding row " + std::to_string(i) +
                       " is not unit norm");
  }
  return softmax(matmul(z, bank.transposed), temperature);
}

/// L_o = H(r^w, r^s): weak-view distribution as target, strong-view as online.
inline Tensor loss_weak_strong(const Tensor& z_weak, const Tensor& z_strong, const BankSnapshot& bank,
                               const TemperatureSet& t) {
  const Tensor target = similarity_distribution(z_weak.detach(), bank, t.weak_target);
  return cross_entropy_dist(target, similarity_distribution(z_strong, bank, t.strong));
}

/// L_e = H(r, r^w): original-sample distribution as target, weak-view as online.
inline Tensor loss_orig_weak(const Tensor& z, const Tensor& z_weak, const BankSnapshot& bank,
                             const TemperatureSet& t) {
  const Tensor target = similarity_distribution(z.detach(), bank, t.target);
  return cross_entropy_dist(target, similarity_distribution(z_weak, bank, t.weak_online));
}

struct RelationalTerms {
  Tensor weak_strong;  // L_o
  Tensor orig_weak;    // L_e
  Tensor total;        // L_o + λ·L_e
};

inline RelationalTerms relational_terms(const Tensor& z, const Tensor& z_weak, const Tensor& z_strong,
                                        const BankSnapshot& bank, const TemperatureSet& t,
                                        double lambda) {
  if (lambda < 0.0) throw ValueError("relational: lambda must be non-negative");
  Tensor lo = loss_weak_strong(z_weak, z_strong, bank, t);
  Tensor le = loss_orig_weak(z, z_weak, bank, t);
  Tensor total = lambda == 0.0 ? lo : add(lo, scale(le, lambda));
  return {lo, le, total};
}

inline Tensor relational_loss(const Tensor& z, const Tensor& z_weak, const Tensor& z_strong,
                              const BankSnapshot& bank, const TemperatureSet& t, double lambda) {
  return relational_terms(z, z_weak, z_strong, bank, t, lambda).total;
}

}  // namespace pcuda
