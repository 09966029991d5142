#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every operation that has at least one operand with requires_grad set
// records its parents and a backward closure on the result node. Calling
// backward() on a scalar walks the resulting DAG in reverse topological
// order and then releases it, so only leaf tensors (parameters) keep state
// across steps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pcuda/error.hpp"

namespace pcuda {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values) {
    return Tensor(make_node(std::move(shape), std::move(values), false));
  }
  static Tensor parameter(Shape shape, std::vector<double> values) {
    return Tensor(make_node(std::move(shape), std::move(values), true));
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return Tensor(make_node(std::move(shape), std::move(v), requires_grad));
  }
  static Tensor scalar(double v) { return constant({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t rows() const { return node_->shape.front(); }
  /// Product of all trailing extents; a rank-1 tensor is one row of n.
  std::size_t cols() const {
    if (rank() == 1) return node_->shape[0];
    return size() / node_->shape[0];
  }

  std::span<const double> values() const { return node_->value; }
  /// Direct write access; intended for leaves (optimizer, initializers).
  std::span<double> mutable_values() { return node_->value; }
  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; allocated (zero) on first access.
  std::span<const double> grad() const { return node_->grad_buffer(); }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  /// Same values, cut from the graph.
  Tensor detach() const { return constant(shape(), node_->value); }

  const void* id() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Builds an op result. The closure is kept only when some parent
  /// requires a gradient.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward_fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    auto node = make_node(std::move(shape), std::move(values), needs);
    if (needs) {
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node_);
      node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
  }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

  static std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values,
                                                 bool requires_grad) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (auto e : shape)
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
    if (shape_numel(shape) != values.size())
      throw ShapeError("tensor of shape " + shape_string(shape) + " given " +
                       std::to_string(values.size()) + " values");
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return n;
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul: inner extents disagree, " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  std::vector<double> out(m * n);
  detail::MapMat(out.data(), m, n).noalias() =
      detail::CMapMat(a.values().data(), m, k) * detail::CMapMat(b.values().data(), k, n);
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    detail::CMapMat g(self.grad.data(), m, n);
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    if (pa.requires_grad)
      detail::MapMat(pa.grad_buffer().data(), m, k).noalias() +=
          g * detail::CMapMat(pb.value.data(), k, n).transpose();
    if (pb.requires_grad)
      detail::MapMat(pb.grad_buffer().data(), k, n).noalias() +=
          detail::CMapMat(pa.value.data(), m, k).transpose() * g;
  });
}

/// x·w + b with b broadcast over rows; b has shape [n] or [1×n].
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require_matrix(x, "linear");
  detail::require_matrix(w, "linear");
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
  if (w.shape()[0] != k)
    throw ShapeError("linear: input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(w.shape()));
  if (b.size() != n)
    throw ShapeError("linear: bias " + shape_string(b.shape()) + " vs weight " +
                     shape_string(w.shape()));
  std::vector<double> out(m * n);
  detail::MapMat o(out.data(), m, n);
  o.noalias() = detail::CMapMat(x.values().data(), m, k) * detail::CMapMat(w.values().data(), k, n);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.values().data(), n);
  return Tensor::make_result({m, n}, std::move(out), {x, w, b}, [m, k, n](detail::Node& self) {
    detail::CMapMat g(self.grad.data(), m, n);
    auto& px = detail::parent(self, 0);
    auto& pw = detail::parent(self, 1);
    auto& pb = detail::parent(self, 2);
    if (px.requires_grad)
      detail::MapMat(px.grad_buffer().data(), m, k).noalias() +=
          g * detail::CMapMat(pw.value.data(), k, n).transpose();
    if (pw.requires_grad)
      detail::MapMat(pw.grad_buffer().data(), k, n).noalias() +=
          detail::CMapMat(px.value.data(), m, k).transpose() * g;
    if (pb.requires_grad)
      Eigen::Map<Eigen::RowVectorXd>(pb.grad_buffer().data(), n).noalias() += Eigen::RowVectorXd::Ones(m) * g;
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  detail::MapMat(out.data(), n, m) = detail::CMapMat(a.values().data(), m, n).transpose();
  return Tensor::make_result({n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
    detail::MapMat(detail::parent(self, 0).grad_buffer().data(), m, n) +=
        detail::CMapMat(self.grad.data(), n, m).transpose();
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& par = detail::parent(self, p);
      if (!par.requires_grad) continue;
      auto g = par.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& par = detail::parent(self, p);
      if (!par.requires_grad) continue;
      const double sign = p == 0 ? 1.0 : -1.0;
      auto g = par.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [s](detail::Node& self) {
    auto g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.values()[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (self.value[i] > 0.0) g[i] += self.grad[i];
  });
}

/// log(max(x, floor)); the clamped region passes no gradient.
inline Tensor log_clamped(const Tensor& a, double floor = 1e-12) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = a.values()[i];
    if (std::isnan(v)) throw ValueError("log: NaN input at flat index " + std::to_string(i));
    out[i] = std::log(std::max(v, floor));
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [floor](detail::Node& self) {
    auto& p = detail::parent(self, 0);
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.value[i] > floor) g[i] += self.grad[i] / p.value[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::make_result({1}, {s}, {a}, [](detail::Node& self) {
    auto g = detail::parent(self, 0).grad_buffer();
    const double gs = self.grad[0];
    for (auto& x : g) x += gs;
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Max over consecutive groups of `group` rows: [(n·group)×c] → [n×c].
/// Ties resolve to the first row of the group.
inline Tensor segment_max(const Tensor& a, std::size_t group) {
  detail::require_matrix(a, "segment_max");
  const std::size_t total = a.shape()[0], c = a.shape()[1];
  if (group == 0 || total % group != 0)
    throw ShapeError("segment_max: " + std::to_string(total) + " rows not divisible into groups of " +
                     std::to_string(group));
  const std::size_t n = total / group;
  std::vector<double> out(n * c);
  std::vector<std::size_t> arg(n * c);
  const auto v = a.values();
  for (std::size_t s = 0; s < n; ++s) {
    const double* base = v.data() + s * group * c;
    double* o = out.data() + s * c;
    std::size_t* ai = arg.data() + s * c;
    std::copy(base, base + c, o);
    std::fill(ai, ai + c, s * group);
    for (std::size_t r = 1; r < group; ++r) {
      const double* row = base + r * c;
      for (std::size_t j = 0; j < c; ++j)
        if (row[j] > o[j]) {
          o[j] = row[j];
          ai[j] = s * group + r;
        }
    }
  }
  return Tensor::make_result({n, c}, std::move(out), {a},
                             [arg = std::move(arg), c](detail::Node& self) {
                               auto g = detail::parent(self, 0).grad_buffer();
                               for (std::size_t i = 0; i < arg.size(); ++i)
                                 g[arg[i] * c + i % c] += self.grad[i];
                             });
}

// ---------------------------------------------------------------------------
// Indexing and layout

inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t n = a.rows(), c = a.cols();
  std::vector<double> out(index.size() * c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n)
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of " +
                       std::to_string(n) + " rows");
    std::copy_n(a.values().data() + index[i] * c, c, out.data() + i * c);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const std::size_t rows = idx.size();
  return Tensor::make_result({rows, c}, std::move(out), {a},
                             [idx = std::move(idx), c](detail::Node& self) {
                               auto g = detail::parent(self, 0).grad_buffer();
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < c; ++j)
                                   g[idx[i] * c + j] += self.grad[i * c + j];
                             });
}

inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > a.rows())
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + std::to_string(a.rows()) + " rows");
  const std::size_t c = a.cols();
  std::vector<double> out(a.values().begin() + begin * c, a.values().begin() + (begin + count) * c);
  Shape s = a.shape();
  s[0] = count;
  return Tensor::make_result(std::move(s), std::move(out), {a}, [begin, c](detail::Node& self) {
    auto g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw ShapeError("concat_rows: width " + std::to_string(p.cols()) + " vs " + std::to_string(c));
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return Tensor::make_result({total, c}, std::move(out), parts,
                             [offsets = std::move(offsets)](detail::Node& self) {
                               for (std::size_t p = 0; p < offsets.size(); ++p) {
                                 auto& par = detail::parent(self, p);
                                 if (!par.requires_grad) continue;
                                 auto g = par.grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += self.grad[offsets[p] + i];
                               }
                             });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw ShapeError("concat_cols: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.values().data() + i * ca, ca, out.data() + i * c);
    std::copy_n(b.values().data() + i * cb, cb, out.data() + i * c + ca);
  }
  return Tensor::make_result({n, c}, std::move(out), {a, b}, [n, ca, cb, c](detail::Node& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ca; ++j) g[i * ca + j] += self.grad[i * c + j];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cb; ++j) g[i * cb + j] += self.grad[i * c + ca + j];
    }
  });
}

/// Picks one entry per row: out[i] = a[i, index[i]].
inline Tensor pick(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t n = a.rows(), c = a.cols();
  if (index.size() != n)
    throw ShapeError("pick: " + std::to_string(index.size()) + " indices for " + std::to_string(n) +
                     " rows");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= c)
      throw ShapeError("pick: column " + std::to_string(index[i]) + " out of " + std::to_string(c));
    out[i] = a.values()[i * c + index[i]];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Tensor::make_result({n}, std::move(out), {a}, [idx = std::move(idx), c](detail::Node& self) {
    auto g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[i * c + idx[i]] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Normalizations

/// Row-wise softmax of logits / temperature, max-subtracted.
inline Tensor softmax(const Tensor& logits, double temperature = 1.0) {
  if (!(temperature > 0.0))
    throw ValueError("softmax: temperature must be positive, got " + std::to_string(temperature));
  const std::size_t n = logits.rows(), k = logits.cols();
  std::vector<double> out(n * k);
  const auto v = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = v.data() + i * k;
    double* o = out.data() + i * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      if (std::isnan(row[j])) throw ValueError("softmax: NaN logit in row " + std::to_string(i));
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (o[j] = std::exp((row[j] - mx) / temperature));
    for (std::size_t j = 0; j < k; ++j) o[j] /= z;
  }
  return Tensor::make_result(logits.shape(), std::move(out), {logits},
                             [n, k, temperature](detail::Node& self) {
                               auto g = detail::parent(self, 0).grad_buffer();
                               for (std::size_t i = 0; i < n; ++i) {
                                 const double* y = self.value.data() + i * k;
                                 const double* gy = self.grad.data() + i * k;
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < k; ++j) dot += y[j] * gy[j];
                                 for (std::size_t j = 0; j < k; ++j)
                                   g[i * k + j] += y[j] * (gy[j] - dot) / temperature;
                               }
                             });
}

/// Rows with Euclidean norm at or below this are rejected by l2_normalize.
inline constexpr double kNormEpsilon = 1e-12;

inline Tensor l2_normalize(const Tensor& a) {
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n * d);
  std::vector<double> norms(n);
  const auto v = a.values();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += v[i * d + j] * v[i * d + j];
    const double nr = std::sqrt(s);
    if (!(nr > kNormEpsilon))
      throw ValueError("l2_normalize: row " + std::to_string(i) + " has near-zero norm");
    norms[i] = nr;
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v[i * d + j] / nr;
  }
  return Tensor::make_result(a.shape(), std::move(out), {a},
                             [norms = std::move(norms), d](detail::Node& self) {
                               auto g = detail::parent(self, 0).grad_buffer();
                               for (std::size_t i = 0; i < norms.size(); ++i) {
                                 const double* y = self.value.data() + i * d;
                                 const double* gy = self.grad.data() + i * d;
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < d; ++j) dot += y[j] * gy[j];
                                 for (std::size_t j = 0; j < d; ++j)
                                   g[i * d + j] += (gy[j] - y[j] * dot) / norms[i];
                               }
                             });
}

// ---------------------------------------------------------------------------
// Losses on distributions

/// Clamp floor applied to online probabilities before the log.
inline constexpr double kProbEpsilon = 1e-12;

/// −mean_i Σ_k target_ik · log(online_ik).
///
/// The target is treated as a constant; gradient flows only into `online`.
/// Both operands must hold probability rows (sum 1 within 1e-6).
inline Tensor cross_entropy_dist(const Tensor& target, const Tensor& online) {
  detail::require_same_shape(target, online, "cross_entropy_dist");
  const std::size_t n = target.rows(), k = target.cols();
  auto check = [&](const Tensor& t, const char* which) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double x = t.values()[i * k + j];
        if (std::isnan(x))
          throw ValueError(std::string("cross_entropy_dist: NaN in ") + which + " row " +
                           std::to_string(i));
        s += x;
      }
      if (std::abs(s - 1.0) > 1e-6)
        throw ValueError(std::string("cross_entropy_dist: ") + which + " row " + std::to_string(i) +
                         " sums to " + std::to_string(s));
    }
  };
  check(target, "target");
  check(online, "online");
  return scale(sum(mul(target.detach(), log_clamped(online, kProbEpsilon))),
               -1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Backward

/// Accumulates d(loss)/d(leaf) into every reachable requires_grad leaf and
/// then releases the recorded graph.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS for a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto* root = loss.node().get();
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (detail::Node* n : order) {
    if (!n->backward_fn) continue;  // leaf
    n->backward_fn = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

}  // namespace pcuda
