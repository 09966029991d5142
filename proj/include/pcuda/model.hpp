#pragma once

// Shared point encoder with a projector, a semantic head and a
// translation-distance head.
//
// The encoder is a per-point MLP followed by a channelwise max over the
// points of each cloud, optionally preceded by one edge convolution over
// the k nearest neighbours.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcuda/error.hpp"
#include "pcuda/geometry.hpp"
#include "pcuda/random.hpp"
#include "pcuda/tensor.hpp"

namespace pcuda {

struct EncoderConfig {
  std::vector<std::size_t> hidden{64, 128};
  std::size_t feature_dim = 128;
  bool edge_conv = false;
  std::size_t edge_k = 8;
  std::size_t num_classes = 4;
  std::size_t translation_classes = 4;
  std::size_t projection_dim = 64;

  void validate() const {
    if (hidden.empty()) throw ValueError("encoder: at least one hidden width required");
    for (auto h : hidden)
      if (h == 0) throw ValueError("encoder: hidden widths must be positive");
    if (feature_dim == 0 || projection_dim == 0 || num_classes < 2)
      throw ValueError("encoder: feature_dim, projection_dim must be positive and classes >= 2");
    if (translation_classes != 4) throw ValueError("encoder: translation head has exactly 4 classes");
    if (edge_conv && edge_k == 0) throw ValueError("encoder: edge_k must be positive");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct Linear {
  Tensor weight;  // [in × out]
  Tensor bias;    // [out]

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }

  /// Uniform in ±1/√fan_in for both weight and bias.
  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out), b(out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    for (auto& v : b) v = rng.uniform(-bound, bound);
    return {Tensor::parameter({in, out}, std::move(w)), Tensor::parameter({out}, std::move(b))};
  }
};

class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams init(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    ModelParams p;
    p.config_ = config;
    std::size_t in = config.edge_conv ? 6 : 3;
    for (auto h : config.hidden) {
      p.encoder_.push_back(Linear::init(in, h, rng));
      in = h;
    }
    p.encoder_.push_back(Linear::init(in, config.feature_dim, rng));
    p.proj_hidden_ = Linear::init(config.feature_dim, config.feature_dim, rng);
    p.proj_out_ = Linear::init(config.feature_dim, config.projection_dim, rng);
    p.semantic_ = Linear::init(config.feature_dim, config.num_classes, rng);
    p.translation_ = Linear::init(config.feature_dim, config.translation_classes, rng);
    return p;
  }

  const EncoderConfig& config() const { return config_; }
  /// First layer is the edge convolution when enabled.
  const std::vector<Linear>& encoder() const { return encoder_; }
  const Linear& projector_hidden() const { return proj_hidden_; }
  const Linear& projector_out() const { return proj_out_; }
  const Linear& semantic_head() const { return semantic_; }
  const Linear& translation_head() const { return translation_; }

  /// Stable names in checkpoint order.
  std::vector<std::pair<std::string, Tensor>> named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
      out.emplace_back("encoder." + std::to_string(i) + ".weight", encoder_[i].weight);
      out.emplace_back("encoder." + std::to_string(i) + ".bias", encoder_[i].bias);
    }
    out.emplace_back("projector.0.weight", proj_hidden_.weight);
    out.emplace_back("projector.0.bias", proj_hidden_.bias);
    out.emplace_back("projector.1.weight", proj_out_.weight);
    out.emplace_back("projector.1.bias", proj_out_.bias);
    out.emplace_back("semantic.weight", semantic_.weight);
    out.emplace_back("semantic.bias", semantic_.bias);
    out.emplace_back("translation.weight", translation_.weight);
    out.emplace_back("translation.bias", translation_.bias);
    return out;
  }

  std::vector<Tensor> all() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  /// Tensors owned by the encoder only.
  std::vector<Tensor> encoder_tensors() const {
    std::vector<Tensor> out;
    for (const auto& l : encoder_) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
    return out;
  }

  /// Rebuilds parameters from values listed in named() order; shapes must
  /// match what `config` implies.
  static ModelParams from_values(const EncoderConfig& config, std::vector<std::vector<double>> values) {
    ModelParams p = init(config, 0);
    auto slots = p.mutable_linears();
    if (values.size() != slots.size() * 2)
      throw ShapeError("model: expected " + std::to_string(slots.size() * 2) + " tensors, got " +
                       std::to_string(values.size()));
    for (std::size_t i = 0; i < slots.size(); ++i) {
      Linear& l = *slots[i];
      auto& w = values[2 * i];
      auto& b = values[2 * i + 1];
      if (w.size() != l.weight.size() || b.size() != l.bias.size())
        throw ShapeError("model: tensor size mismatch in layer " + std::to_string(i));
      l.weight = Tensor::parameter(l.weight.shape(), std::move(w));
      l.bias = Tensor::parameter(l.bias.shape(), std::move(b));
    }
    return p;
  }

  /// Independent copy with fresh leaf tensors.
  ModelParams clone() const {
    ModelParams p = *this;
    auto copy = [](Linear& l) {
      l.weight = Tensor::parameter(l.weight.shape(), {l.weight.values().begin(), l.weight.values().end()});
      l.bias = Tensor::parameter(l.bias.shape(), {l.bias.values().begin(), l.bias.values().end()});
    };
    for (auto& l : p.encoder_) copy(l);
    copy(p.proj_hidden_);
    copy(p.proj_out_);
    copy(p.semantic_);
    copy(p.translation_);
    return p;
  }

 private:
  std::vector<Linear*> mutable_linears() {
    std::vector<Linear*> out;
    for (auto& l : encoder_) out.push_back(&l);
    out.push_back(&proj_hidden_);
    out.push_back(&proj_out_);
    out.push_back(&semantic_);
    out.push_back(&translation_);
    return out;
  }

  EncoderConfig config_;
  std::vector<Linear> encoder_;
  Linear proj_hidden_, proj_out_, semantic_, translation_;
};

/// B clouds of m points each, flattened to (B·m) rows of xyz.
struct CloudBatch {
  std::size_t clouds = 0;
  std::size_t points = 0;
  std::vector<double> coords;

  static CloudBatch from(std::span<const PointCloud> batch) {
    if (batch.empty()) throw ShapeError("cloud batch is empty");
    CloudBatch b;
    b.clouds = batch.size();
    b.points = batch.front().size();
    b.coords.reserve(b.clouds * b.points * 3);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i].size() != b.points)
        throw ShapeError("cloud batch: cloud " + std::to_string(i) + " has " +
                         std::to_string(batch[i].size()) + " points, expected " +
                         std::to_string(b.points));
      for (const auto& p : batch[i]) b.coords.insert(b.coords.end(), p.begin(), p.end());
    }
    return b;
  }

  static CloudBatch from(const std::vector<PointCloud>& batch) {
    return from(std::span<const PointCloud>(batch));
  }

  PointCloud cloud(std::size_t i) const {
    std::vector<Point3> pts(points);
    for (std::size_t j = 0; j < points; ++j)
      for (int a = 0; a < 3; ++a) pts[j][a] = coords[(i * points + j) * 3 + a];
    return PointCloud(std::move(pts));
  }
};

namespace detail {

/// Rows [x_i, x_j − x_i] for each point i and each of its k neighbours j.
inline Tensor edge_features(const CloudBatch& batch, std::size_t k) {
  const std::size_t m = batch.points;
  std::vector<double> feats(batch.clouds * m * k * 6);
  double* out = feats.data();
  for (std::size_t c = 0; c < batch.clouds; ++c) {
    const PointCloud cloud = batch.cloud(c);
    const auto nbr = knn(cloud, k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const Point3& xi = cloud[i];
        const Point3& xj = cloud[nbr[i * k + j]];
        for (int a = 0; a < 3; ++a) {
          out[a] = xi[a];
          out[3 + a] = xj[a] - xi[a];
        }
        out += 6;
      }
  }
  return Tensor::constant({batch.clouds * m * k, 6}, std::move(feats));
}

}  // namespace detail

/// Φ_fea: batch → [B × feature_dim]. Invariant to point order.
inline Tensor encode(const ModelParams& params, const CloudBatch& batch) {
  const auto& cfg = params.config();
  const auto& layers = params.encoder();
  Tensor h;
  std::size_t first = 0;
  if (cfg.edge_conv) {
    if (cfg.edge_k >= batch.points)
      throw ShapeError("encode: edge_k " + std::to_string(cfg.edge_k) + " needs more than " +
                       std::to_string(batch.points) + " points");
    h = segment_max(relu(layers[0](detail::edge_features(batch, cfg.edge_k))), cfg.edge_k);
    first = 1;
  } else {
    h = Tensor::constant({batch.clouds * batch.points, 3}, batch.coords);
  }
  for (std::size_t i = first; i < layers.size(); ++i) h = relu(layers[i](h));
  return segment_max(h, batch.points);
}

/// Φ_proj: two-layer transform, unit-normalized rows.
inline Tensor project(const ModelParams& params, const Tensor& features) {
  return l2_normalize(params.projector_out()(relu(params.projector_hidden()(features))));
}

inline Tensor semantic_logits(const ModelParams& params, const Tensor& features) {
  return params.semantic_head()(features);
}

inline Tensor classify_semantic(const ModelParams& params, const Tensor& features) {
  return softmax(semantic_logits(params, features), 1.0);
}

inline Tensor classify_translation(const ModelParams& params, const Tensor& features) {
  return softmax(params.translation_head()(features), 1.0);
}

/// Inference path: encoder and semantic head only.
inline Tensor predict(const ModelParams& params, const CloudBatch& batch) {
  return classify_semantic(params, encode(params, batch));
}

}  // namespace pcuda
