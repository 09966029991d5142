#pragma once

// Geometric augmentations: jitter, anisotropic scaling, half-space cropping,
// translation with span-proportional distance labels, FPS mixing, and the
// composite weak/strong policies.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "pcuda/error.hpp"
#include "pcuda/geometry.hpp"
#include "pcuda/random.hpp"

namespace pcuda {

inline PointCloud jitter(const PointCloud& cloud, double sigma, double clip, Rng& rng) {
  if (sigma < 0.0) throw ValueError("jitter: sigma must be non-negative");
  if (!(clip > 0.0)) throw ValueError("jitter: clip must be positive");
  std::vector<Point3> out(cloud.points());
  if (sigma == 0.0) return PointCloud(std::move(out));
  for (auto& p : out)
    for (auto& v : p) v += std::clamp(sigma * rng.normal(), -clip, clip);
  return PointCloud(std::move(out));
}

inline PointCloud scale_axes(const PointCloud& cloud, const Point3& factors) {
  std::vector<Point3> out(cloud.points());
  for (auto& p : out)
    for (int a = 0; a < 3; ++a) p[a] *= factors[a];
  return PointCloud(std::move(out));
}

/// Multiplies each axis by an independent factor drawn uniformly from [lo, hi].
inline PointCloud anisotropic_scale(const PointCloud& cloud, double lo, double hi, Rng& rng) {
  if (!(lo > 0.0) || hi < lo || !std::isfinite(hi))
    throw ValueError("anisotropic_scale: invalid range [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "]");
  Point3 f;
  for (auto& v : f) v = rng.uniform(lo, hi);
  return scale_axes(cloud, f);
}

inline Point3 random_unit_direction(Rng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

struct CropResult {
  PointCloud cloud;
  Point3 direction;
  std::vector<std::size_t> kept;  // ascending input indices
};

/// Keeps the ⌈fraction·m⌉ points with the smallest projection onto
/// `direction` (ties by lowest index), in input order.
inline CropResult crop_along(const PointCloud& cloud, double fraction, const Point3& direction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ValueError("crop_retain: fraction must lie in (0, 1], got " + std::to_string(fraction));
  const std::size_t m = cloud.size();
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m)));
  if (keep == 0) throw ValueError("crop_retain: nothing retained");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> proj(m);
  for (std::size_t i = 0; i < m; ++i)
    proj[i] = cloud[i][0] * direction[0] + cloud[i][1] * direction[1] + cloud[i][2] * direction[2];
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return proj[a] < proj[b]; });
  order.resize(std::min(keep, m));
  std::sort(order.begin(), order.end());
  PointCloud out = cloud.select(order);
  return {std::move(out), direction, std::move(order)};
}

/// Half-space occlusion along a uniformly random direction.
inline CropResult crop_retain(const PointCloud& cloud, double fraction, Rng& rng) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ValueError("crop_retain: fraction must lie in (0, 1], got " + std::to_string(fraction));
  return crop_along(cloud, fraction, random_unit_direction(rng));
}

// ---------------------------------------------------------------------------
// Translation pretext

struct TranslationSpec {
  std::vector<Axis> axes{Axis::X, Axis::Y};
  std::vector<double> thresholds{0.025, 0.05, 0.075, 0.1};  // fractions of the span
  double cap = 0.1;

  static constexpr std::size_t kClasses = 4;

  void validate() const {
    if (axes.empty() || axes.size() > 3) throw ValueError("translation: need 1 to 3 axes");
    for (std::size_t i = 0; i < axes.size(); ++i)
      for (std::size_t j = i + 1; j < axes.size(); ++j)
        if (axes[i] == axes[j]) throw ValueError("translation: duplicate axis");
    if (thresholds.size() != kClasses)
      throw ValueError("translation: exactly 4 thresholds required");
    if (!(thresholds[0] > 0.0)) throw ValueError("translation: thresholds must be positive");
    for (std::size_t j = 1; j < thresholds.size(); ++j)
      if (!(thresholds[j] > thresholds[j - 1]))
        throw ValueError("translation: thresholds must increase strictly");
    if (thresholds.back() > cap) throw ValueError("translation: largest threshold exceeds cap");
  }
};

/// Class in 1..4 whose threshold (fraction × span) is nearest to `magnitude`;
/// equidistant magnitudes take the lower class.
inline int translation_label(double magnitude, double span, const TranslationSpec& spec) {
  int best = 1;
  double best_d = std::abs(magnitude - spec.thresholds[0] * span);
  for (std::size_t j = 1; j < spec.thresholds.size(); ++j) {
    const double d = std::abs(magnitude - spec.thresholds[j] * span);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j) + 1;
    }
  }
  return best;
}

struct TranslatedSample {
  PointCloud cloud;
  std::vector<int> labels;      // one per translated axis, 1..4
  std::vector<double> offsets;  // signed, one per translated axis
};

/// Rigidly translates along each configured axis by a magnitude drawn from
/// (0, cap·span] with a random sign, and labels each axis by distance class.
inline TranslatedSample make_translation_sample(const PointCloud& cloud, const TranslationSpec& spec,
                                                Rng& rng) {
  spec.validate();
  Point3 offset{0.0, 0.0, 0.0};
  TranslatedSample out;
  for (Axis a : spec.axes) {
    const double span = axis_span(cloud, a).length;
    if (!(span > 0.0))
      throw ValueError(std::string("translation: zero span along axis ") + axis_name(a));
    const double magnitude = spec.cap * span * rng.uniform_open_closed();
    const double signed_offset = rng.coin() ? magnitude : -magnitude;
    offset[static_cast<int>(a)] = signed_offset;
    out.labels.push_back(translation_label(magnitude, span, spec));
    out.offsets.push_back(signed_offset);
  }
  out.cloud = cloud.translated(offset);
  return out;
}

// ---------------------------------------------------------------------------
// FPS mixing

using LightTransform = std::function<PointCloud(const PointCloud&, Rng&)>;

inline LightTransform identity_transform() {
  return [](const PointCloud& c, Rng&) { return c; };
}

inline LightTransform jitter_transform(double sigma, double clip) {
  return [sigma, clip](const PointCloud& c, Rng& rng) { return jitter(c, sigma, clip, rng); };
}

/// FPS-selects ⌊ρ·m⌋ points from t1(cloud) and ⌊(1−ρ)·m⌋ from t2(cloud) and
/// concatenates them.
inline PointCloud fps_mix(const PointCloud& cloud, double rho, const LightTransform& t1,
                          const LightTransform& t2, Rng& rng) {
  if (!(rho > 0.0 && rho < 1.0)) throw ValueError("fps_mix: ratio must lie in (0, 1)");
  const std::size_t m = cloud.size();
  if (m < 2) throw ValueError("fps_mix: need at least two points");
  const auto k1 = static_cast<std::size_t>(std::floor(rho * static_cast<double>(m)));
  const auto k2 = static_cast<std::size_t>(std::floor((1.0 - rho) * static_cast<double>(m)));
  if (k1 == 0 || k2 == 0)
    throw ValueError("fps_mix: ratio " + std::to_string(rho) + " selects zero points from one copy");
  const PointCloud a = t1(cloud, rng);
  const PointCloud b = t2(cloud, rng);
  std::vector<Point3> out;
  out.reserve(k1 + k2);
  for (auto i : farthest_point_sampling(a, k1)) out.push_back(a[i]);
  for (auto i : farthest_point_sampling(b, k2)) out.push_back(b[i]);
  return PointCloud(std::move(out));
}

// ---------------------------------------------------------------------------
// Policies

enum class AugmentOp { Jitter, Crop, Scale };
enum class Strength { Weak, Strong };

inline char op_code(AugmentOp op) {
  switch (op) {
    case AugmentOp::Jitter: return 'J';
    case AugmentOp::Crop: return 'C';
    case AugmentOp::Scale: return 'S';
  }
  return '?';
}

/// Parses an operation list such as "JC" or "JCS".
inline std::vector<AugmentOp> parse_ops(const std::string& code) {
  std::vector<AugmentOp> ops;
  for (char c : code) {
    switch (c) {
      case 'J': case 'j': ops.push_back(AugmentOp::Jitter); break;
      case 'C': case 'c': ops.push_back(AugmentOp::Crop); break;
      case 'S': case 's': ops.push_back(AugmentOp::Scale); break;
      default: throw ValueError(std::string("unknown augmentation code '") + c + "'");
    }
  }
  return ops;
}

inline std::string ops_code(const std::vector<AugmentOp>& ops) {
  std::string s;
  for (auto op : ops) s += op_code(op);
  return s;
}

struct AugmentPolicy {
  double jitter_sigma = 0.01;
  double jitter_clip = 0.05;
  double scale_lo = 2.0 / 3.0;
  double scale_hi = 1.5;
  double weak_crop_lo = 0.6;
  double weak_crop_hi = 0.9;
  double strong_crop_lo = 0.5;
  double strong_crop_hi = 0.8;
  std::vector<AugmentOp> weak_ops{AugmentOp::Jitter, AugmentOp::Crop};
  std::vector<AugmentOp> strong_ops{AugmentOp::Jitter, AugmentOp::Crop, AugmentOp::Scale};
  bool use_fps_mix = true;
  double mix_lo = 0.3;
  double mix_hi = 0.7;
  double light_sigma = 0.01;
  double light_clip = 0.05;
  std::size_t model_points = 256;

  void validate() const {
    auto has = [](const std::vector<AugmentOp>& v, AugmentOp op) {
      return std::find(v.begin(), v.end(), op) != v.end();
    };
    for (auto op : weak_ops)
      if (!has(strong_ops, op)) throw ValueError("policy: strong ops must include every weak op");
    if (strong_ops.size() <= weak_ops.size())
      throw ValueError("policy: strong ops must strictly extend weak ops");
    if (!(weak_crop_lo > 0.0 && weak_crop_lo <= weak_crop_hi && weak_crop_hi <= 1.0) ||
        !(strong_crop_lo > 0.0 && strong_crop_lo <= strong_crop_hi && strong_crop_hi <= 1.0))
      throw ValueError("policy: crop fractions must satisfy 0 < lo <= hi <= 1");
    if (!(weak_crop_lo > strong_crop_lo && weak_crop_hi > strong_crop_hi))
      throw ValueError("policy: weak crop must retain more points than strong crop");
    if (!(mix_lo > 0.0 && mix_lo <= mix_hi && mix_hi < 1.0))
      throw ValueError("policy: mix ratio range must lie in (0, 1)");
    if (model_points == 0) throw ValueError("policy: model_points must be positive");
  }
};

struct PolicyOutput {
  PointCloud cloud;
  std::size_t points_before_resample;
};

namespace detail {

inline PointCloud mix_stage(const PointCloud& cloud, const AugmentPolicy& p, Rng& rng) {
  if (!p.use_fps_mix) return cloud;
  const double rho = rng.uniform(p.mix_lo, p.mix_hi);
  const auto light = jitter_transform(p.light_sigma, p.light_clip);
  return fps_mix(cloud, rho, light, light, rng);
}

inline PolicyOutput ops_stage(PointCloud cloud, const AugmentPolicy& p, Strength s, Rng& rng) {
  const auto& ops = s == Strength::Weak ? p.weak_ops : p.strong_ops;
  const double crop_lo = s == Strength::Weak ? p.weak_crop_lo : p.strong_crop_lo;
  const double crop_hi = s == Strength::Weak ? p.weak_crop_hi : p.strong_crop_hi;
  for (auto op : ops) {
    switch (op) {
      case AugmentOp::Jitter: cloud = jitter(cloud, p.jitter_sigma, p.jitter_clip, rng); break;
      case AugmentOp::Crop: {
        // Fraction is drawn first so weak and strong on one stream stay aligned.
        const double f = crop_lo + (crop_hi - crop_lo) * rng.uniform();
        cloud = crop_retain(cloud, f, rng).cloud;
        break;
      }
      case AugmentOp::Scale: cloud = anisotropic_scale(cloud, p.scale_lo, p.scale_hi, rng); break;
    }
  }
  const std::size_t before = cloud.size();
  return {resample_to(cloud, p.model_points, rng), before};
}

}  // namespace detail

/// fps_mix, then the strength's op list in order, then resample to
/// model_points.
inline PolicyOutput apply_policy_detailed(const PointCloud& cloud, const AugmentPolicy& policy,
                                          Strength strength, Rng& rng) {
  policy.validate();
  return detail::ops_stage(detail::mix_stage(cloud, policy, rng), policy, strength, rng);
}

inline PointCloud apply_policy(const PointCloud& cloud, const AugmentPolicy& policy,
                               Strength strength, Rng& rng) {
  return apply_policy_detailed(cloud, policy, strength, rng).cloud;
}

struct AugmentedViews {
  PointCloud weak;
  PointCloud strong;
};

/// Weak and strong views derived from one shared mixed cloud.
inline AugmentedViews augment_views(const PointCloud& cloud, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  const PointCloud mixed = detail::mix_stage(cloud, policy, rng);
  PointCloud weak = detail::ops_stage(mixed, policy, Strength::Weak, rng).cloud;
  PointCloud strong = detail::ops_stage(mixed, policy, Strength::Strong, rng).cloud;
  return {std::move(weak), std::move(strong)};
}

}  // namespace pcuda
