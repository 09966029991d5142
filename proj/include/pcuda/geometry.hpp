#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pcuda/error.hpp"
#include "pcuda/random.hpp"

namespace pcuda {

using Point3 = std::array<double, 3>;

enum class Axis { X = 0, Y = 1, Z = 2 };

inline char axis_name(Axis a) { return "XYZ"[static_cast<int>(a)]; }

inline Axis parse_axis(char c) {
  switch (c) {
    case 'x': case 'X': return Axis::X;
    case 'y': case 'Y': return Axis::Y;
    case 'z': case 'Z': return Axis::Z;
  }
  throw ValueError(std::string("unknown axis '") + c + "'");
}

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// A non-empty set of finite 3-D points.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> points) : points_(std::move(points)) {
    if (points_.empty()) throw ValueError("point cloud must contain at least one point");
    for (std::size_t i = 0; i < points_.size(); ++i)
      for (double c : points_[i])
        if (!std::isfinite(c))
          throw ValueError("point cloud has non-finite coordinate at point " + std::to_string(i));
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point3& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Point3>& points() const { return points_; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  PointCloud select(std::span<const std::size_t> index) const {
    std::vector<Point3> out;
    out.reserve(index.size());
    for (auto i : index) out.push_back(points_.at(i));
    return PointCloud(std::move(out));
  }

  PointCloud translated(const Point3& offset) const {
    std::vector<Point3> out = points_;
    for (auto& p : out)
      for (int a = 0; a < 3; ++a) p[a] += offset[a];
    return PointCloud(std::move(out));
  }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Point3> points_;
};

struct AxisSpan {
  Axis axis;
  double length;
};

inline Point3 centroid(const PointCloud& cloud) {
  Point3 c{0.0, 0.0, 0.0};
  for (const auto& p : cloud)
    for (int a = 0; a < 3; ++a) c[a] += p[a];
  const double n = static_cast<double>(cloud.size());
  for (auto& v : c) v /= n;
  return c;
}

inline AxisSpan axis_span(const PointCloud& cloud, Axis axis) {
  const int a = static_cast<int>(axis);
  double lo = cloud[0][a], hi = cloud[0][a];
  for (const auto& p : cloud) {
    lo = std::min(lo, p[a]);
    hi = std::max(hi, p[a]);
  }
  return {axis, hi - lo};
}

/// Centers on the centroid and scales so the farthest point has norm 1.
inline PointCloud normalize_unit_sphere(const PointCloud& cloud) {
  if (cloud.size() < 2) throw ValueError("normalize_unit_sphere: need at least two points");
  const Point3 c = centroid(cloud);
  std::vector<Point3> out(cloud.points());
  double r2 = 0.0;
  for (auto& p : out) {
    for (int a = 0; a < 3; ++a) p[a] -= c[a];
    r2 = std::max(r2, p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  }
  if (!(r2 > 0.0)) throw ValueError("normalize_unit_sphere: all points coincide");
  const double inv = 1.0 / std::sqrt(r2);
  for (auto& p : out)
    for (auto& v : p) v *= inv;
  return PointCloud(std::move(out));
}

/// Greedy max-min subset of k indices.
///
/// The seed is the point farthest from the centroid; every later pick
/// maximizes squared distance to the selected set. Ties go to the lowest index.
inline std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud, std::size_t k) {
  const std::size_t m = cloud.size();
  if (k < 1 || k > m)
    throw ValueError("farthest_point_sampling: k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(m) + "]");
  const Point3 c = centroid(cloud);
  std::size_t seed = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = squared_distance(cloud[i], c);
    if (d > best) {
      best = d;
      seed = i;
    }
  }
  std::vector<std::size_t> picked{seed};
  picked.reserve(k);
  std::vector<double> dist(m, std::numeric_limits<double>::infinity());
  std::vector<char> taken(m, 0);
  taken[seed] = 1;
  std::size_t last = seed;
  while (picked.size() < k) {
    std::size_t next = m;
    double far = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (taken[i]) continue;
      dist[i] = std::min(dist[i], squared_distance(cloud[i], cloud[last]));
      if (dist[i] > far) {
        far = dist[i];
        next = i;
      }
    }
    taken[next] = 1;
    picked.push_back(next);
    last = next;
  }
  return picked;
}

/// Row i lists the k nearest other points of i (squared Euclidean, ties by
/// lowest index), flattened row-major into an m×k vector.
inline std::vector<std::size_t> knn(const PointCloud& cloud, std::size_t k) {
  const std::size_t m = cloud.size();
  if (k < 1 || k >= m)
    throw ValueError("knn: k=" + std::to_string(k) + " must satisfy 1 <= k < " + std::to_string(m));
  std::vector<std::size_t> out(m * k);
  std::vector<std::pair<double, std::size_t>> cand(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t n = 0;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) cand[n++] = {squared_distance(cloud[i], cloud[j]), j};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = cand[j].second;
  }
  return out;
}

/// k distinct points without replacement, in draw order.
inline PointCloud random_subsample(const PointCloud& cloud, std::size_t k, Rng& rng) {
  const std::size_t m = cloud.size();
  if (k < 1 || k > m)
    throw ValueError("random_subsample: k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(m) + "]");
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: first k slots are the sample.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(m - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return cloud.select(idx);
}

/// Resizes to exactly `target` points: random subsample when larger, random
/// repeats appended when smaller.
inline PointCloud resample_to(const PointCloud& cloud, std::size_t target, Rng& rng) {
  if (target == 0) throw ValueError("resample_to: target must be positive");
  if (cloud.size() >= target) return random_subsample(cloud, target, rng);
  std::vector<Point3> out(cloud.points());
  while (out.size() < target) out.push_back(cloud[static_cast<std::size_t>(rng.below(cloud.size()))]);
  return PointCloud(std::move(out));
}

}  // namespace pcuda
