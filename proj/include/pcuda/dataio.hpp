#pragma once

// Procedural source/target domain pairs, the cloud text format, and
// dataset manifests.
//
// Cloud file:
//   pcuda v1 <m>
//   x y z            (m lines, 17 significant digits)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "pcuda/augment.hpp"
#include "pcuda/error.hpp"
#include "pcuda/geometry.hpp"
#include "pcuda/random.hpp"
#include "pcuda/textio.hpp"

namespace pcuda {

// ---------------------------------------------------------------------------
// Shape generators (Z is up)

enum class ShapeKind { Box, PlaneWithLegs, RodWithDisc, Cylinder };

inline const char* shape_kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Box: return "box";
    case ShapeKind::PlaneWithLegs: return "plane-with-legs";
    case ShapeKind::RodWithDisc: return "rod-with-disc";
    case ShapeKind::Cylinder: return "cylinder";
  }
  return "?";
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double draw(Rng& rng) const { return rng.uniform(lo, hi); }
};

/// Raw generator parameters; meaning depends on the kind.
///   box:             size = (width, depth, height)
///   plane-with-legs: size = (width, depth, leg height), radius = leg radius
///   rod-with-disc:   size.z = rod height, radius = disc radius, aux = rod radius
///   cylinder:        size.z = height, radius = radius
struct ShapeParams {
  Point3 size{1.0, 1.0, 1.0};
  double radius = 0.5;
  double aux = 0.05;
};

struct ShapeClass {
  std::size_t id = 0;
  ShapeKind kind = ShapeKind::Box;
  Range width{0.5, 1.0};
  Range depth{0.5, 1.0};
  Range height{0.5, 1.0};
  Range radius{0.25, 0.45};

  ShapeParams draw(Rng& rng) const {
    ShapeParams p;
    p.size = {width.draw(rng), depth.draw(rng), height.draw(rng)};
    p.radius = radius.draw(rng);
    p.aux = kind == ShapeKind::RodWithDisc ? 0.04 : 0.03;
    return p;
  }
};

/// The four built-in classes, one per generator kind. C must be 2..4.
inline std::vector<ShapeClass> default_shape_classes(std::size_t num_classes = 4) {
  if (num_classes < 2 || num_classes > 4) throw ValueError("shape classes: C must lie in 2..4");
  std::vector<ShapeClass> all{
      {0, ShapeKind::Box, {0.5, 1.0}, {0.5, 1.0}, {0.4, 1.0}, {0.0, 0.0}},
      {1, ShapeKind::PlaneWithLegs, {0.8, 1.2}, {0.5, 0.9}, {0.5, 0.8}, {0.025, 0.04}},
      {2, ShapeKind::RodWithDisc, {0.0, 0.0}, {0.0, 0.0}, {1.0, 1.6}, {0.25, 0.45}},
      {3, ShapeKind::Cylinder, {0.0, 0.0}, {0.0, 0.0}, {0.8, 1.6}, {0.25, 0.45}},
  };
  all.resize(num_classes);
  return all;
}

namespace detail {

struct Patch {
  double area;
  std::function<Point3(Rng&)> sample;
};

inline Patch rect_patch(int normal_axis, double fixed, Point3 lo, Point3 hi) {
  const int a = (normal_axis + 1) % 3, b = (normal_axis + 2) % 3;
  const double area = (hi[a] - lo[a]) * (hi[b] - lo[b]);
  return {area, [=](Rng& rng) {
            Point3 p;
            p[normal_axis] = fixed;
            p[a] = rng.uniform(lo[a], hi[a]);
            p[b] = rng.uniform(lo[b], hi[b]);
            return p;
          }};
}

inline Patch tube_patch(double cx, double cy, double r, double z0, double z1) {
  return {2.0 * std::numbers::pi * r * (z1 - z0), [=](Rng& rng) {
            const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
            return Point3{cx + r * std::cos(t), cy + r * std::sin(t), rng.uniform(z0, z1)};
          }};
}

inline Patch disc_patch(double cx, double cy, double r, double z) {
  return {std::numbers::pi * r * r, [=](Rng& rng) {
            const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double s = r * std::sqrt(rng.uniform());
            return Point3{cx + s * std::cos(t), cy + s * std::sin(t), z};
          }};
}

inline void add_box(std::vector<Patch>& out, Point3 lo, Point3 hi) {
  for (int ax = 0; ax < 3; ++ax) {
    out.push_back(rect_patch(ax, lo[ax], lo, hi));
    out.push_back(rect_patch(ax, hi[ax], lo, hi));
  }
}

inline std::vector<Patch> surface_patches(ShapeKind kind, const ShapeParams& p) {
  std::vector<Patch> out;
  switch (kind) {
    case ShapeKind::Box: {
      const Point3 h{p.size[0] / 2, p.size[1] / 2, p.size[2] / 2};
      add_box(out, {-h[0], -h[1], -h[2]}, h);
      break;
    }
    case ShapeKind::PlaneWithLegs: {
      const double w = p.size[0] / 2, d = p.size[1] / 2, leg = p.size[2];
      const double top = 0.04;
      add_box(out, {-w, -d, leg}, {w, d, leg + top});
      const double inset = 0.08;
      for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0})
          out.push_back(tube_patch(sx * (w - inset), sy * (d - inset), p.radius, 0.0, leg));
      break;
    }
    case ShapeKind::RodWithDisc: {
      const double disc_h = 0.05;
      out.push_back(disc_patch(0, 0, p.radius, 0.0));
      out.push_back(disc_patch(0, 0, p.radius, disc_h));
      out.push_back(tube_patch(0, 0, p.radius, 0.0, disc_h));
      out.push_back(tube_patch(0, 0, p.aux, disc_h, p.size[2]));
      out.push_back(disc_patch(0, 0, p.aux, p.size[2]));
      break;
    }
    case ShapeKind::Cylinder: {
      const double h = p.size[2] / 2;
      out.push_back(tube_patch(0, 0, p.radius, -h, h));
      out.push_back(disc_patch(0, 0, p.radius, -h));
      out.push_back(disc_patch(0, 0, p.radius, h));
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Area-weighted surface samples of a primitive, in its own (unnormalized) frame.
inline PointCloud sample_surface(ShapeKind kind, const ShapeParams& params, std::size_t m, Rng& rng) {
  if (m == 0) throw ValueError("sample_surface: need at least one point");
  const auto patches = detail::surface_patches(kind, params);
  std::vector<double> cdf;
  double total = 0.0;
  for (const auto& p : patches) {
    if (!(p.area > 0.0)) throw ValueError("sample_surface: degenerate shape parameters");
    cdf.push_back(total += p.area);
  }
  std::vector<Point3> pts;
  pts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), patches.size() - 1);
    pts.push_back(patches[k].sample(rng));
  }
  return PointCloud(std::move(pts));
}

/// Surface-sampled instance of the class, normalized to the unit sphere.
inline PointCloud generate_shape(const ShapeClass& cls, std::size_t m_raw, Rng& rng) {
  if (m_raw < 64) throw ValueError("generate_shape: m_raw must be at least 64");
  const ShapeParams params = cls.draw(rng);
  return normalize_unit_sphere(sample_surface(cls.kind, params, m_raw, rng));
}

// ---------------------------------------------------------------------------
// Domain recipes

enum class Completeness { Complete, Occluded };
enum class DensityProfile { Uniform, ViewBiased };

struct DomainRecipe {
  Completeness completeness = Completeness::Complete;
  Range retain{0.5, 0.9};  // fraction kept by the occluding crop
  double noise_sigma = 0.0;
  Range shift{0.0, 0.0};
  DensityProfile density = DensityProfile::Uniform;

  void validate() const {
    if (completeness == Completeness::Occluded &&
        !(retain.lo >= 0.5 && retain.lo <= retain.hi && retain.hi <= 0.9))
      throw ValueError("recipe: occlusion must remove 10-50% of points");
    if (noise_sigma < 0.0) throw ValueError("recipe: noise must be non-negative");
    if (shift.lo < 0.0 || shift.hi < shift.lo) throw ValueError("recipe: invalid shift range");
  }

  std::string describe() const {
    std::ostringstream os;
    os << "completeness=" << (completeness == Completeness::Occluded ? "occluded" : "complete")
       << " retain=" << textio::format_double(retain.lo) << ',' << textio::format_double(retain.hi)
       << " noise=" << textio::format_double(noise_sigma) << " shift=" << textio::format_double(shift.lo)
       << ',' << textio::format_double(shift.hi)
       << " density=" << (density == DensityProfile::ViewBiased ? "view-biased" : "uniform");
    return os.str();
  }

  static DomainRecipe source_default() { return {}; }
  static DomainRecipe target_default() {
    DomainRecipe r;
    r.completeness = Completeness::Occluded;
    r.retain = {0.5, 0.9};
    r.noise_sigma = 0.02;
    r.shift = {0.05, 0.2};
    r.density = DensityProfile::ViewBiased;
    return r;
  }
};

struct DomainSample {
  PointCloud cloud;
  Point3 shift{0.0, 0.0, 0.0};
};

/// Keeps each point with probability (m − rank)/m, rank 0 being nearest to a
/// random viewpoint; always keeps at least one point.
inline PointCloud view_biased_thin(const PointCloud& cloud, Rng& rng) {
  const Point3 view = random_unit_direction(rng);
  const std::size_t m = cloud.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> depth(m);
  for (std::size_t i = 0; i < m; ++i)
    depth[i] = -(cloud[i][0] * view[0] + cloud[i][1] * view[1] + cloud[i][2] * view[2]);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return depth[a] < depth[b]; });
  std::vector<std::size_t> rank(m);
  for (std::size_t r = 0; r < m; ++r) rank[order[r]] = r;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < m; ++i)
    if (rng.uniform() < static_cast<double>(m - rank[i]) / static_cast<double>(m)) kept.push_back(i);
  if (kept.empty()) kept.push_back(order.front());
  return cloud.select(kept);
}

/// Occluding crop, view-biased thinning, Gaussian noise, then a rigid
/// translation, in that order.
inline DomainSample apply_domain(const PointCloud& cloud, const DomainRecipe& recipe, Rng& rng) {
  recipe.validate();
  PointCloud out = cloud;
  if (recipe.completeness == Completeness::Occluded)
    out = crop_retain(out, recipe.retain.draw(rng), rng).cloud;
  if (recipe.density == DensityProfile::ViewBiased) out = view_biased_thin(out, rng);
  if (recipe.noise_sigma > 0.0) {
    std::vector<Point3> pts(out.points());
    for (auto& p : pts)
      for (auto& v : p) v += recipe.noise_sigma * rng.normal();
    out = PointCloud(std::move(pts));
  }
  Point3 shift{0.0, 0.0, 0.0};
  if (recipe.shift.hi > 0.0) {
    const double mag = recipe.shift.draw(rng);
    const Point3 dir = random_unit_direction(rng);
    for (int a = 0; a < 3; ++a) shift[a] = mag * dir[a];
    out = out.translated(shift);
  }
  if (out.size() < 2) throw ValueError("apply_domain: degenerate result");
  return {std::move(out), shift};
}

// ---------------------------------------------------------------------------
// Cloud I/O

inline void write_cloud(std::ostream& out, const PointCloud& cloud) {
  out << "pcuda v1 " << cloud.size() << '\n';
  char buf[128];
  for (const auto& p : cloud) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    out << buf;
  }
}

inline void write_cloud(const std::string& path, const PointCloud& cloud) {
  auto out = textio::open_out(path);
  write_cloud(out, cloud);
  if (!out) throw Error("failed writing cloud '" + path + "'");
}

inline PointCloud read_cloud(std::istream& in, const std::string& source = "<cloud>") {
  textio::LineReader r(in, source);
  const std::string head = r.expect("header 'pcuda v1 <m>'");
  const auto tok = textio::split(head);
  if (tok.size() != 3 || tok[0] != "pcuda" || tok[1] != "v1") r.fail("expected header 'pcuda v1 <m>'");
  const auto m = static_cast<std::size_t>(r.to_uint(tok[2]));
  if (m == 0) r.fail("point count must be positive");
  std::vector<Point3> pts;
  pts.reserve(m);
  std::string line;
  while (r.next(line)) {
    const auto t = textio::split(line);
    if (t.empty()) continue;
    if (pts.size() == m) r.fail("more points than the header count " + std::to_string(m));
    if (t.size() != 3) r.fail("expected 3 coordinates, found " + std::to_string(t.size()));
    Point3 p;
    for (int a = 0; a < 3; ++a) {
      p[a] = r.to_double(t[a]);
      if (!std::isfinite(p[a])) r.fail("non-finite coordinate");
    }
    pts.push_back(p);
  }
  if (pts.size() != m)
    r.fail("header declares " + std::to_string(m) + " points but file has " + std::to_string(pts.size()),
           1);
  return PointCloud(std::move(pts));
}

inline PointCloud read_cloud(const std::string& path) {
  auto in = textio::open_in(path);
  return read_cloud(in, path);
}

// ---------------------------------------------------------------------------
// Manifest

enum class Domain { Source, Target };
enum class Split { Train, Test };

inline const char* domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }
inline const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::size_t label = 0;
  Domain domain = Domain::Source;
  Split split = Split::Train;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::size_t num_classes = 0;
  std::size_t model_points = 0;
  std::string source_recipe;
  std::string target_recipe;
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // not serialized

  std::vector<ManifestEntry> select(Domain d, Split s) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.domain == d && e.split == s) out.push_back(e);
    return out;
  }

  std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }
};

inline void write_manifest(std::ostream& out, const DatasetManifest& m) {
  out << "pcuda-manifest v1\n";
  out << "seed " << m.seed << '\n';
  out << "classes " << m.num_classes << '\n';
  out << "model_points " << m.model_points << '\n';
  out << "recipe source " << m.source_recipe << '\n';
  out << "recipe target " << m.target_recipe << '\n';
  for (Domain d : {Domain::Source, Domain::Target})
    for (Split s : {Split::Train, Split::Test}) {
      std::vector<std::size_t> counts(m.num_classes, 0);
      for (const auto& e : m.entries)
        if (e.domain == d && e.split == s) ++counts.at(e.label);
      out << "class-counts " << domain_name(d) << ' ' << split_name(s);
      for (auto c : counts) out << ' ' << c;
      out << '\n';
    }
  out << "records " << m.entries.size() << '\n';
  for (const auto& e : m.entries)
    out << e.path << ' ' << e.label << ' ' << domain_name(e.domain) << ' ' << split_name(e.split) << '\n';
}

inline DatasetManifest read_manifest(std::istream& in, const std::string& source = "<manifest>") {
  textio::LineReader r(in, source);
  DatasetManifest m;
  if (r.expect("header") != "pcuda-manifest v1") r.fail("not a pcuda v1 manifest");
  auto keyed = [&](const char* key) {
    const std::string line = r.expect(key);
    if (line.rfind(std::string(key) + " ", 0) != 0) r.fail(std::string("expected '") + key + "'");
    return line.substr(std::string(key).size() + 1);
  };
  m.seed = r.to_uint(keyed("seed"));
  m.num_classes = static_cast<std::size_t>(r.to_uint(keyed("classes")));
  m.model_points = static_cast<std::size_t>(r.to_uint(keyed("model_points")));
  m.source_recipe = keyed("recipe source");
  m.target_recipe = keyed("recipe target");
  for (int i = 0; i < 4; ++i) keyed("class-counts");
  const auto n = static_cast<std::size_t>(r.to_uint(keyed("records")));
  std::set<std::string> paths;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string line = r.expect("record");
    const auto t = textio::split(line);
    if (t.size() != 4) r.fail("record needs 'path class domain split'");
    ManifestEntry e;
    e.path = std::string(t[0]);
    e.label = static_cast<std::size_t>(r.to_uint(t[1]));
    if (e.label >= m.num_classes) r.fail("class id " + std::to_string(e.label) + " out of range");
    if (t[2] == "source") e.domain = Domain::Source;
    else if (t[2] == "target") e.domain = Domain::Target;
    else r.fail("unknown domain '" + std::string(t[2]) + "'");
    if (t[3] == "train") e.split = Split::Train;
    else if (t[3] == "test") e.split = Split::Test;
    else r.fail("unknown split '" + std::string(t[3]) + "'");
    if (!paths.insert(e.path).second) r.fail("duplicate path '" + e.path + "'");
    m.entries.push_back(std::move(e));
  }
  std::string extra;
  while (r.next(extra))
    if (!textio::split(extra).empty()) r.fail("trailing content after records");
  return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
  auto in = textio::open_in(path);
  DatasetManifest m = read_manifest(in, path);
  m.base_dir = std::filesystem::path(path).parent_path();
  return m;
}

// ---------------------------------------------------------------------------
// Dataset generation

struct DatasetConfig {
  std::string out_dir = "data";
  std::uint64_t seed = 1;
  std::size_t num_classes = 4;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t model_points = 256;
  std::size_t target_raw_points = 2048;
  DomainRecipe source = DomainRecipe::source_default();
  DomainRecipe target = DomainRecipe::target_default();
};

/// One generated cloud; the seed stream depends only on its coordinates in
/// the (domain, split, class, index) grid.
inline PointCloud generate_sample(const DatasetConfig& cfg, const ShapeClass& cls, Domain d, Split s,
                                  std::size_t index) {
  std::uint64_t k = mix_seed(cfg.seed, d == Domain::Source ? 0x534f55ULL : 0x544152ULL);
  k = mix_seed(k, s == Split::Train ? 1 : 2);
  k = mix_seed(k, cls.id);
  Rng rng(mix_seed(k, index));
  const DomainRecipe& recipe = d == Domain::Source ? cfg.source : cfg.target;
  const bool identity = recipe.completeness == Completeness::Complete && recipe.noise_sigma == 0.0 &&
                        recipe.shift.hi == 0.0 && recipe.density == DensityProfile::Uniform;
  if (identity) return generate_shape(cls, cfg.model_points, rng);
  const PointCloud base = generate_shape(cls, std::max<std::size_t>(cfg.target_raw_points, 64), rng);
  return resample_to(apply_domain(base, recipe, rng).cloud, cfg.model_points, rng);
}

/// Generates both domains, writes every cloud and `manifest.txt` under
/// cfg.out_dir, and returns the manifest.
inline DatasetManifest build_dataset(const DatasetConfig& cfg) {
  if (cfg.train_per_class == 0 || cfg.test_per_class == 0)
    throw ValueError("build_dataset: per-class counts must be positive");
  cfg.source.validate();
  cfg.target.validate();
  namespace fs = std::filesystem;
  const auto classes = default_shape_classes(cfg.num_classes);
  DatasetManifest m;
  m.seed = cfg.seed;
  m.num_classes = cfg.num_classes;
  m.model_points = cfg.model_points;
  m.source_recipe = cfg.source.describe();
  m.target_recipe = cfg.target.describe();
  m.base_dir = cfg.out_dir;
  for (Domain d : {Domain::Source, Domain::Target})
    for (Split s : {Split::Train, Split::Test}) {
      const fs::path dir = fs::path(cfg.out_dir) / domain_name(d) / split_name(s);
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
      const std::size_t per = s == Split::Train ? cfg.train_per_class : cfg.test_per_class;
      for (std::size_t i = 0; i < per; ++i)
        for (const auto& cls : classes) {
          char name[64];
          std::snprintf(name, sizeof name, "c%zu_%05zu.pts", cls.id, i);
          const std::string rel = (fs::path(domain_name(d)) / split_name(s) / name).generic_string();
          write_cloud((fs::path(cfg.out_dir) / rel).string(), generate_sample(cfg, cls, d, s, i));
          m.entries.push_back({rel, cls.id, d, s});
        }
    }
  auto out = textio::open_out((fs::path(cfg.out_dir) / "manifest.txt").string());
  write_manifest(out, m);
  if (!out) throw Error("failed writing manifest");
  return m;
}

}  // namespace pcuda
