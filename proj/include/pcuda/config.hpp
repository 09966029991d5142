#pragma once

// Experiment configuration: one JSON document with nested sections.
//
//   {
//     "name": "full",
//     "manifest": "data/manifest.txt",
//     "output_dir": "runs/full",
//     "seeds": [1, 2, 3],
//     "data":        { "out_dir", "seed", "num_classes", "train_per_class", ... },
//     "model":       { "hidden", "feature_dim", "edge_conv", "edge_k", "projection_dim" },
//     "augment":     { "weak_ops", "strong_ops", "jitter_sigma", ... },
//     "translation": { "axes", "thresholds", "cap" },
//     "relational":  { "bank_capacity", "lambda", "temperatures": {...}, "ema_teacher", ... },
//     "loss":        { "alpha", "beta", "eta", "gamma_schedule" },
//     "training":    { "batch_size", "adaptation_epochs", "selftrain_epochs", "rounds", ... },
//     "flags":       { "translation", "relational", "self_training" },
//     "ablation":    { "variants": [...] }
//   }
//
// Every key is optional; unknown keys are rejected with their dotted path.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcuda/augment.hpp"
#include "pcuda/dataio.hpp"
#include "pcuda/error.hpp"
#include "pcuda/model.hpp"
#include "pcuda/objectives.hpp"
#include "pcuda/relational.hpp"

namespace pcuda {

using Json = nlohmann::ordered_json;

class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what) {}
};

struct ModuleFlags {
  bool translation = true;
  bool relational = true;
  bool self_training = true;

  friend bool operator==(const ModuleFlags&, const ModuleFlags&) = default;
};

struct TrainingOptions {
  std::size_t batch_size = 32;
  std::size_t adaptation_epochs = 120;
  std::size_t selftrain_epochs = 80;
  std::size_t rounds = 3;
  double lr_max = 1e-3;
  double lr_min = 0.0;
  double weight_decay = 5e-5;
  std::size_t eval_batch = 64;
  bool log_progress = true;

  std::size_t total_epochs() const { return adaptation_epochs + selftrain_epochs; }
};

struct RelationalOptions {
  std::size_t bank_capacity = 4096;
  TemperatureSet temperatures;
  bool ema_teacher = false;
  double ema_momentum = 0.99;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string manifest = "data/manifest.txt";
  std::string output_dir = "runs/experiment";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  DatasetConfig data;
  EncoderConfig model;
  AugmentPolicy augment;
  TranslationSpec translation;
  RelationalOptions relational;
  LossWeights loss;
  std::vector<double> gamma_schedule{0.25, 0.5, 1.0};
  TrainingOptions training;
  ModuleFlags flags;
  std::vector<std::string> ablation_variants{"no-adapt", "translation-only", "relational-only", "full"};

  /// Internal consistency; does not touch the filesystem.
  void validate() const {
    if (seeds.empty()) throw ConfigError("seeds", "at least one seed required");
    try {
      model.validate();
    } catch (const ValueError& e) {
      throw ConfigError("model", e.what());
    }
    try {
      augment.validate();
    } catch (const ValueError& e) {
      throw ConfigError("augment", e.what());
    }
    try {
      translation.validate();
    } catch (const ValueError& e) {
      throw ConfigError("translation", e.what());
    }
    try {
      relational.temperatures.validate();
    } catch (const ValueError& e) {
      throw ConfigError("relational.temperatures", e.what());
    }
    try {
      loss.validate();
    } catch (const ValueError& e) {
      throw ConfigError("loss", e.what());
    }
    if (relational.bank_capacity == 0) throw ConfigError("relational.bank_capacity", "must be positive");
    if (!(relational.ema_momentum >= 0.0 && relational.ema_momentum < 1.0))
      throw ConfigError("relational.ema_momentum", "must lie in [0, 1)");
    if (training.batch_size == 0) throw ConfigError("training.batch_size", "must be positive");
    if (training.eval_batch == 0) throw ConfigError("training.eval_batch", "must be positive");
    if (training.total_epochs() == 0) throw ConfigError("training", "total epochs must be positive");
    if (!(training.lr_max > 0.0) || training.lr_min < 0.0 || training.lr_min > training.lr_max)
      throw ConfigError("training", "need 0 <= lr_min <= lr_max and lr_max > 0");
    if (training.weight_decay < 0.0) throw ConfigError("training.weight_decay", "must be non-negative");
    if (!flags.self_training && training.adaptation_epochs == 0)
      throw ConfigError("training.adaptation_epochs", "must be positive when self-training is off");
    if (flags.self_training) {
      if (training.selftrain_epochs == 0)
        throw ConfigError("training.selftrain_epochs", "self-training needs at least one epoch");
      if (training.rounds == 0 || training.rounds > training.selftrain_epochs)
        throw ConfigError("training.rounds", "must lie in 1..selftrain_epochs");
      if (gamma_schedule.size() != training.rounds)
        throw ConfigError("loss.gamma_schedule", "needs one value per self-training round (" +
                                                     std::to_string(training.rounds) + ")");
      for (double g : gamma_schedule)
        if (!(g >= 0.0)) throw ConfigError("loss.gamma_schedule", "values must be non-negative");
    }
    if (model.num_classes != data.num_classes)
      throw ConfigError("model.num_classes", "must equal data.num_classes");
    if (augment.model_points != data.model_points)
      throw ConfigError("augment.model_points", "must equal data.model_points");
  }

  /// Checks that files the run reads are present.
  void validate_paths() const {
    if (!std::filesystem::is_regular_file(manifest)) throw ConfigError("manifest", "no such file '" + manifest + "'");
  }
};

namespace detail {

/// Reads keys from one JSON object and rejects anything not consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(sub(key), std::string("wrong type (") + e.what() + ")");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  ObjectReader child(const char* key) {
    seen_.insert(key);
    static const Json empty = Json::object();
    return ObjectReader(j_.contains(key) ? j_.at(key) : empty, sub(key));
  }

  std::string sub(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError(sub(it.key().c_str()), "unknown key");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string axes_code(const std::vector<Axis>& axes) {
  std::string s;
  for (Axis a : axes) s += axis_name(a);
  return s;
}

inline std::vector<Axis> parse_axes(const std::string& code, const std::string& path) {
  std::vector<Axis> axes;
  try {
    for (char c : code) axes.push_back(parse_axis(c));
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
  return axes;
}

inline const char* completeness_name(Completeness c) {
  return c == Completeness::Occluded ? "occluded" : "complete";
}

inline const char* density_name(DensityProfile d) {
  return d == DensityProfile::ViewBiased ? "view-biased" : "uniform";
}

inline DomainRecipe read_recipe(ObjectReader r, DomainRecipe out) {
  std::string completeness = completeness_name(out.completeness);
  std::string density = density_name(out.density);
  std::vector<double> retain{out.retain.lo, out.retain.hi}, shift{out.shift.lo, out.shift.hi};
  r.get("completeness", completeness);
  r.get("density", density);
  r.get("retain", retain);
  r.get("noise_sigma", out.noise_sigma);
  r.get("shift", shift);
  r.finish();
  if (completeness == "complete") out.completeness = Completeness::Complete;
  else if (completeness == "occluded") out.completeness = Completeness::Occluded;
  else throw ConfigError(r.sub("completeness"), "expected 'complete' or 'occluded'");
  if (density == "uniform") out.density = DensityProfile::Uniform;
  else if (density == "view-biased") out.density = DensityProfile::ViewBiased;
  else throw ConfigError(r.sub("density"), "expected 'uniform' or 'view-biased'");
  if (retain.size() != 2) throw ConfigError(r.sub("retain"), "expected [lo, hi]");
  if (shift.size() != 2) throw ConfigError(r.sub("shift"), "expected [lo, hi]");
  out.retain = {retain[0], retain[1]};
  out.shift = {shift[0], shift[1]};
  return out;
}

inline Json recipe_json(const DomainRecipe& r) {
  return Json{{"completeness", completeness_name(r.completeness)},
              {"density", density_name(r.density)},
              {"retain", {r.retain.lo, r.retain.hi}},
              {"noise_sigma", r.noise_sigma},
              {"shift", {r.shift.lo, r.shift.hi}}};
}

}  // namespace detail

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  detail::ObjectReader root(j, "");
  root.get("name", c.name);
  root.get("manifest", c.manifest);
  root.get("output_dir", c.output_dir);
  root.get("seeds", c.seeds);

  {
    auto r = root.child("data");
    r.get("out_dir", c.data.out_dir);
    r.get("seed", c.data.seed);
    r.get("num_classes", c.data.num_classes);
    r.get("train_per_class", c.data.train_per_class);
    r.get("test_per_class", c.data.test_per_class);
    r.get("model_points", c.data.model_points);
    r.get("target_raw_points", c.data.target_raw_points);
    c.data.source = detail::read_recipe(r.child("source"), c.data.source);
    c.data.target = detail::read_recipe(r.child("target"), c.data.target);
    r.finish();
  }
  {
    auto r = root.child("model");
    r.get("hidden", c.model.hidden);
    r.get("feature_dim", c.model.feature_dim);
    r.get("edge_conv", c.model.edge_conv);
    r.get("edge_k", c.model.edge_k);
    r.get("projection_dim", c.model.projection_dim);
    r.finish();
    c.model.num_classes = c.data.num_classes;
  }
  {
    auto r = root.child("augment");
    std::string weak = ops_code(c.augment.weak_ops), strong = ops_code(c.augment.strong_ops);
    std::vector<double> wc{c.augment.weak_crop_lo, c.augment.weak_crop_hi};
    std::vector<double> sc{c.augment.strong_crop_lo, c.augment.strong_crop_hi};
    std::vector<double> scale{c.augment.scale_lo, c.augment.scale_hi};
    std::vector<double> mix{c.augment.mix_lo, c.augment.mix_hi};
    r.get("weak_ops", weak);
    r.get("strong_ops", strong);
    r.get("jitter_sigma", c.augment.jitter_sigma);
    r.get("jitter_clip", c.augment.jitter_clip);
    r.get("scale", scale);
    r.get("weak_crop", wc);
    r.get("strong_crop", sc);
    r.get("fps_mix", c.augment.use_fps_mix);
    r.get("mix_ratio", mix);
    r.get("light_sigma", c.augment.light_sigma);
    r.get("light_clip", c.augment.light_clip);
    r.finish();
    try {
      c.augment.weak_ops = parse_ops(weak);
      c.augment.strong_ops = parse_ops(strong);
    } catch (const ValueError& e) {
      throw ConfigError("augment", e.what());
    }
    auto pair = [&](const std::vector<double>& v, const char* key, double& lo, double& hi) {
      if (v.size() != 2) throw ConfigError(std::string("augment.") + key, "expected [lo, hi]");
      lo = v[0];
      hi = v[1];
    };
    pair(wc, "weak_crop", c.augment.weak_crop_lo, c.augment.weak_crop_hi);
    pair(sc, "strong_crop", c.augment.strong_crop_lo, c.augment.strong_crop_hi);
    pair(scale, "scale", c.augment.scale_lo, c.augment.scale_hi);
    pair(mix, "mix_ratio", c.augment.mix_lo, c.augment.mix_hi);
    c.augment.model_points = c.data.model_points;
  }
  {
    auto r = root.child("translation");
    std::string axes = detail::axes_code(c.translation.axes);
    r.get("axes", axes);
    r.get("thresholds", c.translation.thresholds);
    r.get("cap", c.translation.cap);
    r.finish();
    c.translation.axes = detail::parse_axes(axes, "translation.axes");
  }
  {
    auto r = root.child("relational");
    r.get("bank_capacity", c.relational.bank_capacity);
    r.get("lambda", c.loss.lambda);
    r.get("ema_teacher", c.relational.ema_teacher);
    r.get("ema_momentum", c.relational.ema_momentum);
    auto t = r.child("temperatures");
    t.get("target", c.relational.temperatures.target);
    t.get("weak_target", c.relational.temperatures.weak_target);
    t.get("weak_online", c.relational.temperatures.weak_online);
    t.get("strong", c.relational.temperatures.strong);
    t.finish();
    r.finish();
  }
  {
    auto r = root.child("loss");
    r.get("alpha", c.loss.alpha);
    r.get("beta", c.loss.beta);
    r.get("eta", c.loss.eta);
    r.get("gamma_schedule", c.gamma_schedule);
    r.finish();
  }
  {
    auto r = root.child("training");
    r.get("batch_size", c.training.batch_size);
    r.get("adaptation_epochs", c.training.adaptation_epochs);
    r.get("selftrain_epochs", c.training.selftrain_epochs);
    r.get("rounds", c.training.rounds);
    r.get("lr_max", c.training.lr_max);
    r.get("lr_min", c.training.lr_min);
    r.get("weight_decay", c.training.weight_decay);
    r.get("eval_batch", c.training.eval_batch);
    r.get("log_progress", c.training.log_progress);
    r.finish();
  }
  {
    auto r = root.child("flags");
    r.get("translation", c.flags.translation);
    r.get("relational", c.flags.relational);
    r.get("self_training", c.flags.self_training);
    r.finish();
  }
  {
    auto r = root.child("ablation");
    r.get("variants", c.ablation_variants);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

/// Full document with every field spelled out; parsing it back yields the
/// same configuration.
inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  j["manifest"] = c.manifest;
  j["output_dir"] = c.output_dir;
  j["seeds"] = c.seeds;
  j["data"] = {{"out_dir", c.data.out_dir},
               {"seed", c.data.seed},
               {"num_classes", c.data.num_classes},
               {"train_per_class", c.data.train_per_class},
               {"test_per_class", c.data.test_per_class},
               {"model_points", c.data.model_points},
               {"target_raw_points", c.data.target_raw_points},
               {"source", detail::recipe_json(c.data.source)},
               {"target", detail::recipe_json(c.data.target)}};
  j["model"] = {{"hidden", c.model.hidden},
                {"feature_dim", c.model.feature_dim},
                {"edge_conv", c.model.edge_conv},
                {"edge_k", c.model.edge_k},
                {"projection_dim", c.model.projection_dim}};
  j["augment"] = {{"weak_ops", ops_code(c.augment.weak_ops)},
                  {"strong_ops", ops_code(c.augment.strong_ops)},
                  {"jitter_sigma", c.augment.jitter_sigma},
                  {"jitter_clip", c.augment.jitter_clip},
                  {"scale", {c.augment.scale_lo, c.augment.scale_hi}},
                  {"weak_crop", {c.augment.weak_crop_lo, c.augment.weak_crop_hi}},
                  {"strong_crop", {c.augment.strong_crop_lo, c.augment.strong_crop_hi}},
                  {"fps_mix", c.augment.use_fps_mix},
                  {"mix_ratio", {c.augment.mix_lo, c.augment.mix_hi}},
                  {"light_sigma", c.augment.light_sigma},
                  {"light_clip", c.augment.light_clip}};
  j["translation"] = {{"axes", detail::axes_code(c.translation.axes)},
                      {"thresholds", c.translation.thresholds},
                      {"cap", c.translation.cap}};
  const auto& t = c.relational.temperatures;
  j["relational"] = {{"bank_capacity", c.relational.bank_capacity},
                     {"lambda", c.loss.lambda},
                     {"ema_teacher", c.relational.ema_teacher},
                     {"ema_momentum", c.relational.ema_momentum},
                     {"temperatures",
                      {{"target", t.target},
                       {"weak_target", t.weak_target},
                       {"weak_online", t.weak_online},
                       {"strong", t.strong}}}};
  j["loss"] = {{"alpha", c.loss.alpha},
               {"beta", c.loss.beta},
               {"eta", c.loss.eta},
               {"gamma_schedule", c.gamma_schedule}};
  j["training"] = {{"batch_size", c.training.batch_size},
                   {"adaptation_epochs", c.training.adaptation_epochs},
                   {"selftrain_epochs", c.training.selftrain_epochs},
                   {"rounds", c.training.rounds},
                   {"lr_max", c.training.lr_max},
                   {"lr_min", c.training.lr_min},
                   {"weight_decay", c.training.weight_decay},
                   {"eval_batch", c.training.eval_batch},
                   {"log_progress", c.training.log_progress}};
  j["flags"] = {{"translation", c.flags.translation},
                {"relational", c.flags.relational},
                {"self_training", c.flags.self_training}};
  j["ablation"] = {{"variants", c.ablation_variants}};
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, e.what());
  }
  return config_from_json(j);
}

/// FNV-1a over the canonical dump of everything that affects a training
/// run. Names, paths, seed lists, logging and the ablation grid are left
/// out so that identical hyperparameters hash identically.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  Json j = config_to_json(c);
  for (const char* k : {"name", "manifest", "output_dir", "seeds", "ablation"}) j.erase(k);
  j["data"].erase("out_dir");
  j["training"].erase("log_progress");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pcuda
