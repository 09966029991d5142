#pragma once

// Ablation grid: named variants derived from one base configuration, each
// trained over the same seed list.
//
//   no-adapt           source classification only, same total epochs
//   translation-only   translation pretext (+ self-training if enabled)
//   relational-only    relational consistency (+ self-training if enabled)
//   full               both modules (+ self-training if enabled)
//   axes-XY|XZ|YZ|XYZ  full, translating along the named axes
//   aug-<weak>-<strong> full with the given op codes, e.g. aug-J-JC
//   no-mix             full without the FPS mixing stage

#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pcuda/config.hpp"
#include "pcuda/metrics.hpp"
#include "pcuda/textio.hpp"
#include "pcuda/trainer.hpp"

namespace pcuda {

inline ExperimentConfig ablation_variant(const ExperimentConfig& base, const std::string& variant) {
  ExperimentConfig c = base;
  c.name = variant;
  auto modules = [&](bool translation, bool relational) {
    c.flags.translation = translation;
    c.flags.relational = relational;
  };
  if (variant == "no-adapt") {
    modules(false, false);
    if (c.flags.self_training) c.training.adaptation_epochs = c.training.total_epochs();
    c.flags.self_training = false;
  } else if (variant == "translation-only") {
    modules(true, false);
  } else if (variant == "relational-only") {
    modules(false, true);
  } else if (variant == "full") {
    modules(true, true);
  } else if (variant.starts_with("axes-")) {
    modules(true, true);
    c.translation.axes = detail::parse_axes(variant.substr(5), "ablation variant '" + variant + "'");
  } else if (variant.starts_with("aug-")) {
    modules(true, true);
    const auto dash = variant.find('-', 4);
    if (dash == std::string::npos) throw ConfigError("ablation", "variant '" + variant + "' needs aug-<weak>-<strong>");
    try {
      c.augment.weak_ops = parse_ops(variant.substr(4, dash - 4));
      c.augment.strong_ops = parse_ops(variant.substr(dash + 1));
    } catch (const ValueError& e) {
      throw ConfigError("ablation", "variant '" + variant + "': " + e.what());
    }
  } else if (variant == "no-mix") {
    modules(true, true);
    c.augment.use_fps_mix = false;
  } else {
    throw ConfigError("ablation", "unknown variant '" + variant + "'");
  }
  c.validate();
  return c;
}

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::string config_hash;
  double accuracy = 0.0;
};

struct AblationSummary {
  std::string variant;
  std::size_t runs = 0;
  double mean = 0.0;
  double sem = 0.0;  // sample standard deviation / sqrt(runs); 0 for a single run
};

/// Per-variant mean and standard error, in first-appearance order.
inline std::vector<AblationSummary> summarize(const std::vector<AblationRow>& rows) {
  std::vector<AblationSummary> out;
  std::map<std::string, std::vector<double>> acc;
  for (const auto& r : rows) {
    if (!acc.contains(r.variant)) out.push_back({r.variant});
    acc[r.variant].push_back(r.accuracy);
  }
  for (auto& s : out) {
    const auto& v = acc[s.variant];
    s.runs = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.sem = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    }
  }
  return out;
}

inline void write_ablation_rows(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,seed,config_hash,accuracy\n";
  for (const auto& r : rows)
    out << r.variant << ',' << r.seed << ',' << r.config_hash << ',' << textio::format_double(r.accuracy) << '\n';
}

inline void write_ablation_summary(std::ostream& out, const std::vector<AblationSummary>& rows) {
  out << "variant,runs,mean_accuracy,sem\n";
  for (const auto& r : rows)
    out << r.variant << ',' << r.runs << ',' << textio::format_double(r.mean) << ',' << textio::format_double(r.sem)
        << '\n';
}

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;
  std::map<std::string, std::vector<MetricsReport>> reports;
};

/// Runs every variant for every seed. When `out_dir` is non-empty, each run
/// writes into <out_dir>/<variant>/seed_<seed>/ and the tables go to
/// ablation_runs.csv and ablation_summary.csv.
inline AblationResult run_ablation(const ExperimentConfig& base, const ExperimentData& data,
                                   const std::string& out_dir = {}, std::ostream* log = nullptr) {
  if (base.ablation_variants.empty()) throw ConfigError("ablation.variants", "no variants listed");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : base.ablation_variants) configs.push_back(ablation_variant(base, v));
  AblationResult result;
  namespace fs = std::filesystem;
  for (const auto& cfg : configs)
    for (auto seed : base.seeds) {
      TrainingOutput output;
      if (!out_dir.empty()) output.dir = (fs::path(out_dir) / cfg.name / ("seed_" + std::to_string(seed))).string();
      if (log) *log << "== " << cfg.name << " seed " << seed << '\n';
      auto run = run_training(cfg, data, seed, output);
      if (log)
        *log << "   accuracy " << run.report.accuracy() << " (" << run.report.wall_seconds << " s)\n";
      result.rows.push_back({cfg.name, seed, run.report.config_hash, run.report.accuracy()});
      result.reports[cfg.name].push_back(std::move(run.report));
    }
  result.summary = summarize(result.rows);
  if (!out_dir.empty()) {
    {
      auto out = textio::open_out((fs::path(out_dir) / "ablation_runs.csv").string());
      write_ablation_rows(out, result.rows);
    }
    auto out = textio::open_out((fs::path(out_dir) / "ablation_summary.csv").string());
    write_ablation_summary(out, result.summary);
  }
  return result;
}

}  // namespace pcuda
