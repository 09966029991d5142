// pcuda command-line front end.
//
//   pcuda generate-data <config>
//   pcuda train <config>
//   pcuda eval <checkpoint> <manifest> [--domain target] [--split test] [--out DIR]
//   pcuda ablate <config>
//   pcuda augment-preview <cloud> <policy> [--seed N] [--out PREFIX]
//   pcuda project <checkpoint> <manifest> [--split test] [--out FILE]

#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "pcuda/ablation.hpp"
#include "pcuda/augment.hpp"
#include "pcuda/checkpoint.hpp"
#include "pcuda/config.hpp"
#include "pcuda/dataio.hpp"
#include "pcuda/metrics.hpp"
#include "pcuda/projection.hpp"
#include "pcuda/trainer.hpp"

namespace fs = std::filesystem;
using namespace pcuda;

namespace {

Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw ValueError("domain must be 'source' or 'target', got '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ValueError("split must be 'train' or 'test', got '" + s + "'");
}

int generate_data(const std::string& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  const DatasetManifest m = build_dataset(cfg.data);
  std::cout << "wrote " << m.entries.size() << " clouds to " << cfg.data.out_dir << '\n';
  for (Domain d : {Domain::Source, Domain::Target})
    for (Split s : {Split::Train, Split::Test})
      std::cout << "  " << domain_name(d) << '/' << split_name(s) << ": " << m.select(d, s).size() << '\n';
  std::cout << "manifest: " << (fs::path(cfg.data.out_dir) / "manifest.txt").string() << '\n';
  return 0;
}

int train(const std::string& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  cfg.validate_paths();
  const ExperimentData data = load_experiment_data(load_manifest(cfg.manifest));
  std::vector<AblationRow> rows;
  for (auto seed : cfg.seeds) {
    TrainingOutput out{(fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed))).string(),
                       cfg.training.log_progress ? &std::cerr : nullptr};
    const auto run = run_training(cfg, data, seed, out);
    std::cout << "seed " << seed << ": target test accuracy " << std::fixed << std::setprecision(4)
              << run.report.accuracy() << " (" << out.dir << ")\n";
    rows.push_back({cfg.name, seed, run.report.config_hash, run.report.accuracy()});
  }
  {
    auto out = textio::open_out((fs::path(cfg.output_dir) / "runs.csv").string());
    write_ablation_rows(out, rows);
  }
  const auto s = summarize(rows).front();
  std::cout << "mean " << s.mean << " +/- " << s.sem << " over " << s.runs << " seed(s)\n";
  return 0;
}

int eval(const std::string& ckpt, const std::string& manifest, const std::string& domain, const std::string& split,
         const std::string& out_dir) {
  const ModelParams params = load_checkpoint(ckpt);
  const DatasetManifest m = load_manifest(manifest);
  if (m.num_classes != params.config().num_classes)
    throw ValueError("checkpoint has " + std::to_string(params.config().num_classes) + " classes, manifest has " +
                     std::to_string(m.num_classes));
  const DomainData data = load_split(m, parse_domain(domain), parse_split(split));
  if (data.size() == 0) throw ValueError("manifest has no " + domain + "/" + split + " samples");
  MetricsReport r;
  r.name = "eval " + domain + "/" + split;
  r.confusion = evaluate(params, data);
  write_report(out_dir, r);
  {
    auto out = textio::open_out((fs::path(out_dir) / "metrics.csv").string());
    out << "class,count,accuracy\n";
    const auto per = r.confusion.per_class_accuracy();
    for (std::size_t k = 0; k < per.size(); ++k)
      out << k << ',' << r.confusion.row_total(k) << ',' << textio::format_double(per[k]) << '\n';
    out << "all," << r.confusion.total() << ',' << textio::format_double(r.accuracy()) << '\n';
  }
  std::cout << domain << '/' << split << " accuracy " << std::fixed << std::setprecision(4) << r.accuracy() << " ("
            << r.confusion.trace() << '/' << r.confusion.total() << "), reports in " << out_dir << '\n';
  return 0;
}

int ablate(const std::string& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  cfg.validate_paths();
  const ExperimentData data = load_experiment_data(load_manifest(cfg.manifest));
  const auto result = run_ablation(cfg, data, cfg.output_dir, cfg.training.log_progress ? &std::cerr : nullptr);
  std::cout << std::left << std::setw(20) << "variant" << std::right << std::setw(6) << "runs" << std::setw(10)
            << "mean" << std::setw(10) << "sem" << '\n';
  for (const auto& s : result.summary)
    std::cout << std::left << std::setw(20) << s.variant << std::right << std::setw(6) << s.runs << std::fixed
              << std::setprecision(4) << std::setw(10) << s.mean << std::setw(10) << s.sem << '\n';
  std::cout << "tables in " << cfg.output_dir << '\n';
  return 0;
}

AugmentPolicy load_policy(const std::string& policy) {
  if (policy == "default") return {};
  std::ifstream in(policy);
  if (!in) throw ConfigError("", "cannot open policy '" + policy + "'");
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(policy, e.what());
  }
  Json doc{{"augment", j}};
  if (j.is_object() && j.contains("model_points")) {
    doc["data"] = {{"model_points", j["model_points"]}};
    doc["augment"].erase("model_points");
  }
  return config_from_json(doc).augment;
}

int augment_preview(const std::string& cloud_path, const std::string& policy_path, std::uint64_t seed,
                    const std::string& prefix) {
  const PointCloud cloud = read_cloud(cloud_path);
  const AugmentPolicy policy = load_policy(policy_path);
  Rng rng(seed);
  const PointCloud mixed = detail::mix_stage(cloud, policy, rng);
  const auto weak = detail::ops_stage(mixed, policy, Strength::Weak, rng);
  const auto strong = detail::ops_stage(mixed, policy, Strength::Strong, rng);
  const auto moved = make_translation_sample(cloud, TranslationSpec{}, rng);
  write_cloud(prefix + "_mixed.pts", mixed);
  write_cloud(prefix + "_weak.pts", weak.cloud);
  write_cloud(prefix + "_strong.pts", strong.cloud);
  write_cloud(prefix + "_translated.pts", moved.cloud);
  std::cout << "input      " << cloud.size() << " points\n"
            << "mixed      " << mixed.size() << " points\n"
            << "weak   (" << ops_code(policy.weak_ops) << ") " << weak.points_before_resample << " -> "
            << weak.cloud.size() << " points\n"
            << "strong (" << ops_code(policy.strong_ops) << ") " << strong.points_before_resample << " -> "
            << strong.cloud.size() << " points\n"
            << "translated offsets";
  for (std::size_t a = 0; a < moved.offsets.size(); ++a)
    std::cout << ' ' << moved.offsets[a] << " (class " << moved.labels[a] << ')';
  std::cout << "\nwrote " << prefix << "_{mixed,weak,strong,translated}.pts\n";
  return 0;
}

int project(const std::string& ckpt, const std::string& manifest, const std::string& split, const std::string& out) {
  const ModelParams params = load_checkpoint(ckpt);
  const DatasetManifest m = load_manifest(manifest);
  std::vector<PointCloud> clouds;
  std::vector<ProjectedSample> rows;
  for (Domain d : {Domain::Source, Domain::Target}) {
    DomainData part = load_split(m, d, parse_split(split));
    for (std::size_t i = 0; i < part.size(); ++i) {
      clouds.push_back(std::move(part.clouds[i]));
      rows.push_back({domain_name(d), part.labels[i]});
    }
  }
  const PcaResult r = pca2(encoder_features(params, clouds));
  {
    auto file = textio::open_out(out);
    write_projection_csv(file, r, rows);
  }
  std::cout << "projected " << rows.size() << " samples; explained variance " << r.explained(0) << ", "
            << r.explained(1) << " of " << r.total_variance << "\nwrote " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 1 << 29);
#endif
  CLI::App app{"Point-cloud domain adaptation with translation and relational self-supervision"};
  app.require_subcommand(1);

  std::string config, ckpt, manifest, cloud, policy, domain = "target", split = "test", out;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("generate-data", "Generate the synthetic source/target dataset");
  gen->add_option("config", config, "Experiment config (JSON)")->required();

  auto* tr = app.add_subcommand("train", "Train one model per configured seed");
  tr->add_option("config", config, "Experiment config (JSON)")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one manifest split");
  ev->add_option("checkpoint", ckpt, "Model checkpoint")->required();
  ev->add_option("manifest", manifest, "Dataset manifest")->required();
  ev->add_option("--domain", domain, "source or target")->capture_default_str();
  ev->add_option("--split", split, "train or test")->capture_default_str();
  ev->add_option("--out", out, "Report directory (default: eval next to the checkpoint)");

  auto* ab = app.add_subcommand("ablate", "Run the ablation grid over all seeds");
  ab->add_option("config", config, "Experiment config (JSON)")->required();

  auto* ap = app.add_subcommand("augment-preview", "Write the augmented views of one cloud");
  ap->add_option("cloud", cloud, "Input cloud (.pts)")->required();
  ap->add_option("policy", policy, "Augmentation policy (JSON) or 'default'")->required();
  ap->add_option("--seed", seed, "Random seed")->capture_default_str();
  ap->add_option("--out", out, "Output prefix (default: input path without extension)");

  auto* pr = app.add_subcommand("project", "Export a 2-D PCA projection of encoder features");
  pr->add_option("checkpoint", ckpt, "Model checkpoint")->required();
  pr->add_option("manifest", manifest, "Dataset manifest")->required();
  pr->add_option("--split", split, "train or test")->capture_default_str();
  pr->add_option("--out", out, "Output CSV (default: projection.csv next to the checkpoint)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return generate_data(config);
    if (*tr) return train(config);
    if (*ev) {
      if (out.empty()) out = (fs::path(ckpt).parent_path() / "eval").string();
      return eval(ckpt, manifest, domain, split, out);
    }
    if (*ab) return ablate(config);
    if (*ap) {
      if (out.empty()) out = (fs::path(cloud).parent_path() / fs::path(cloud).stem()).string();
      return augment_preview(cloud, policy, seed, out);
    }
    if (*pr) {
      if (out.empty()) out = (fs::path(ckpt).parent_path() / "projection.csv").string();
      return project(ckpt, manifest, split, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
