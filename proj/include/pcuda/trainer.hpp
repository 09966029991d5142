#pragma once

// Two-phase training loop. The adaptation phase minimizes
//   L_rm + α·L_trans + β·L_cls^s
// over paired source/target batches; the self-training phase regenerates
// pseudo-labels at each round boundary and adds η·L_cls^t. Every random draw
// comes from a stream keyed by (seed, epoch, step, domain, slot) so runs are
// reproducible regardless of how views are assembled.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pcuda/augment.hpp"
#include "pcuda/checkpoint.hpp"
#include "pcuda/config.hpp"
#include "pcuda/dataio.hpp"
#include "pcuda/metrics.hpp"
#include "pcuda/model.hpp"
#include "pcuda/objectives.hpp"
#include "pcuda/optim.hpp"
#include "pcuda/relational.hpp"

namespace pcuda {

struct DomainData {
  std::vector<PointCloud> clouds;
  std::vector<std::size_t> labels;
  std::vector<std::string> paths;

  std::size_t size() const { return clouds.size(); }
};

struct ExperimentData {
  std::size_t num_classes = 0;
  DomainData source_train, source_test, target_train, target_test;
};

inline DomainData load_split(const DatasetManifest& m, Domain d, Split s) {
  DomainData out;
  for (const auto& e : m.select(d, s)) {
    PointCloud c = read_cloud(m.resolve(e).string());
    if (m.model_points != 0 && c.size() != m.model_points)
      throw ValueError("'" + e.path + "' has " + std::to_string(c.size()) + " points, manifest declares " +
                       std::to_string(m.model_points));
    if (e.label >= m.num_classes)
      throw ValueError("'" + e.path + "' has class " + std::to_string(e.label) + " outside 0.." +
                       std::to_string(m.num_classes - 1));
    out.clouds.push_back(std::move(c));
    out.labels.push_back(e.label);
    out.paths.push_back(e.path);
  }
  return out;
}

inline ExperimentData load_experiment_data(const DatasetManifest& m) {
  ExperimentData d;
  d.num_classes = m.num_classes;
  d.source_train = load_split(m, Domain::Source, Split::Train);
  d.source_test = load_split(m, Domain::Source, Split::Test);
  d.target_train = load_split(m, Domain::Target, Split::Train);
  d.target_test = load_split(m, Domain::Target, Split::Test);
  if (d.source_train.size() == 0) throw ValueError("manifest has no source training samples");
  if (d.target_train.size() == 0) throw ValueError("manifest has no target training samples");
  if (d.target_test.size() == 0) throw ValueError("manifest has no target test samples");
  return d;
}

/// Class probabilities for every cloud, computed through the encoder and
/// semantic head only.
inline std::vector<double> predict_probabilities(const ModelParams& params, const std::vector<PointCloud>& clouds,
                                                 std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(clouds.size() * params.config().num_classes);
  for (std::size_t first = 0; first < clouds.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, clouds.size() - first);
    const CloudBatch batch = CloudBatch::from(std::span<const PointCloud>(clouds.data() + first, n));
    const Tensor p = predict(params, batch);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return out;
}

inline std::vector<std::size_t> argmax_rows(std::span<const double> probs, std::size_t classes) {
  std::vector<std::size_t> out(probs.size() / classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (probs[i * classes + c] > probs[i * classes + best]) best = c;
    out[i] = best;
  }
  return out;
}

inline ConfusionMatrix evaluate(const ModelParams& params, const DomainData& split, std::size_t batch_size = 64) {
  if (split.size() == 0) throw ValueError("evaluate: split is empty");
  const std::size_t classes = params.config().num_classes;
  for (auto y : split.labels)
    if (y >= classes)
      throw ValueError("evaluate: label " + std::to_string(y) + " but checkpoint has " + std::to_string(classes) +
                       " classes");
  const auto probs = predict_probabilities(params, split.clouds, batch_size);
  const auto pred = argmax_rows(probs, classes);
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < pred.size(); ++i) cm.add(split.labels[i], pred[i]);
  return cm;
}

struct TrainingResult {
  ModelParams params;
  MetricsReport report;
};

struct TrainingOutput {
  std::string dir;  // empty: nothing written during training
  std::ostream* log = nullptr;
};

namespace detail {

enum StreamTag : std::uint64_t {
  kInitStream = 0x696e6974,
  kShuffleStream = 0x73687566,
  kSampleStream = 0x73616d70,
};

/// First epoch (0-based) of each self-training round.
inline std::vector<std::size_t> round_starts(const TrainingOptions& t) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < t.rounds; ++r) out.push_back(t.adaptation_epochs + r * t.selftrain_epochs / t.rounds);
  return out;
}

inline void write_pseudo_labels(const std::string& path, const DomainData& data, const std::vector<PseudoLabel>& pl) {
  auto out = textio::open_out(path);
  out << "index,path,selected,label,confidence\n";
  for (std::size_t i = 0; i < pl.size(); ++i)
    out << i << ',' << data.paths[i] << ',' << (pl[i].label ? 1 : 0) << ','
        << (pl[i].label ? std::to_string(*pl[i].label) : std::string("-1")) << ','
        << textio::format_double(pl[i].confidence) << '\n';
}

inline void ema_update(ModelParams& teacher, const ModelParams& student, double momentum) {
  auto t = teacher.all();
  const auto s = student.all();
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto tv = t[i].mutable_values();
    const auto sv = s[i].values();
    for (std::size_t j = 0; j < tv.size(); ++j) tv[j] = momentum * tv[j] + (1.0 - momentum) * sv[j];
  }
}

}  // namespace detail

/// Trains one model for `seed` and evaluates it on the target test split.
inline TrainingResult run_training(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed,
                                   const TrainingOutput& output = {}) {
  cfg.validate();
  if (data.num_classes != cfg.model.num_classes)
    throw ValueError("dataset has " + std::to_string(data.num_classes) + " classes, config expects " +
                     std::to_string(cfg.model.num_classes));
  const auto started = std::chrono::steady_clock::now();
  const auto& tr = cfg.training;
  const auto& fl = cfg.flags;
  const std::size_t classes = cfg.model.num_classes;

  ModelParams params = ModelParams::init(cfg.model, mix_seed(seed, detail::kInitStream));
  std::optional<ModelParams> teacher;
  if (fl.relational && cfg.relational.ema_teacher) teacher = params.clone();
  Adam adam(params.all(), AdamOptions{tr.lr_max, tr.weight_decay});
  const std::size_t total_epochs = fl.self_training ? tr.total_epochs() : tr.adaptation_epochs;
  const LRSchedule schedule{tr.lr_max, tr.lr_min, static_cast<int>(total_epochs)};
  MemoryBank bank(cfg.relational.bank_capacity, cfg.model.projection_dim);

  const auto starts = detail::round_starts(tr);
  const std::size_t ns = data.source_train.size(), nt = data.target_train.size();
  const std::size_t batch = std::min({tr.batch_size, ns, nt});
  const std::size_t steps = std::max<std::size_t>(1, std::max(ns, nt) / batch);

  MetricsReport report;
  report.name = cfg.name;
  report.config_hash = hash_hex(config_hash(cfg));
  report.seed = seed;

  std::vector<PseudoLabel> pseudo;
  double gamma = 0.0;
  if (!output.dir.empty()) std::filesystem::create_directories(output.dir);

  for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
    const bool selftrain = fl.self_training && epoch >= tr.adaptation_epochs;
    const auto phase = selftrain ? TrainingPhase::SelfTraining : TrainingPhase::Adaptation;

    if (selftrain) {
      const auto it = std::find(starts.begin(), starts.end(), epoch);
      if (it != starts.end()) {
        const std::size_t round = static_cast<std::size_t>(it - starts.begin());
        gamma = cfg.gamma_schedule[round];
        const auto probs = predict_probabilities(params, data.target_train.clouds, tr.eval_batch);
        pseudo = select_pseudo_labels(probs, classes, gamma);
        RoundRecord rec{round + 1, epoch + 1, gamma, 0, pseudo.size(), 0.0};
        std::size_t correct = 0;
        for (std::size_t i = 0; i < pseudo.size(); ++i)
          if (pseudo[i].label) {
            ++rec.selected;
            if (*pseudo[i].label == data.target_train.labels[i]) ++correct;
          }
        rec.pseudo_accuracy = rec.selected == 0 ? 0.0 : static_cast<double>(correct) / rec.selected;
        report.rounds.push_back(rec);
        if (!output.dir.empty())
          detail::write_pseudo_labels(
              (std::filesystem::path(output.dir) / ("pseudo_labels_round" + std::to_string(round + 1) + ".csv"))
                  .string(),
              data.target_train, pseudo);
        if (output.log)
          *output.log << "  round " << rec.round << ": gamma=" << gamma << " selected " << rec.selected << "/"
                      << rec.candidates << " (pseudo-label accuracy " << rec.pseudo_accuracy << ")\n";
      }
    }

    const double lr = cosine_lr(schedule, static_cast<int>(epoch));
    adam.set_learning_rate(lr);

    std::vector<std::size_t> src_order(ns), tgt_order(nt);
    for (std::size_t i = 0; i < ns; ++i) src_order[i] = i;
    for (std::size_t i = 0; i < nt; ++i) tgt_order[i] = i;
    Rng shuffle_rng(mix_seed(mix_seed(seed, detail::kShuffleStream), epoch));
    shuffle_rng.shuffle(src_order);
    shuffle_rng.shuffle(tgt_order);

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.phase = selftrain ? "self-training" : "adaptation";
    rec.learning_rate = lr;

    for (std::size_t step = 0; step < steps; ++step) {
      try {
        std::vector<std::size_t> si(batch), ti(batch);
        for (std::size_t b = 0; b < batch; ++b) {
          si[b] = src_order[(step * batch + b) % ns];
          ti[b] = tgt_order[(step * batch + b) % nt];
        }

        // View layout: [S | T] originals, then [Sw | Tw], [Ss | Ts], [St | Tt].
        std::vector<PointCloud> clouds;
        std::vector<std::size_t> src_labels;
        std::vector<std::vector<int>> trans_labels(cfg.translation.axes.size());
        std::vector<PointCloud> weak, strong, moved;
        for (int dom = 0; dom < 2; ++dom)
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t idx = dom == 0 ? si[b] : ti[b];
            const PointCloud& c = dom == 0 ? data.source_train.clouds[idx] : data.target_train.clouds[idx];
            if (dom == 0) src_labels.push_back(data.source_train.labels[idx]);
            clouds.push_back(c);
            Rng rng(mix_seed(mix_seed(mix_seed(mix_seed(seed, detail::kSampleStream), epoch), step),
                             static_cast<std::uint64_t>(dom) * batch + b));
            if (fl.relational) {
              auto views = augment_views(c, cfg.augment, rng);
              weak.push_back(std::move(views.weak));
              strong.push_back(std::move(views.strong));
            }
            if (fl.translation) {
              auto t = make_translation_sample(c, cfg.translation, rng);
              for (std::size_t a = 0; a < t.labels.size(); ++a) trans_labels[a].push_back(t.labels[a]);
              moved.push_back(std::move(t.cloud));
            }
          }
        for (auto* group : {&weak, &strong, &moved})
          for (auto& c : *group) clouds.push_back(std::move(c));

        const std::size_t pair = 2 * batch;
        const Tensor feats = encode(params, CloudBatch::from(clouds));
        std::size_t offset = pair;
        Tensor f_orig = slice_rows(feats, 0, pair), f_weak, f_strong, f_moved;
        if (fl.relational) {
          f_weak = slice_rows(feats, offset, pair);
          f_strong = slice_rows(feats, offset + pair, pair);
          offset += 2 * pair;
        }
        if (fl.translation) f_moved = slice_rows(feats, offset, pair);

        LossComponents parts;
        {
          std::vector<Tensor> views{classify_semantic(params, slice_rows(f_orig, 0, batch))};
          if (fl.relational) {
            views.push_back(classify_semantic(params, slice_rows(f_weak, 0, batch)));
            views.push_back(classify_semantic(params, slice_rows(f_strong, 0, batch)));
          }
          parts.source = source_supervised_loss(views, src_labels);
        }
        if (fl.translation) parts.translation = translation_loss(classify_translation(params, f_moved), trans_labels);

        Tensor z_weak_push;
        if (fl.relational) {
          const Tensor z_weak = project(params, f_weak);
          Tensor z_target = project(params, f_orig), z_weak_target = z_weak;
          if (teacher) {
            const std::vector<PointCloud> orig_and_weak(clouds.begin(), clouds.begin() + 2 * pair);
            const Tensor tf = encode(*teacher, CloudBatch::from(orig_and_weak));
            z_target = project(*teacher, slice_rows(tf, 0, pair));
            z_weak_target = project(*teacher, slice_rows(tf, pair, pair));
          }
          if (bank.size() >= batch) {
            const BankSnapshot snap = BankSnapshot::of(bank);
            const Tensor z_strong = project(params, f_strong);
            const Tensor lo = loss_weak_strong(z_weak_target, z_strong, snap, cfg.relational.temperatures);
            const Tensor le = loss_orig_weak(z_target, z_weak, snap, cfg.relational.temperatures);
            parts.relational = cfg.loss.lambda == 0.0 ? lo : add(lo, scale(le, cfg.loss.lambda));
          }
          z_weak_push = z_weak_target.detach();
        }
        if (selftrain) {
          std::vector<PseudoLabel> batch_pl(batch);
          for (std::size_t b = 0; b < batch; ++b) batch_pl[b] = pseudo[ti[b]];
          parts.target = selfpaced_target_loss(classify_semantic(params, slice_rows(f_orig, batch, batch)), batch_pl,
                                               gamma);
        }

        const Tensor loss = total_loss(parts, cfg.loss, phase);
        if (!std::isfinite(loss.item())) throw ValueError("non-finite loss");

        auto value = [](const Tensor& t) { return t.defined() ? t.item() : 0.0; };
        rec.relational += value(parts.relational);
        rec.translation += value(parts.translation);
        rec.source += value(parts.source);
        rec.target += value(parts.target);
        rec.total += loss.item();
        ++rec.steps;

        adam.zero_grad();
        backward(loss);
        adam.step();
        if (teacher) detail::ema_update(*teacher, params, cfg.relational.ema_momentum);
        if (z_weak_push.defined()) bank.push(z_weak_push);
      } catch (const ValueError& e) {
        throw Error("training diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                    std::to_string(step + 1) + ": " + e.what());
      }
    }

    const double n = static_cast<double>(rec.steps);
    rec.relational /= n;
    rec.translation /= n;
    rec.source /= n;
    rec.target /= n;
    rec.total /= n;
    report.epochs.push_back(rec);
    if (output.log)
      *output.log << "epoch " << rec.epoch << "/" << total_epochs << " [" << rec.phase << "] lr=" << lr
                  << " total=" << rec.total << " rm=" << rec.relational << " trans=" << rec.translation
                  << " src=" << rec.source << " tgt=" << rec.target << '\n';
  }

  report.confusion = evaluate(params, data.target_test, tr.eval_batch);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!output.dir.empty()) {
    save_checkpoint((std::filesystem::path(output.dir) / "model.ckpt").string(), params);
    write_report(output.dir, report);
  }
  return {std::move(params), std::move(report)};
}

}  // namespace pcuda
