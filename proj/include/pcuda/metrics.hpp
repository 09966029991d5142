#pragma once

// Confusion matrices, per-epoch loss records and report writers. Reports
// contain only quantities that are a function of config and seed; wall-clock
// time is written separately so summaries compare byte-for-byte.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcuda/error.hpp"
#include "pcuda/textio.hpp"

namespace pcuda {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
    if (classes < 2) throw ValueError("confusion matrix: need at least 2 classes");
  }

  void add(std::size_t truth, std::size_t predicted) {
    if (truth >= classes_ || predicted >= classes_)
      throw ValueError("confusion matrix: class index out of range");
    ++counts_[truth * classes_ + predicted];
  }

  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }

  std::uint64_t row_total(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < classes_; ++j) s += at(truth, j);
    return s;
  }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < classes_; ++i) s += at(i, i);
    return s;
  }

  double accuracy() const {
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
  }

  /// Recall per true class; classes without samples report 0.
  std::vector<double> per_class_accuracy() const {
    std::vector<double> out(classes_, 0.0);
    for (std::size_t i = 0; i < classes_; ++i) {
      const auto n = row_total(i);
      if (n > 0) out[i] = static_cast<double>(at(i, i)) / static_cast<double>(n);
    }
    return out;
  }

  void write_csv(std::ostream& out) const {
    out << "truth";
    for (std::size_t j = 0; j < classes_; ++j) out << ",pred_" << j;
    out << '\n';
    for (std::size_t i = 0; i < classes_; ++i) {
      out << i;
      for (std::size_t j = 0; j < classes_; ++j) out << ',' << at(i, j);
      out << '\n';
    }
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::string phase;      // "adaptation" or "self-training"
  double learning_rate = 0.0;
  double relational = 0.0;
  double translation = 0.0;
  double source = 0.0;
  double target = 0.0;
  double total = 0.0;
  std::size_t steps = 0;
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  std::size_t epoch = 0;  // first epoch of the round
  double gamma = 0.0;
  std::size_t selected = 0;
  std::size_t candidates = 0;
  double pseudo_accuracy = 0.0;  // against hidden target labels, reporting only

  double fraction() const { return candidates == 0 ? 0.0 : static_cast<double>(selected) / candidates; }
};

struct MetricsReport {
  std::string name;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::vector<RoundRecord> rounds;
  ConfusionMatrix confusion{2};
  double wall_seconds = 0.0;

  double accuracy() const { return confusion.accuracy(); }
};

inline void write_epoch_csv(std::ostream& out, const MetricsReport& r) {
  out << "epoch,phase,lr,l_rm,l_trans,l_cls_s,l_cls_t,total,steps\n";
  for (const auto& e : r.epochs)
    out << e.epoch << ',' << e.phase << ',' << textio::format_double(e.learning_rate) << ','
        << textio::format_double(e.relational) << ',' << textio::format_double(e.translation) << ','
        << textio::format_double(e.source) << ',' << textio::format_double(e.target) << ','
        << textio::format_double(e.total) << ',' << e.steps << '\n';
}

inline nlohmann::ordered_json summary_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["target_test_accuracy"] = r.accuracy();
  j["per_class_accuracy"] = r.confusion.per_class_accuracy();
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.confusion.classes(); ++i) {
    std::vector<std::uint64_t> row;
    for (std::size_t k = 0; k < r.confusion.classes(); ++k) row.push_back(r.confusion.at(i, k));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  auto rounds = nlohmann::ordered_json::array();
  for (const auto& x : r.rounds)
    rounds.push_back({{"round", x.round},
                      {"epoch", x.epoch},
                      {"gamma", x.gamma},
                      {"selected", x.selected},
                      {"candidates", x.candidates},
                      {"fraction", x.fraction()},
                      {"pseudo_label_accuracy", x.pseudo_accuracy}});
  j["pseudo_label_rounds"] = rounds;
  if (!r.epochs.empty()) {
    const auto& e = r.epochs.back();
    j["final_losses"] = {{"l_rm", e.relational},
                         {"l_trans", e.translation},
                         {"l_cls_s", e.source},
                         {"l_cls_t", e.target},
                         {"total", e.total}};
  }
  j["epochs"] = r.epochs.size();
  return j;
}

/// Writes metrics.csv, confusion.csv, summary.json and timing.json into `dir`.
inline void write_report(const std::string& dir, const MetricsReport& r) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + dir + "': " + ec.message());
  {
    auto out = textio::open_out((fs::path(dir) / "metrics.csv").string());
    write_epoch_csv(out, r);
  }
  {
    auto out = textio::open_out((fs::path(dir) / "confusion.csv").string());
    r.confusion.write_csv(out);
  }
  {
    auto out = textio::open_out((fs::path(dir) / "summary.json").string());
    out << summary_json(r).dump(2) << '\n';
  }
  {
    auto out = textio::open_out((fs::path(dir) / "timing.json").string());
    out << nlohmann::ordered_json{{"wall_seconds", r.wall_seconds}}.dump(2) << '\n';
  }
}

}  // namespace pcuda
