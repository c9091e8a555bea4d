#ifndef HARFUSE_EVAL_HPP
#define HARFUSE_EVAL_HPP

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "harfuse/prepare.hpp"
#include "harfuse/train.hpp"

namespace harfuse {

/// K x K counts, rows = true class, columns = predicted class.
struct ConfusionMatrix {
  Index classes = 0;
  std::vector<std::int64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(Index k) : classes(k), counts(static_cast<std::size_t>(k * k), 0) {}

  std::int64_t& at(Index truth, Index pred) { return counts[static_cast<std::size_t>(truth * classes + pred)]; }
  std::int64_t at(Index truth, Index pred) const { return counts[static_cast<std::size_t>(truth * classes + pred)]; }
  std::int64_t total() const;
  std::int64_t trace() const;

  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& truth, Index classes);

/// trace / total * 100. Throws ParameterError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

struct BinaryCounts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
};

/// One-vs-rest counts for class `c`.
BinaryCounts one_vs_rest(const ConfusionMatrix& cm, Index c);
/// (TP + TN) / (TP + TN + FP + FN) * 100.
double binary_accuracy(const BinaryCounts& b);
std::vector<double> per_class_accuracy(const ConfusionMatrix& cm);

/// One trained-and-evaluated configuration on one split.
struct RunReport {
  ModelConfig model;
  std::string dataset;
  std::string split;  // "test" for a fixed split, "fold<k>" (1-based) otherwise
  int fold = -1;
  std::uint64_t seed = 0;
  TrainConfig train;
  PreprocessOptions preprocess;
  bool preprocessed = true;
  double sample_rate_hz = 0.0;
  std::string input_hash;
  Index train_samples = 0;
  Index test_samples = 0;
  Index batch_size = 0;
  Index trainable_parameters = 0;
  double initial_loss = 0.0;
  std::vector<double> loss;            // per epoch
  std::vector<double> train_accuracy;  // per epoch, percent
  double seconds = 0.0;
  ConfusionMatrix confusion;
  double accuracy_pct = 0.0;
  /// Empty on success; otherwise the failure that ended the run.
  std::string error;

  bool ok() const { return error.empty(); }
  bool operator==(const RunReport&) const = default;
};

void to_json(nlohmann::json& j, const ConfusionMatrix& cm);
void from_json(const nlohmann::json& j, ConfusionMatrix& cm);
void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

/// Model geometry matching the prepared data (input kind, length, channels, classes).
ModelConfig base_config(const PreparedData& data, const ModelConfig& defaults = {});

struct RunHooks {
  EpochCallback on_epoch;
  /// Receives the trained model when set.
  std::unique_ptr<FusionModel>* trained = nullptr;
  /// Propagate failures instead of recording them.
  bool rethrow = false;
};

/// Trains `config` on `train_idx` rows of data.train (all rows when empty)
/// and evaluates on the `test_idx` rows, or on data.test when `test_idx` is
/// empty. Failures are caught and recorded in the report.
RunReport run_one(const PreparedData& data, const ModelConfig& config, const TrainConfig& train,
                  const std::string& split, int fold, const std::vector<Index>& train_idx,
                  const std::vector<Index>& test_idx, const RunHooks& hooks = {});

struct GridOptions {
  std::vector<ModelConfig> configs;
  TrainConfig train;
  /// 0 uses the fixed train/test split; otherwise k-fold over data.train.
  int folds = 0;
  /// Restricts a k-fold grid to these 0-based folds; empty = all.
  std::vector<int> only_folds;
  int workers = 1;
  /// Finished runs are stored here and reused on the next invocation; empty disables.
  fs::path cache_dir;
  std::function<void(const RunReport&, bool cached, std::size_t done, std::size_t total)> progress;
};

struct GridEntry {
  ModelConfig model;
  std::vector<RunReport> runs;  // one per split, in fold order
  double mean_accuracy = 0.0;   // over successful runs
  double best_accuracy = 0.0;
  int failures = 0;

  bool any_ok() const { return failures < static_cast<int>(runs.size()); }
};

struct GridResult {
  std::string dataset;
  std::vector<GridEntry> entries;  // sorted by (first, second, fusion)
};

/// Canonical report order: first kind, second kind, fusion off before on.
bool canonical_less(const ModelConfig& a, const ModelConfig& b);

GridResult run_grid(const PreparedData& data, const GridOptions& options);

/// Columns first,second,fusion,split,seed,accuracy_pct,epochs,lr. One row per
/// run; k-fold grids add "mean" and "best" rows per configuration.
std::string grid_csv(const GridResult& grid);
nlohmann::json grid_json(const GridResult& grid);
GridResult grid_from_json(const nlohmann::json& j);

enum class ReportFormat { Csv, Json };
void emit_report(const GridResult& grid, ReportFormat format, const fs::path& path);

}  // namespace harfuse

#endif  // HARFUSE_EVAL_HPP
