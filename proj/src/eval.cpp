#include "harfuse/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "harfuse/serialize.hpp"

namespace harfuse {

using nlohmann::json;

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (Index c = 0; c < classes; ++c) t += at(c, c);
  return t;
}

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& truth, Index classes) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("confusion: " + std::to_string(predicted.size()) + " predictions for " + std::to_string(truth.size()) +
                     " labels");
  }
  if (classes < 1) throw ParameterError("confusion needs at least one class");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int v : {truth[i], predicted[i]}) {
      if (v < 0 || v >= classes) throw LabelError("confusion: label " + std::to_string(v) + " outside 0.." + std::to_string(classes - 1));
    }
    ++cm.at(truth[i], predicted[i]);
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total <= 0) throw ParameterError("accuracy of an empty confusion matrix");
  return 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(total);
}

BinaryCounts one_vs_rest(const ConfusionMatrix& cm, Index c) {
  if (c < 0 || c >= cm.classes) throw LabelError("one_vs_rest: class " + std::to_string(c) + " out of range");
  BinaryCounts b;
  for (Index t = 0; t < cm.classes; ++t) {
    for (Index p = 0; p < cm.classes; ++p) {
      const auto n = cm.at(t, p);
      if (t == c && p == c) b.tp += n;
      else if (t == c) b.fn += n;
      else if (p == c) b.fp += n;
      else b.tn += n;
    }
  }
  return b;
}

double binary_accuracy(const BinaryCounts& b) {
  const auto total = b.tp + b.tn + b.fp + b.fn;
  if (total <= 0) throw ParameterError("accuracy of zero samples");
  return 100.0 * static_cast<double>(b.tp + b.tn) / static_cast<double>(total);
}

std::vector<double> per_class_accuracy(const ConfusionMatrix& cm) {
  std::vector<double> out;
  for (Index c = 0; c < cm.classes; ++c) out.push_back(binary_accuracy(one_vs_rest(cm, c)));
  return out;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const ConfusionMatrix& cm) {
  json rows = json::array();
  for (Index t = 0; t < cm.classes; ++t) {
    json row = json::array();
    for (Index p = 0; p < cm.classes; ++p) row.push_back(cm.at(t, p));
    rows.push_back(row);
  }
  j = rows;
}

void from_json(const json& j, ConfusionMatrix& cm) {
  cm = ConfusionMatrix(static_cast<Index>(j.size()));
  for (Index t = 0; t < cm.classes; ++t) {
    const json& row = j.at(static_cast<std::size_t>(t));
    if (static_cast<Index>(row.size()) != cm.classes) throw ShapeError("confusion matrix JSON is not square");
    for (Index p = 0; p < cm.classes; ++p) cm.at(t, p) = row.at(static_cast<std::size_t>(p)).get<std::int64_t>();
  }
}

void to_json(json& j, const RunReport& r) {
  j = json{{"model", r.model},
           {"dataset", r.dataset},
           {"split", r.split},
           {"fold", r.fold},
           {"seed", r.seed},
           {"train", r.train},
           {"preprocess", r.preprocess},
           {"preprocessed", r.preprocessed},
           {"sample_rate_hz", r.sample_rate_hz},
           {"input_hash", r.input_hash},
           {"train_samples", r.train_samples},
           {"test_samples", r.test_samples},
           {"batch_size", r.batch_size},
           {"trainable_parameters", r.trainable_parameters},
           {"initial_loss", r.initial_loss},
           {"loss", r.loss},
           {"train_accuracy", r.train_accuracy},
           {"seconds", r.seconds},
           {"confusion", r.confusion},
           {"accuracy_pct", r.accuracy_pct},
           {"error", r.error}};
}

void from_json(const json& j, RunReport& r) {
  j.at("model").get_to(r.model);
  j.at("dataset").get_to(r.dataset);
  j.at("split").get_to(r.split);
  j.at("fold").get_to(r.fold);
  j.at("seed").get_to(r.seed);
  j.at("train").get_to(r.train);
  j.at("preprocess").get_to(r.preprocess);
  j.at("preprocessed").get_to(r.preprocessed);
  j.at("sample_rate_hz").get_to(r.sample_rate_hz);
  j.at("input_hash").get_to(r.input_hash);
  j.at("train_samples").get_to(r.train_samples);
  j.at("test_samples").get_to(r.test_samples);
  j.at("batch_size").get_to(r.batch_size);
  j.at("trainable_parameters").get_to(r.trainable_parameters);
  j.at("initial_loss").get_to(r.initial_loss);
  j.at("loss").get_to(r.loss);
  j.at("train_accuracy").get_to(r.train_accuracy);
  j.at("seconds").get_to(r.seconds);
  j.at("confusion").get_to(r.confusion);
  j.at("accuracy_pct").get_to(r.accuracy_pct);
  j.at("error").get_to(r.error);
}

// ---------------------------------------------------------------------------
// runs

ModelConfig base_config(const PreparedData& data, const ModelConfig& defaults) {
  ModelConfig c = defaults;
  c.input_kind = input_kind(data.kind);
  c.class_count = data.train.class_count();
  c.input_length = data.train.length();
  c.input_channels = data.train.channels();
  return c;
}

RunReport run_one(const PreparedData& data, const ModelConfig& config, const TrainConfig& train_cfg,
                  const std::string& split, int fold, const std::vector<Index>& train_idx,
                  const std::vector<Index>& test_idx, const RunHooks& hooks) {
  RunReport r;
  r.model = config;
  r.dataset = to_string(data.kind);
  r.split = split;
  r.fold = fold;
  r.seed = train_cfg.seed;
  r.train = train_cfg;
  r.preprocess = data.options;
  r.preprocessed = data.preprocessed;
  r.sample_rate_hz = data.sample_rate_hz;
  r.input_hash = data.input_hash;
  const auto start = std::chrono::steady_clock::now();
  try {
    const Dataset train_set = train_idx.empty() ? data.train : data.train.subset(train_idx);
    Dataset test_set;
    if (!test_idx.empty()) {
      test_set = data.train.subset(test_idx);
    } else if (data.test) {
      test_set = *data.test;
    } else {
      throw ConfigError("no test split: dataset has no fixed test set and no fold was given");
    }
    r.train_samples = train_set.size();
    r.test_samples = test_set.size();
    r.batch_size = train_cfg.batch_size > 0 ? train_cfg.batch_size : batch_size(train_set.size());
    Rng rng(train_cfg.seed);
    auto model = build_model(config, rng);
    r.trainable_parameters = model->trainable_count();
    const TrainHistory h = train(*model, train_set, nullptr, train_cfg, nullptr, hooks.on_epoch);
    r.initial_loss = h.initial_loss;
    r.loss = h.loss;
    r.train_accuracy = h.accuracy;
    r.confusion = confusion(predict(*model, test_set), test_set.labels, config.class_count);
    r.accuracy_pct = accuracy(r.confusion);
    if (hooks.trained) *hooks.trained = std::move(model);
  } catch (const std::exception& e) {
    if (hooks.rethrow) throw;
    r.error = e.what();
    r.accuracy_pct = 0.0;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

bool canonical_less(const ModelConfig& a, const ModelConfig& b) {
  const auto key = [](const ModelConfig& c) {
    return std::make_tuple(static_cast<int>(c.first), static_cast<int>(c.second), c.intermediate_fusion);
  };
  return key(a) < key(b);
}

namespace {

struct Task {
  std::size_t entry;
  std::string split;
  int fold;
  std::vector<Index> train_idx, test_idx;
  std::string cache_key;
};

std::string run_cache_key(const PreparedData& data, const ModelConfig& m, const TrainConfig& t, const Task& task) {
  std::uint64_t h = fnv1a("harfuse-run/1/" + data.input_hash);
  h = fnv1a(json(m).dump(), h);
  h = fnv1a(json(t).dump(), h);
  h = fnv1a(task.split, h);
  for (Index i : task.test_idx) h = fnv1a(std::to_string(i) + ",", h);
  return hex64(h);
}

std::optional<RunReport> load_cached(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return json::parse(in).get<RunReport>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void store_cached(const fs::path& path, const RunReport& r) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << json(r).dump() << "\n";
  }
  fs::rename(tmp, path);
}

}  // namespace

GridResult run_grid(const PreparedData& data, const GridOptions& o) {
  if (o.configs.empty()) throw ConfigError("grid has no configurations");
  validate(o.train);
  GridResult grid;
  grid.dataset = to_string(data.kind);
  std::vector<ModelConfig> configs = o.configs;
  std::stable_sort(configs.begin(), configs.end(), canonical_less);
  for (const auto& c : configs) grid.entries.push_back(GridEntry{c, {}, 0.0, 0.0, 0});

  // splits shared by every configuration
  std::vector<std::tuple<std::string, int, std::vector<Index>, std::vector<Index>>> splits;
  if (o.folds == 0) {
    if (!data.test) throw ConfigError(grid.dataset + " has no fixed test split; use k-fold (--folds)");
    splits.emplace_back("test", -1, std::vector<Index>{}, std::vector<Index>{});
  } else {
    if (data.train.ids.empty()) throw ConfigError(grid.dataset + ": k-fold needs recording ids");
    const auto folds = kfold_split(data.train.ids, data.train.labels, o.folds, o.train.seed);
    for (const auto& f : folds) {
      if (!o.only_folds.empty() && std::find(o.only_folds.begin(), o.only_folds.end(), f.fold) == o.only_folds.end()) continue;
      splits.emplace_back("fold" + std::to_string(f.fold + 1), f.fold, data.train.indices_of(f.train_ids),
                          data.train.indices_of(f.test_ids));
    }
    if (splits.empty()) throw ConfigError("no folds selected");
  }

  std::vector<Task> tasks;
  for (std::size_t e = 0; e < configs.size(); ++e) {
    for (const auto& [name, fold, tr, te] : splits) {
      Task t{e, name, fold, tr, te, {}};
      t.cache_key = run_cache_key(data, configs[e], o.train, t);
      tasks.push_back(std::move(t));
    }
  }
  std::vector<RunReport> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  std::size_t done = 0;
  const auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      const fs::path cache_file = o.cache_dir.empty() ? fs::path() : o.cache_dir / (t.cache_key + ".json");
      std::optional<RunReport> cached;
      if (!cache_file.empty()) cached = load_cached(cache_file);
      const bool hit = cached.has_value();
      results[i] = hit ? std::move(*cached) : run_one(data, configs[t.entry], o.train, t.split, t.fold, t.train_idx, t.test_idx);
      // failed runs are not cached so a resumed grid retries them
      if (!hit && !cache_file.empty() && results[i].ok()) store_cached(cache_file, results[i]);
      std::lock_guard lock(progress_mutex);
      ++done;
      if (o.progress) o.progress(results[i], hit, done, tasks.size());
    }
  };
  const int workers = std::clamp<int>(o.workers, 1, static_cast<int>(tasks.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (std::size_t i = 0; i < tasks.size(); ++i) grid.entries[tasks[i].entry].runs.push_back(std::move(results[i]));
  for (auto& e : grid.entries) {
    double sum = 0.0;
    int ok = 0;
    for (const auto& r : e.runs) {
      if (!r.ok()) {
        ++e.failures;
        continue;
      }
      sum += r.accuracy_pct;
      e.best_accuracy = ok == 0 ? r.accuracy_pct : std::max(e.best_accuracy, r.accuracy_pct);
      ++ok;
    }
    e.mean_accuracy = ok > 0 ? sum / ok : 0.0;
  }
  return grid;
}

// ---------------------------------------------------------------------------
// reports

namespace {

std::string csv_row(const ModelConfig& m, const std::string& split, std::uint64_t seed, const std::string& acc,
                    const TrainConfig& t) {
  char lr[32];
  std::snprintf(lr, sizeof lr, "%g", t.learning_rate);
  return to_string(m.first) + "," + to_string(m.second) + "," + (m.intermediate_fusion ? "on" : "off") + "," + split +
         "," + std::to_string(seed) + "," + acc + "," + std::to_string(t.epochs) + "," + lr + "\n";
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string grid_csv(const GridResult& grid) {
  std::string out = "first,second,fusion,split,seed,accuracy_pct,epochs,lr\n";
  for (const auto& e : grid.entries) {
    for (const auto& r : e.runs) out += csv_row(r.model, r.split, r.seed, r.ok() ? pct(r.accuracy_pct) : "", r.train);
    if (!e.runs.empty() && e.runs.front().fold >= 0) {
      const auto& r0 = e.runs.front();
      out += csv_row(e.model, "mean", r0.seed, e.any_ok() ? pct(e.mean_accuracy) : "", r0.train);
      out += csv_row(e.model, "best", r0.seed, e.any_ok() ? pct(e.best_accuracy) : "", r0.train);
    }
  }
  return out;
}

json grid_json(const GridResult& grid) {
  json entries = json::array();
  for (const auto& e : grid.entries) {
    entries.push_back({{"model", e.model},
                       {"label", e.model.label()},
                       {"mean_accuracy_pct", e.mean_accuracy},
                       {"best_accuracy_pct", e.best_accuracy},
                       {"failures", e.failures},
                       {"runs", e.runs}});
  }
  return json{{"dataset", grid.dataset}, {"entries", entries}};
}

GridResult grid_from_json(const json& j) {
  GridResult g;
  j.at("dataset").get_to(g.dataset);
  for (const auto& e : j.at("entries")) {
    GridEntry entry;
    e.at("model").get_to(entry.model);
    e.at("mean_accuracy_pct").get_to(entry.mean_accuracy);
    e.at("best_accuracy_pct").get_to(entry.best_accuracy);
    e.at("failures").get_to(entry.failures);
    e.at("runs").get_to(entry.runs);
    g.entries.push_back(std::move(entry));
  }
  return g;
}

void emit_report(const GridResult& grid, ReportFormat format, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write report " + path.string());
  if (format == ReportFormat::Csv) out << grid_csv(grid);
  else out << grid_json(grid).dump(2) << "\n";
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace harfuse
