#include "harfuse/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

#include "harfuse/checkpoint.hpp"
#include "harfuse/diagnostics.hpp"
#include "harfuse/eval.hpp"
#include "harfuse/serialize.hpp"

namespace harfuse::cli {

namespace {

using nlohmann::json;

struct DataFlags {
  std::string kind;
  std::string data_dir;
  std::string out = "out";
  std::string norm = "zscore";
  double cutoff_hz = kDefaultCutoffHz;
};

struct ModelFlags {
  Index width = 128;
  Index clstm_steps = 8;
};

struct TrainFlags {
  int epochs = 0;  // 0 = not given
  double lr = 1e-3;
  std::uint64_t seed = 0;
  Index batch_size = 0;
};

void add_data_flags(CLI::App* cmd, DataFlags& f, bool data_dir_required) {
  cmd->add_option("--dataset-kind,--dataset", f.kind, "usc-had | ucihar-raw | ucihar-features")
      ->required()
      ->check(CLI::IsMember({"usc-had", "ucihar-raw", "ucihar-features"}));
  auto* dd = cmd->add_option("--data-dir", f.data_dir,
                             data_dir_required ? "Dataset directory (canonical CSV + manifest.json, or the UCI HAR archive root)"
                                               : "Dataset directory; when given the prepared cache is (re)built first");
  if (data_dir_required) dd->required();
  cmd->add_option("--out", f.out, "Output root: prepared/, runs/, reports/, cache/")->capture_default_str();
  cmd->add_option("--norm", f.norm, "Per-channel normalization of raw signals: zscore (mean 0, std 1) or l2 (mean 0, norm 1)")
      ->check(CLI::IsMember({"zscore", "l2", "unit_l2"}))
      ->capture_default_str();
  cmd->add_option("--cutoff-hz", f.cutoff_hz, "Order-3 Butterworth low-pass cutoff, applied forward and backward")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--width", m.width, "Filters / hidden units per network")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--clstm-steps", m.clstm_steps, "Temporal steps the CLSTM splits its input into")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_train_flags(CLI::App* cmd, TrainFlags& t, int default_epochs) {
  cmd->add_option("--epochs", t.epochs, "Training epochs (default " + std::to_string(default_epochs) + ")")
      ->check(CLI::Range(1, 1000000));
  cmd->add_option("--lr", t.lr, "Adam learning rate (beta1 0.9, beta2 0.999, eps 1e-8)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", t.seed, "Seed for initialization, shuffling and fold assignment")->capture_default_str();
  cmd->add_option("--batch-size", t.batch_size, "Mini-batch size; 0 applies max(n/32, 1)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

PreprocessOptions preprocess_options(const DataFlags& f) {
  PreprocessOptions o;
  o.cutoff_hz = f.cutoff_hz;
  o.norm = parse_norm_mode(f.norm);
  return o;
}

fs::path cache_dir(const DataFlags& f) { return fs::path(f.out) / "prepared" / f.kind; }

PreparedData obtain(const DataFlags& f, std::ostream& out) {
  const DatasetKind kind = parse_dataset_kind(f.kind);
  if (f.data_dir.empty()) return load_prepared(cache_dir(f));
  const auto r = prepare_dataset(f.data_dir, kind, preprocess_options(f), cache_dir(f));
  out << (r.cache_hit ? "prepared cache hit: " : "prepared: ") << cache_dir(f).string() << "\n";
  return r.data;
}

TrainConfig train_config(const TrainFlags& t, int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.learning_rate = t.lr;
  c.seed = t.seed;
  c.batch_size = t.batch_size;
  validate(c);
  return c;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_json(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream o(p);
  if (!o) throw Error("cannot write " + p.string());
  o << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

int cmd_prepare(const DataFlags& f, std::ostream& out) {
  const auto r = prepare_dataset(f.data_dir, parse_dataset_kind(f.kind), preprocess_options(f), cache_dir(f));
  const auto& d = r.data;
  out << (r.cache_hit ? "cache hit, nothing recomputed" : "prepared") << "\n";
  out << "  cache      " << cache_dir(f).string() << "\n";
  out << "  input hash " << d.input_hash << "\n";
  out << "  train      " << d.train.size() << " samples, blocks " << d.train.branch_count() << " x "
      << shape_string({d.train.length(), d.train.channels()}) << "\n";
  if (d.test) out << "  test       " << d.test->size() << " samples\n";
  if (d.preprocessed) {
    out << "  preprocess lowpass order " << kFilterOrder << " at " << d.options.cutoff_hz << " Hz (fs " << d.sample_rate_hz
        << " Hz), norm " << to_string(d.options.norm) << ", length "
        << (d.options.length > 0 ? std::to_string(d.options.length) : std::string("native")) << "\n";
  } else {
    out << "  preprocess none (published feature vectors)\n";
  }
  for (const auto& w : d.warnings) out << "  warning: " << w << "\n";
  return kOk;
}

int cmd_gradcheck(const std::string& scale, int instances, std::uint64_t seed, std::ostream& out) {
  const auto report = gradient_suite(scale == "small" ? SuiteScale::Small : SuiteScale::Tiny, instances, seed);
  double total = 0.0, worst = 0.0;
  for (const auto& l : report.lines) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-40s instances=%-3d worst=%.3e %7.2fs %s\n", l.name.c_str(), l.instances, l.worst,
                  l.seconds, l.pass ? "ok" : "FAIL");
    out << buf;
    total += l.seconds;
    worst = std::max(worst, l.worst);
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "gradient suite (%s): %s, worst %.3e vs tolerance %.0e, %.2fs\n", scale.c_str(),
                report.pass() ? "PASS" : "FAIL", worst, report.tolerance, total);
  out << buf;
  return report.pass() ? kOk : kNumericFailure;
}

struct TrainArgs {
  DataFlags data;
  ModelFlags model;
  TrainFlags train;
  std::string first = "cnn1d", second = "cnn1d", fusion = "on";
  int folds = 5;
  int fold = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const int epochs = a.train.epochs > 0 ? a.train.epochs : 500;
  const TrainConfig tc = train_config(a.train, epochs);
  out << "epochs: " << epochs << (a.train.epochs > 0 ? "" : " (default)") << "\n";
  const PreparedData data = obtain(a.data, out);

  ModelConfig mc = base_config(data);
  mc.first = parse_net_kind(a.first);
  mc.second = parse_net_kind(a.second);
  mc.intermediate_fusion = a.fusion == "on";
  mc.first_width = mc.second_width = a.model.width;
  mc.clstm_steps = a.model.clstm_steps;
  validate(mc);
  if (!compatible(mc.first, mc.second, mc.input_kind)) {
    throw ConfigError("incompatible pair " + mc.label() + " for " + to_string(mc.input_kind) + " input");
  }

  std::string split = "test";
  int fold = -1;
  std::vector<Index> train_idx, test_idx;
  if (!data.test) {
    if (a.fold < 1 || a.fold > a.folds) throw ConfigError("--fold must lie in 1.." + std::to_string(a.folds));
    const auto folds = kfold_split(data.train.ids, data.train.labels, a.folds, tc.seed);
    const auto& f = folds[static_cast<std::size_t>(a.fold - 1)];
    train_idx = data.train.indices_of(f.train_ids);
    test_idx = data.train.indices_of(f.test_ids);
    split = "fold" + std::to_string(a.fold);
    fold = a.fold - 1;
  }
  out << "model: " << mc.label() << ", split " << split << ", batch "
      << (tc.batch_size > 0 ? tc.batch_size : batch_size(train_idx.empty() ? data.train.size() : static_cast<Index>(train_idx.size())))
      << ", lr " << tc.learning_rate << "\n";

  RunHooks hooks;
  std::unique_ptr<FusionModel> model;
  hooks.trained = &model;
  hooks.rethrow = true;
  const int every = std::max(1, epochs / 50);
  hooks.on_epoch = [&](int epoch, const TrainHistory& h) {
    if ((epoch + 1) % every == 0 || epoch + 1 == epochs) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "epoch %4d/%d  loss %.5f  train acc %6.2f%%  %.1fs\n", epoch + 1, epochs, h.loss.back(),
                    h.accuracy.back(), h.seconds.back());
      out << buf << std::flush;
    }
  };
  const RunReport report = run_one(data, mc, tc, split, fold, train_idx, test_idx, hooks);

  const fs::path run_dir = fs::path(a.data.out) / "runs" /
                           (to_string(mc.first) + "-" + to_string(mc.second) + "-fusion_" + a.fusion + "-" + split +
                            "-seed" + std::to_string(tc.seed));
  save_checkpoint(*model, run_dir / "checkpoint");
  write_json(run_dir / "report.json", report);
  out << "test accuracy: " << fmt("%.2f", report.accuracy_pct) << "% on " << report.test_samples << " samples\n";
  out << "report: " << (run_dir / "report.json").string() << "\n";
  return kOk;
}

struct GridArgs {
  DataFlags data;
  ModelFlags model;
  TrainFlags train;
  bool paper_scale = false;
  int folds = 5;
  std::vector<int> only_fold;
  std::vector<std::string> only;
  std::string fusion = "both";
  int workers = 1;
  std::string run_name;
  bool no_resume = false;
};

int cmd_grid(const GridArgs& a, std::ostream& out) {
  const int epochs = a.train.epochs > 0 ? a.train.epochs : (a.paper_scale ? 500 : 50);
  const TrainConfig tc = train_config(a.train, epochs);
  const PreparedData data = obtain(a.data, out);

  ModelConfig defaults;
  defaults.first_width = defaults.second_width = a.model.width;
  defaults.clstm_steps = a.model.clstm_steps;
  auto configs = enumerate_architectures(input_kind(data.kind), base_config(data, defaults));
  if (!a.only.empty()) {
    std::vector<std::pair<NetKind, NetKind>> wanted;
    for (const auto& o : a.only) {
      const auto comma = o.find(',');
      if (comma == std::string::npos) throw ConfigError("--only expects first,second (e.g. cnn1d,lstm), got '" + o + "'");
      wanted.emplace_back(parse_net_kind(o.substr(0, comma)), parse_net_kind(o.substr(comma + 1)));
    }
    std::erase_if(configs, [&](const ModelConfig& c) {
      return std::find(wanted.begin(), wanted.end(), std::make_pair(c.first, c.second)) == wanted.end();
    });
  }
  if (a.fusion != "both") std::erase_if(configs, [&](const ModelConfig& c) { return c.intermediate_fusion != (a.fusion == "on"); });
  if (configs.empty()) throw ConfigError("the filters leave no architecture to run");

  GridOptions o;
  o.configs = configs;
  o.train = tc;
  o.folds = data.test ? 0 : a.folds;
  for (int f : a.only_fold) {
    if (f < 1 || f > a.folds) throw ConfigError("--fold must lie in 1.." + std::to_string(a.folds));
    o.only_folds.push_back(f - 1);
  }
  o.workers = a.workers;
  if (!a.no_resume) o.cache_dir = fs::path(a.data.out) / "cache" / "runs";
  o.progress = [&](const RunReport& r, bool cached, std::size_t done, std::size_t total) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "[%zu/%zu] %-32s %-6s %s\n", done, total, r.model.label().c_str(), r.split.c_str(),
                  !r.ok()              ? ("FAILED: " + r.error).c_str()
                  : cached             ? (fmt("%.2f", r.accuracy_pct) + "% (cached)").c_str()
                                       : (fmt("%.2f", r.accuracy_pct) + "% in " + fmt("%.1f", r.seconds) + "s").c_str());
    out << buf << std::flush;
  };
  out << "grid: " << configs.size() << " architectures, " << (o.folds > 0 ? std::to_string(o.folds) + "-fold" : "fixed split")
      << ", " << epochs << " epochs" << (a.paper_scale && a.train.epochs == 0 ? " (full scale)" : "") << ", " << o.workers << " worker(s)\n";
  const GridResult grid = run_grid(data, o);

  const fs::path dir = fs::path(a.data.out) / "reports" / a.data.kind / (a.run_name.empty() ? timestamp() : a.run_name);
  emit_report(grid, ReportFormat::Csv, dir / "grid.csv");
  emit_report(grid, ReportFormat::Json, dir / "grid.json");
  int failures = 0;
  for (const auto& e : grid.entries) {
    failures += e.failures;
    std::string label = e.model.label();
    label.resize(std::max<std::size_t>(label.size(), 34), ' ');
    out << label;
    out << (e.any_ok() ? fmt("%7.2f%%", e.mean_accuracy) : std::string("  failed"));
    if (o.folds > 0 && e.any_ok()) out << "  best " << fmt("%.2f%%", e.best_accuracy);
    out << "\n";
  }
  if (failures > 0) out << failures << " run(s) failed; see grid.json\n";
  out << "reports: " << (dir / "grid.csv").string() << ", " << (dir / "grid.json").string() << "\n";
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kNumericFailure;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e)) return kUsage;
  return kDataError;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"harfuse: dual-branch fusion networks for inertial activity recognition"};
  app.name("harfuse");
  app.require_subcommand(1, 1);

  DataFlags prep;
  auto* prepare = app.add_subcommand("prepare", "Parse, filter, normalize and length-standardize a dataset into a cache");
  add_data_flags(prepare, prep, true);

  std::string scale = "tiny";
  int instances = 20;
  std::uint64_t gc_seed = 2024;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer and of end-to-end models");
  gradcheck->add_option("--scale", scale, "tiny | small")->check(CLI::IsMember({"tiny", "small"}))->capture_default_str();
  gradcheck->add_option("--instances", instances, "Random instances per layer check")
      ->check(CLI::Range(1, 100000))
      ->capture_default_str();
  gradcheck->add_option("--seed", gc_seed, "Seed for the random instances")->capture_default_str();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train and evaluate one architecture; writes a checkpoint and a report");
  add_data_flags(train_cmd, ta.data, false);
  train_cmd->add_option("--first", ta.first, "First-level net: cnn1d | lstm | clstm1d | cnn2d | clstm2d")->capture_default_str();
  train_cmd->add_option("--second", ta.second, "Second-level net: cnn1d | lstm | clstm1d | cnn2d | clstm2d")->capture_default_str();
  train_cmd->add_option("--fusion", ta.fusion, "Intermediate fusion on | off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  add_model_flags(train_cmd, ta.model);
  add_train_flags(train_cmd, ta.train, 500);
  train_cmd->add_option("--folds", ta.folds, "Folds for datasets without a fixed test split")
      ->check(CLI::Range(2, 1000))
      ->capture_default_str();
  train_cmd->add_option("--fold", ta.fold, "Which fold (1-based) is held out")->check(CLI::PositiveNumber)->capture_default_str();

  GridArgs ga;
  auto* grid_cmd = app.add_subcommand("grid", "Run every compatible architecture with and without intermediate fusion");
  add_data_flags(grid_cmd, ga.data, false);
  add_model_flags(grid_cmd, ga.model);
  add_train_flags(grid_cmd, ga.train, 50);
  grid_cmd->add_flag("--paper-scale", ga.paper_scale, "Use 500 epochs instead of the desk-scale 50 (an explicit --epochs wins)");
  grid_cmd->add_option("--folds", ga.folds, "Folds for datasets without a fixed test split")
      ->check(CLI::Range(2, 1000))
      ->capture_default_str();
  grid_cmd->add_option("--fold", ga.only_fold, "Run only these folds (1-based, repeatable)");
  grid_cmd->add_option("--only", ga.only, "Restrict to first,second pairs, e.g. --only cnn1d,cnn1d (repeatable)");
  grid_cmd->add_option("--fusion", ga.fusion, "on | off | both")->check(CLI::IsMember({"on", "off", "both"}))->capture_default_str();
  grid_cmd->add_option("--workers", ga.workers, "Concurrent training runs")->check(CLI::Range(1, 256))->capture_default_str();
  grid_cmd->add_option("--run-name", ga.run_name, "Report directory name (default: UTC timestamp)");
  grid_cmd->add_flag("--no-resume", ga.no_resume, "Ignore and do not write the per-run cache");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*prepare) return cmd_prepare(prep, out);
    if (*gradcheck) return cmd_gradcheck(scale, instances, gc_seed, out);
    if (*train_cmd) return cmd_train(ta, out);
    if (*grid_cmd) return cmd_grid(ga, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kUsage;
}

}  // namespace harfuse::cli
