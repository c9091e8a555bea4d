#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "harfuse/diagnostics.hpp"
#include "harfuse/eval.hpp"
#include "synthetic.hpp"

using namespace harfuse;

namespace {

const fs::path kMini = fs::path(HARFUSE_FIXTURE_DIR) / "usc_had_mini";

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Separable single-block data with `classes` labels cycling.
Dataset toy_split(Index n, Index length, Index channels, Index classes, std::uint64_t seed, const std::string& prefix) {
  Rng rng(seed);
  Rng pattern_rng(99);
  std::vector<Tensor> patterns;
  for (Index k = 0; k < classes; ++k) patterns.push_back(randn({length, channels}, pattern_rng));
  Dataset d;
  d.name = prefix;
  for (Index k = 0; k < classes; ++k) d.class_names.push_back("class" + std::to_string(k));
  Tensor x({n, length, channels});
  for (Index i = 0; i < n; ++i) {
    const Index label = i % classes;
    for (Index t = 0; t < length; ++t)
      for (Index c = 0; c < channels; ++c) x(i, t, c) = patterns[static_cast<std::size_t>(label)](t, c) + 0.2 * rng.normal();
    d.labels.push_back(static_cast<int>(label));
    d.ids.push_back(prefix + std::to_string(i));
  }
  d.blocks.push_back(std::move(x));
  return d;
}

PreparedData toy_features() {
  PreparedData p;
  p.kind = DatasetKind::UciHarFeatures;
  p.preprocessed = false;
  p.input_hash = "toyfeatures";
  p.train = toy_split(24, 16, 1, 3, 1, "tr");
  p.test = toy_split(9, 16, 1, 3, 2, "te");
  p.train.ids.clear();
  p.test->ids.clear();
  return p;
}

PreparedData toy_dual(Index n) {
  PreparedData p;
  p.kind = DatasetKind::UscHad;
  p.input_hash = "toydual";
  p.sample_rate_hz = 100.0;
  p.train = toy_split(n, 16, 3, 2, 3, "r");
  Dataset second = toy_split(n, 16, 3, 2, 4, "r");
  p.train.blocks.push_back(second.blocks[0]);
  return p;
}

ModelConfig tiny_defaults() {
  return tiny_config(NetKind::CNN1D, NetKind::CNN1D, true, InputKind::SingleFeatureVector, 3, 16, 3);
}

}  // namespace

// ---------------------------------------------------------------------------
// metric

TEST_CASE("confusion matrix examples") {
  const auto perfect = confusion({0, 1, 2, 2}, {0, 1, 2, 2}, 3);
  for (Index t = 0; t < 3; ++t)
    for (Index p = 0; p < 3; ++p)
      if (t != p) CHECK(perfect.at(t, p) == 0);
  CHECK(perfect.at(2, 2) == 2);

  const auto cm = confusion({0, 1, 0}, {0, 0, 1}, 2);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 1);
  CHECK(cm.at(1, 1) == 0);

  const auto empty = confusion({}, {}, 4);
  CHECK(empty.total() == 0);
  CHECK(empty.counts == std::vector<std::int64_t>(16, 0));

  CHECK_THROWS_AS(confusion({0, 3}, {0, 1}, 3), LabelError);
  CHECK_THROWS_AS(confusion({0}, {0, 1}, 3), ShapeError);
}

TEST_CASE("accuracy examples") {
  CHECK(accuracy(confusion({0, 1, 2}, {0, 1, 2}, 3)) == 100.0);
  // binary TP=2, TN=2, FP=1, FN=1 with class 0 positive
  ConfusionMatrix b(2);
  b.at(0, 0) = 2;
  b.at(1, 1) = 2;
  b.at(1, 0) = 1;
  b.at(0, 1) = 1;
  const auto counts = one_vs_rest(b, 0);
  CHECK(counts.tp == 2);
  CHECK(counts.tn == 2);
  CHECK(counts.fp == 1);
  CHECK(counts.fn == 1);
  CHECK(binary_accuracy(counts) == doctest::Approx(400.0 / 6.0).epsilon(1e-15));
  CHECK(std::abs(binary_accuracy(counts) - 66.67) < 0.005);

  ConfusionMatrix n(3);
  n.at(0, 0) = 30;
  n.at(1, 1) = 30;
  n.at(2, 2) = 30;
  n.at(0, 2) = 6;
  n.at(2, 1) = 4;
  CHECK(accuracy(n) == 90.0);
  CHECK_THROWS_AS(accuracy(ConfusionMatrix(3)), ParameterError);
}

TEST_CASE("metric properties") {
  Rng rng(5);
  for (int draw = 0; draw < 100; ++draw) {
    const Index k = 2 + static_cast<Index>(rng.uniform_index(6));
    const std::size_t n = 1 + rng.uniform_index(200);
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
      pred[i] = rng.uniform() < 0.6 ? truth[i] : static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
    }
    const auto cm = confusion(pred, truth, k);
    std::int64_t off = 0, hits = 0;
    for (Index t = 0; t < k; ++t)
      for (Index p = 0; p < k; ++p)
        if (t != p) off += cm.at(t, p);
    for (std::size_t i = 0; i < n; ++i) hits += pred[i] == truth[i];
    CHECK(cm.trace() + off == static_cast<std::int64_t>(n));
    CHECK(accuracy(cm) == doctest::Approx(100.0 * static_cast<double>(hits) / static_cast<double>(n)).epsilon(1e-14));

    // relabel classes by a random permutation on both sides
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    std::vector<int> pp(n), tp(n);
    for (std::size_t i = 0; i < n; ++i) {
      pp[i] = perm[static_cast<std::size_t>(pred[i])];
      tp[i] = perm[static_cast<std::size_t>(truth[i])];
    }
    CHECK(accuracy(confusion(pp, tp, k)) == accuracy(cm));

    // one-vs-rest counts always partition the samples
    for (Index c = 0; c < k; ++c) {
      const auto b = one_vs_rest(cm, c);
      CHECK(b.tp + b.tn + b.fp + b.fn == static_cast<std::int64_t>(n));
    }
    if (k == 2) {
      CHECK(binary_accuracy(one_vs_rest(cm, 0)) == doctest::Approx(accuracy(cm)).epsilon(1e-14));
      CHECK(binary_accuracy(one_vs_rest(cm, 1)) == doctest::Approx(accuracy(cm)).epsilon(1e-14));
    }
  }
}

TEST_CASE("per-class accuracy") {
  const auto cm = confusion({0, 1, 1, 2}, {0, 1, 2, 2}, 3);
  const auto acc = per_class_accuracy(cm);
  REQUIRE(acc.size() == 3);
  CHECK(acc[0] == 100.0);
  CHECK(acc[1] == 75.0);  // tp 1, fp 1, tn 2
  CHECK(acc[2] == 75.0);  // tp 1, fn 1, tn 2
}

// ---------------------------------------------------------------------------
// reports

TEST_CASE("run report JSON round trip") {
  RunReport r;
  r.model = tiny_defaults();
  r.dataset = "ucihar-features";
  r.split = "fold3";
  r.fold = 2;
  r.seed = 1234567890123ULL;
  r.train.epochs = 7;
  r.train.learning_rate = 3e-4;
  r.preprocess.cutoff_hz = 12.5;
  r.preprocess.norm = NormMode::UnitL2;
  r.sample_rate_hz = 50.0;
  r.input_hash = "00ff";
  r.train_samples = 672;
  r.test_samples = 168;
  r.batch_size = 21;
  r.trainable_parameters = 4242;
  r.initial_loss = std::log(12.0);
  r.loss = {2.1, 1.0 / 3.0, 0.1};
  r.train_accuracy = {10.0, 50.0, 99.5};
  r.seconds = 0.125;
  r.confusion = confusion({0, 1, 1}, {0, 1, 0}, 2);
  r.accuracy_pct = accuracy(r.confusion);
  const auto back = nlohmann::json::parse(nlohmann::json(r).dump()).get<RunReport>();
  CHECK(back == r);
  r.error = "boom";
  CHECK(nlohmann::json::parse(nlohmann::json(r).dump()).get<RunReport>() == r);
}

TEST_CASE("grid over the feature-vector enumeration") {
  const PreparedData data = toy_features();
  GridOptions o;
  o.configs = enumerate_architectures(InputKind::SingleFeatureVector, base_config(data, tiny_defaults()));
  REQUIRE(o.configs.size() == 18);
  std::reverse(o.configs.begin(), o.configs.end());  // order must not matter
  o.train.epochs = 2;
  o.train.seed = 7;
  const auto grid = run_grid(data, o);
  REQUIRE(grid.entries.size() == 18);
  for (std::size_t i = 1; i < grid.entries.size(); ++i) CHECK(canonical_less(grid.entries[i - 1].model, grid.entries[i].model));
  for (std::size_t i = 0; i < 18; i += 2) {
    CHECK(grid.entries[i].model.first == grid.entries[i + 1].model.first);
    CHECK_FALSE(grid.entries[i].model.intermediate_fusion);
    CHECK(grid.entries[i + 1].model.intermediate_fusion);
  }
  for (const auto& e : grid.entries) {
    REQUIRE(e.runs.size() == 1);
    const auto& r = e.runs[0];
    CHECK(r.ok());
    CHECK(r.split == "test");
    CHECK(r.test_samples == 9);
    CHECK(r.confusion.total() == 9);
    CHECK(r.accuracy_pct == accuracy(r.confusion));
    CHECK(r.loss.size() == 2);
    CHECK(r.batch_size == 1);
    CHECK(r.initial_loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
  const std::string csv = grid_csv(grid);
  CHECK(count_lines(csv) == 19);
  CHECK(csv.rfind("first,second,fusion,split,seed,accuracy_pct,epochs,lr\n", 0) == 0);
  CHECK(csv.find("\ncnn1d,cnn1d,off,test,7,") != std::string::npos);
  CHECK(csv.find(",2,0.001\n") != std::string::npos);

  // deterministic across invocations and worker counts
  o.workers = 3;
  CHECK(grid_csv(run_grid(data, o)) == csv);

  // JSON round trip and accuracies recomputable from embedded matrices
  const auto j = nlohmann::json::parse(grid_json(grid).dump());
  const GridResult back = grid_from_json(j);
  REQUIRE(back.entries.size() == grid.entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    CHECK(back.entries[i].runs == grid.entries[i].runs);
    CHECK(accuracy(back.entries[i].runs[0].confusion) == back.entries[i].runs[0].accuracy_pct);
  }
  CHECK(grid_csv(back) == csv);
}

TEST_CASE("grid records failures and keeps going") {
  const PreparedData data = toy_features();
  GridOptions o;
  const ModelConfig good = base_config(data, tiny_defaults());
  ModelConfig bad = good;
  bad.first = NetKind::LSTM;
  bad.class_count = 2;  // labels go up to 2
  o.configs = {bad, good};
  o.train.epochs = 1;
  const auto grid = run_grid(data, o);
  REQUIRE(grid.entries.size() == 2);
  CHECK(grid.entries[0].model == good);
  CHECK(grid.entries[0].runs[0].ok());
  CHECK_FALSE(grid.entries[1].runs[0].ok());
  CHECK(grid.entries[1].failures == 1);
  CHECK(grid.entries[1].runs[0].error.find("3 classes, model expects 2") != std::string::npos);
  const std::string csv = grid_csv(grid);
  CHECK(csv.find("lstm,cnn1d,on,test,0,,1,") != std::string::npos);
}

TEST_CASE("k-fold grid: per-fold reports, mean and best") {
  const PreparedData data = toy_dual(20);
  GridOptions o;
  ModelConfig cfg = base_config(data, tiny_config(NetKind::CNN1D, NetKind::LSTM, true));
  o.configs = {cfg};
  cfg.intermediate_fusion = false;
  o.configs.push_back(cfg);
  o.folds = 5;
  o.train.epochs = 3;
  const auto grid = run_grid(data, o);
  REQUIRE(grid.entries.size() == 2);
  for (const auto& e : grid.entries) {
    REQUIRE(e.runs.size() == 5);
    double sum = 0.0, best = 0.0;
    std::set<std::string> tested;
    for (int f = 0; f < 5; ++f) {
      const auto& r = e.runs[static_cast<std::size_t>(f)];
      CHECK(r.ok());
      CHECK(r.fold == f);
      CHECK(r.split == "fold" + std::to_string(f + 1));
      CHECK(r.test_samples == 4);
      CHECK(r.train_samples == 16);
      sum += r.accuracy_pct;
      best = std::max(best, r.accuracy_pct);
    }
    CHECK(std::abs(e.mean_accuracy - sum / 5.0) <= 1e-12);
    CHECK(e.best_accuracy == best);
  }
  const std::string csv = grid_csv(grid);
  CHECK(count_lines(csv) == 1 + 2 * 7);
  CHECK(csv.find("cnn1d,lstm,off,mean,0,") != std::string::npos);
  CHECK(csv.find("cnn1d,lstm,on,best,0,") != std::string::npos);

  o.only_folds = {1, 3};
  const auto partial = run_grid(data, o);
  CHECK(partial.entries[0].runs.size() == 2);
  CHECK(partial.entries[0].runs[1].split == "fold4");
  CHECK(partial.entries[0].runs[1].confusion == grid.entries[0].runs[3].confusion);
}

TEST_CASE("grid resumes from cached runs") {
  synth::TempDir dir("resume");
  const PreparedData data = toy_features();
  GridOptions o;
  o.configs = enumerate_architectures(InputKind::SingleFeatureVector, base_config(data, tiny_defaults()));
  o.configs.resize(4);
  o.train.epochs = 2;
  o.cache_dir = dir.path / "runs";
  int hits = 0, misses = 0;
  o.progress = [&](const RunReport&, bool cached, std::size_t, std::size_t) { (cached ? hits : misses)++; };
  const auto first = run_grid(data, o);
  CHECK(misses == 4);
  CHECK(hits == 0);
  // simulate an interrupted run: drop one cached entry
  auto files = std::vector<fs::path>(fs::directory_iterator(o.cache_dir), fs::directory_iterator());
  REQUIRE(files.size() == 4);
  fs::remove(files[0]);
  hits = misses = 0;
  const auto second = run_grid(data, o);
  CHECK(hits == 3);
  CHECK(misses == 1);
  CHECK(grid_csv(second) == grid_csv(first));
  // a changed hyperparameter is a different run
  o.train.learning_rate = 2e-3;
  hits = misses = 0;
  run_grid(data, o);
  CHECK(misses == 4);
}

TEST_CASE("emit_report writes CSV and JSON") {
  synth::TempDir dir("emit");
  const PreparedData data = toy_features();
  GridOptions o;
  o.configs = {base_config(data, tiny_defaults())};
  o.train.epochs = 1;
  const auto grid = run_grid(data, o);
  emit_report(grid, ReportFormat::Csv, dir.path / "a" / "grid.csv");
  emit_report(grid, ReportFormat::Json, dir.path / "a" / "grid.json");
  CHECK(read_text(dir.path / "a" / "grid.csv") == grid_csv(grid));
  const auto j = nlohmann::json::parse(read_text(dir.path / "a" / "grid.json"));
  CHECK(grid_from_json(j).entries[0].runs == grid.entries[0].runs);
  // every defaulted hyperparameter is present
  const auto& run = j["entries"][0]["runs"][0];
  for (const char* key : {"learning_rate", "beta1", "beta2", "epsilon", "epochs", "batch_size"}) CHECK(run["train"].contains(key));
  for (const char* key : {"cutoff_hz", "norm", "filter_order", "length"}) CHECK(run["preprocess"].contains(key));
  for (const char* key : {"kernel_1d", "stride_1d", "kernel_2d", "stride_2d", "clstm_steps", "first_width"}) {
    CHECK(run["model"].contains(key));
  }
}

// ---------------------------------------------------------------------------
// prepared cache

TEST_CASE("prepare: USC-HAD fixture, cache hit on second call") {
  synth::TempDir dir("prep");
  const auto first = prepare_dataset(kMini, DatasetKind::UscHad, PreprocessOptions{}, dir.path);
  CHECK_FALSE(first.cache_hit);
  const auto& d = first.data;
  CHECK(d.train.size() == 10);
  CHECK(d.train.branch_count() == 2);
  CHECK(d.train.blocks[0].shape() == Shape{10, 1024, 3});
  CHECK(d.train.class_count() == 12);
  CHECK(d.train.ids.size() == 10);
  CHECK_FALSE(d.test.has_value());
  CHECK(d.sample_rate_hz == 100.0);
  CHECK(d.input_hash.size() == 16);

  const auto json_before = read_text(dir.path / "prepared.json");
  const auto stamp = fs::last_write_time(dir.path / "prepared.bin");
  const auto second = prepare_dataset(kMini, DatasetKind::UscHad, PreprocessOptions{}, dir.path);
  CHECK(second.cache_hit);
  CHECK(fs::last_write_time(dir.path / "prepared.bin") == stamp);
  CHECK(read_text(dir.path / "prepared.json") == json_before);
  CHECK(second.data.train.blocks[1] == d.train.blocks[1]);
  CHECK(second.data.train.ids == d.train.ids);

  // the cache records the preprocessing parameters
  const auto meta = nlohmann::json::parse(json_before);
  CHECK(meta["preprocess"]["cutoff_hz"] == 20.0);
  CHECK(meta["preprocess"]["norm"] == "zscore");
  CHECK(meta["preprocess"]["filter_order"] == 3);

  PreprocessOptions l2;
  l2.norm = NormMode::UnitL2;
  const auto third = prepare_dataset(kMini, DatasetKind::UscHad, l2, dir.path);
  CHECK_FALSE(third.cache_hit);
  CHECK(third.data.input_hash != d.input_hash);
  CHECK(load_prepared(dir.path).options.norm == NormMode::UnitL2);
}

TEST_CASE("prepare: input change invalidates the cache") {
  synth::TempDir src("prepsrc"), cache("prepcache");
  synth::write_usc_like(src.path, 1, 2, 5, 40);
  const auto a = prepare_dataset(src.path, DatasetKind::UscHad, PreprocessOptions{}, cache.path);
  CHECK(a.data.train.size() == 10);
  {
    std::ofstream out(src.path / "s01_a01_t1.csv", std::ios::app);
    out << "9,1,1,1,1,1,1\n";
  }
  const auto b = prepare_dataset(src.path, DatasetKind::UscHad, PreprocessOptions{}, cache.path);
  CHECK_FALSE(b.cache_hit);
  CHECK(b.data.input_hash != a.data.input_hash);
}

TEST_CASE("prepare: UCI-HAR features and raw") {
  synth::TempDir src("prepuci"), cf("prepf"), cr("prepr");
  synth::write_uci_features(src.path, 30, 12);
  synth::write_uci_raw(src.path, "train", 30);
  synth::write_uci_raw(src.path, "test", 12);
  const auto f = prepare_dataset(src.path, DatasetKind::UciHarFeatures, PreprocessOptions{}, cf.path).data;
  CHECK_FALSE(f.preprocessed);
  CHECK(f.train.blocks[0].shape() == Shape{30, 561, 1});
  REQUIRE(f.test.has_value());
  CHECK(f.test->size() == 12);
  CHECK(base_config(f).input_kind == InputKind::SingleFeatureVector);
  CHECK(base_config(f).input_length == 561);
  CHECK(base_config(f).class_count == 6);

  const auto r = prepare_dataset(src.path, DatasetKind::UciHarRaw, PreprocessOptions{}, cr.path).data;
  CHECK(r.train.blocks.size() == 2);
  CHECK(r.train.blocks[0].shape() == Shape{30, 128, 3});
  CHECK(r.test->blocks[1].shape() == Shape{12, 128, 3});
  CHECK(r.sample_rate_hz == 50.0);
  CHECK(r.options.length == 0);
  const auto loaded = load_prepared(cr.path);
  CHECK(loaded.test->blocks[0] == r.test->blocks[0]);
  CHECK(loaded.train.labels == r.train.labels);
}

TEST_CASE("prepare: errors") {
  synth::TempDir src("preperr"), cache("preperrc");
  synth::write_uci_features(src.path, 6, 6);
  fs::remove(src.path / "train" / "y_train.txt");
  try {
    prepare_dataset(src.path, DatasetKind::UciHarFeatures, PreprocessOptions{}, cache.path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("y_train.txt") != std::string::npos);
  }
  CHECK_THROWS_AS(load_prepared(cache.path), LoadError);
  CHECK_THROWS_AS(parse_dataset_kind("uci"), ConfigError);

  synth::TempDir good("prepgood");
  prepare_dataset(kMini, DatasetKind::UscHad, PreprocessOptions{}, good.path);
  fs::resize_file(good.path / "prepared.bin", fs::file_size(good.path / "prepared.bin") - 8);
  try {
    load_prepared(good.path);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
  // a damaged cache is rebuilt rather than trusted
  const auto rebuilt = prepare_dataset(kMini, DatasetKind::UscHad, PreprocessOptions{}, good.path);
  CHECK_FALSE(rebuilt.cache_hit);
  CHECK_NOTHROW(load_prepared(good.path));
}

TEST_CASE("fnv1a reference values") {
  // published FNV-1a 64 test vectors
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}
