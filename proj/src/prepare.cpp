#include "harfuse/prepare.hpp"

#include <algorithm>
#include <fstream>

#include "harfuse/serialize.hpp"

namespace harfuse {

using nlohmann::json;

void to_json(json& j, const PreprocessOptions& o) {
  j = json{{"filter", o.filter},
           {"filter_order", kFilterOrder},
           {"cutoff_hz", o.cutoff_hz},
           {"norm", to_string(o.norm)},
           {"length", o.length}};
}

void from_json(const json& j, PreprocessOptions& o) {
  j.at("filter").get_to(o.filter);
  j.at("cutoff_hz").get_to(o.cutoff_hz);
  o.norm = parse_norm_mode(j.at("norm").get<std::string>());
  j.at("length").get_to(o.length);
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::UscHad: return "usc-had";
    case DatasetKind::UciHarRaw: return "ucihar-raw";
    case DatasetKind::UciHarFeatures: return "ucihar-features";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& text) {
  for (DatasetKind k : {DatasetKind::UscHad, DatasetKind::UciHarRaw, DatasetKind::UciHarFeatures}) {
    if (text == to_string(k)) return k;
  }
  throw ConfigError("unknown dataset kind '" + text + "' (usc-had | ucihar-raw | ucihar-features)");
}

InputKind input_kind(DatasetKind kind) {
  return kind == DatasetKind::UciHarFeatures ? InputKind::SingleFeatureVector : InputKind::RawDualBranch;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

/// Input files `kind` reads, relative to `dir`, in a fixed order.
std::vector<fs::path> input_files(const fs::path& dir, DatasetKind kind) {
  std::vector<fs::path> out;
  switch (kind) {
    case DatasetKind::UciHarFeatures:
      for (const std::string s : {"train", "test"}) {
        out.push_back(fs::path(s) / ("X_" + s + ".txt"));
        out.push_back(fs::path(s) / ("y_" + s + ".txt"));
      }
      break;
    case DatasetKind::UciHarRaw:
      for (const std::string s : {"train", "test"}) {
        for (const std::string sensor : {"total_acc", "body_gyro"}) {
          for (char a : {'x', 'y', 'z'}) out.push_back(fs::path(s) / "Inertial Signals" / (sensor + "_" + a + "_" + s + ".txt"));
        }
        out.push_back(fs::path(s) / ("y_" + s + ".txt"));
      }
      break;
    case DatasetKind::UscHad: {
      out.push_back("manifest.json");
      const auto m = load_manifest(dir / "manifest.json");
      for (const auto& e : m.recordings) out.push_back(e.path);
      break;
    }
  }
  return out;
}

PreprocessOptions effective_options(DatasetKind kind, PreprocessOptions o) {
  if (kind == DatasetKind::UciHarRaw) o.length = 0;  // fixed 128-sample windows
  return o;
}

}  // namespace

std::string input_fingerprint(const fs::path& data_dir, DatasetKind kind, const PreprocessOptions& options) {
  std::uint64_t h = fnv1a("harfuse-prepared/" + std::to_string(kPreparedVersion) + "/" + to_string(kind));
  h = fnv1a(json(effective_options(kind, options)).dump(), h);
  std::vector<char> chunk(1 << 16);
  for (const auto& rel : input_files(data_dir, kind)) {
    const fs::path p = rel.is_absolute() ? rel : data_dir / rel;
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ParseError(p.string() + ": missing file");
    h = fnv1a(rel.generic_string(), h);
    h = fnv1a(std::string_view("\0", 1), h);
    while (in) {
      in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
      h = fnv1a(std::string_view(chunk.data(), static_cast<std::size_t>(in.gcount())), h);
    }
  }
  return hex64(h);
}

namespace {

json split_meta(const Dataset& d) {
  json blocks = json::array();
  for (const auto& b : d.blocks) blocks.push_back(b.shape());
  return json{{"name", d.name}, {"count", d.size()}, {"blocks", blocks}, {"labels", d.labels}, {"ids", d.ids}};
}

Dataset split_from_meta(const json& j, const std::vector<std::string>& class_names) {
  Dataset d;
  d.name = j.at("name").get<std::string>();
  d.labels = j.at("labels").get<std::vector<int>>();
  d.ids = j.at("ids").get<std::vector<std::string>>();
  d.class_names = class_names;
  for (const auto& s : j.at("blocks")) d.blocks.emplace_back(s.get<Shape>());
  return d;
}

PreparedData build(const fs::path& dir, DatasetKind kind, const PreprocessOptions& requested) {
  PreparedData p;
  p.kind = kind;
  p.options = effective_options(kind, requested);
  switch (kind) {
    case DatasetKind::UciHarFeatures: {
      const auto f = parse_ucihar_features(dir);
      p.preprocessed = false;
      p.train = to_dataset(f.train, "ucihar-features/train");
      p.test = to_dataset(f.test, "ucihar-features/test");
      break;
    }
    case DatasetKind::UciHarRaw: {
      p.sample_rate_hz = kUciSampleRateHz;
      for (const std::string split : {"train", "test"}) {
        auto windows = parse_ucihar_raw(dir, split);
        std::vector<std::string> warnings;
        for (std::size_t i = 0; i < windows.size(); ++i) {
          Recording r{split + "/" + std::to_string(i), 0, windows[i].label, 0, windows[i].accel, windows[i].gyro, kUciSampleRateHz};
          r = preprocess(r, p.options, &warnings);
          windows[i].accel = std::move(r.accel);
          windows[i].gyro = std::move(r.gyro);
        }
        p.warnings.insert(p.warnings.end(), warnings.begin(), warnings.end());
        Dataset d = to_dataset(windows, "ucihar-raw/" + split);
        if (split == "train") p.train = std::move(d);
        else p.test = std::move(d);
      }
      break;
    }
    case DatasetKind::UscHad: {
      const auto manifest = load_manifest(dir / "manifest.json");
      auto recordings = parse_canonical_csv(dir / "manifest.json");
      p.sample_rate_hz = manifest.sample_rate_hz;
      for (auto& r : recordings) {
        r.check(static_cast<Index>(manifest.classes.size()));
        r = preprocess(r, p.options, &p.warnings);
      }
      p.train = to_dataset(recordings, manifest.classes, "usc-had");
      break;
    }
  }
  p.train.check();
  if (p.test) p.test->check();
  return p;
}

}  // namespace

void save_prepared(const PreparedData& p, const fs::path& dir) {
  fs::create_directories(dir);
  json splits = json::object();
  splits["train"] = split_meta(p.train);
  if (p.test) splits["test"] = split_meta(*p.test);
  const json meta{{"format_version", kPreparedVersion},
                  {"kind", to_string(p.kind)},
                  {"input_hash", p.input_hash},
                  {"preprocess", p.options},
                  {"preprocessed", p.preprocessed},
                  {"sample_rate_hz", p.sample_rate_hz},
                  {"class_names", p.train.class_names},
                  {"warnings", p.warnings},
                  {"splits", splits}};
  std::vector<const Tensor*> tensors;
  for (const auto& b : p.train.blocks) tensors.push_back(&b);
  if (p.test) {
    for (const auto& b : p.test->blocks) tensors.push_back(&b);
  }
  // payload first, so a reader never sees metadata without its data
  write_tensor_file(dir / "prepared.bin", tensors);
  std::ofstream out(dir / "prepared.json");
  if (!out) throw Error("cannot write " + (dir / "prepared.json").string());
  out << meta.dump(1) << "\n";
}

PreparedData load_prepared(const fs::path& dir) {
  const fs::path meta_path = dir / "prepared.json";
  std::ifstream in(meta_path);
  if (!in) throw LoadError("no prepared dataset at " + dir.string() + " (run `harfuse prepare` first)");
  PreparedData p;
  try {
    const json meta = json::parse(in);
    if (meta.at("format_version").get<int>() != kPreparedVersion) {
      throw LoadError(meta_path.string() + ": format version " + meta.at("format_version").dump() + ", expected " +
                      std::to_string(kPreparedVersion));
    }
    p.kind = parse_dataset_kind(meta.at("kind").get<std::string>());
    p.input_hash = meta.at("input_hash").get<std::string>();
    p.options = meta.at("preprocess").get<PreprocessOptions>();
    p.preprocessed = meta.at("preprocessed").get<bool>();
    p.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
    p.warnings = meta.at("warnings").get<std::vector<std::string>>();
    const auto classes = meta.at("class_names").get<std::vector<std::string>>();
    const json& splits = meta.at("splits");
    p.train = split_from_meta(splits.at("train"), classes);
    if (splits.contains("test")) p.test = split_from_meta(splits.at("test"), classes);
  } catch (const json::exception& e) {
    throw LoadError(meta_path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(meta_path.string() + ": " + e.what());
  }
  std::vector<Tensor*> targets;
  for (auto& b : p.train.blocks) targets.push_back(&b);
  if (p.test) {
    for (auto& b : p.test->blocks) targets.push_back(&b);
  }
  read_tensor_file(dir / "prepared.bin", targets);
  try {
    p.train.check();
    if (p.test) p.test->check();
  } catch (const Error& e) {
    throw LoadError(meta_path.string() + ": " + e.what());
  }
  return p;
}

PrepareOutcome prepare_dataset(const fs::path& data_dir, DatasetKind kind, const PreprocessOptions& options,
                               const fs::path& cache_dir) {
  if (!fs::is_directory(data_dir)) throw ParseError(data_dir.string() + ": not a directory");
  const std::string hash = input_fingerprint(data_dir, kind, options);
  if (fs::exists(cache_dir / "prepared.json")) {
    try {
      PreparedData cached = load_prepared(cache_dir);
      if (cached.input_hash == hash && cached.kind == kind) return {std::move(cached), true};
    } catch (const LoadError&) {
      // stale or damaged; rebuild below
    }
  }
  PreparedData p = build(data_dir, kind, options);
  p.input_hash = hash;
  save_prepared(p, cache_dir);
  return {std::move(p), false};
}

}  // namespace harfuse
