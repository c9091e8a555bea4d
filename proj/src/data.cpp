#include "harfuse/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <json.hpp>
#include <set>
#include <sstream>

namespace harfuse {

using nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

/// Splits `text` into lines (LF or CRLF), skipping a trailing empty line.
std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    pos = end + 1;
  }
  while (!out.empty() && out.back().find_first_not_of(" \t") == std::string_view::npos) out.pop_back();
  return out;
}

bool parse_double(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

/// Whitespace-separated numbers of one line.
std::vector<std::string_view> tokens(std::string_view line, char sep = 0) {
  std::vector<std::string_view> out;
  if (sep != 0) {
    std::size_t pos = 0;
    while (true) {
      const std::size_t end = line.find(sep, pos);
      std::string_view tok = line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
      while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
      while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.remove_suffix(1);
      out.push_back(tok);
      if (end == std::string_view::npos) break;
      pos = end + 1;
    }
    return out;
  }
  std::size_t pos = 0;
  while (true) {
    pos = line.find_first_not_of(" \t", pos);
    if (pos == std::string_view::npos) break;
    std::size_t end = line.find_first_of(" \t", pos);
    if (end == std::string_view::npos) end = line.size();
    out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

/// Fixed-width whitespace matrix, one row per line.
Tensor read_matrix(const fs::path& path, Index cols) {
  const std::string text = slurp(path);
  const auto lines = lines_of(text);
  Tensor out({static_cast<Index>(lines.size()), cols});
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto toks = tokens(lines[r]);
    if (static_cast<Index>(toks.size()) != cols) {
      fail(path, r + 1, "row " + std::to_string(r + 1) + " has " + std::to_string(toks.size()) + " columns, expected " +
                            std::to_string(cols));
    }
    for (Index c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!parse_double(toks[static_cast<std::size_t>(c)], v) || !std::isfinite(v)) {
        fail(path, r + 1, "malformed number '" + std::string(toks[static_cast<std::size_t>(c)]) + "' in column " +
                              std::to_string(c + 1));
      }
      out(static_cast<Index>(r), c) = v;
    }
  }
  return out;
}

std::vector<int> read_labels(const fs::path& path, int lo, int hi) {
  const std::string text = slurp(path);
  const auto lines = lines_of(text);
  std::vector<int> out;
  out.reserve(lines.size());
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto toks = tokens(lines[r]);
    int v = 0;
    if (toks.size() != 1 ||
        std::from_chars(toks[0].data(), toks[0].data() + toks[0].size(), v).ptr != toks[0].data() + toks[0].size()) {
      fail(path, r + 1, "expected one integer label");
    }
    if (v < lo || v > hi) {
      fail(path, r + 1, "label " + std::to_string(v) + " outside " + std::to_string(lo) + ".." + std::to_string(hi));
    }
    out.push_back(v - lo);
  }
  return out;
}

fs::path require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw ParseError(p.string() + ": missing file");
  return p;
}

std::vector<FeatureSample> feature_split(const fs::path& dir, const std::string& split) {
  const Tensor x = read_matrix(require_file(dir / split / ("X_" + split + ".txt")), kUciFeatureCount);
  const fs::path ypath = require_file(dir / split / ("y_" + split + ".txt"));
  const auto y = read_labels(ypath, 1, 6);
  if (static_cast<Index>(y.size()) != x.dim(0)) {
    throw ParseError(ypath.string() + ": " + std::to_string(y.size()) + " labels for " + std::to_string(x.dim(0)) +
                     " feature rows");
  }
  std::vector<FeatureSample> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out[i].features = Tensor({kUciFeatureCount});
    std::copy_n(x.data() + static_cast<Index>(i) * kUciFeatureCount, kUciFeatureCount, out[i].features.data());
    out[i].label = y[i];
  }
  return out;
}

}  // namespace

void Recording::check(Index class_count) const {
  if (accel.rank() != 2 || accel.dim(1) != 3 || gyro.rank() != 2 || gyro.dim(1) != 3) {
    throw ShapeError("recording " + id + ": expected [T, 3] blocks, got " + shape_string(accel.shape()) + " and " +
                     shape_string(gyro.shape()));
  }
  if (accel.dim(0) != gyro.dim(0)) {
    throw ShapeError("recording " + id + ": accel and gyro lengths differ (" + std::to_string(accel.dim(0)) + " vs " +
                     std::to_string(gyro.dim(0)) + ")");
  }
  if (label < 0 || label >= class_count) throw LabelError("recording " + id + ": label " + std::to_string(label) + " out of range");
}

const std::vector<std::string>& ucihar_class_names() {
  static const std::vector<std::string> names = {"WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS",
                                                 "SITTING", "STANDING",         "LAYING"};
  return names;
}

UciHarFeatures parse_ucihar_features(const fs::path& dir) {
  return {feature_split(dir, "train"), feature_split(dir, "test")};
}

std::vector<RawWindow> parse_ucihar_raw(const fs::path& dir, const std::string& split) {
  if (split != "train" && split != "test") throw ConfigError("split must be train or test, got '" + split + "'");
  const fs::path signals = dir / split / "Inertial Signals";
  const auto axis = [&](const std::string& sensor, char a) {
    const fs::path p = require_file(signals / (sensor + "_" + a + "_" + split + ".txt"));
    return std::make_pair(p, read_matrix(p, kUciWindowLength));
  };
  std::vector<std::pair<fs::path, Tensor>> acc, gyr;
  for (char a : {'x', 'y', 'z'}) {
    acc.push_back(axis("total_acc", a));
    gyr.push_back(axis("body_gyro", a));
  }
  // body_acc is part of the archive but unused; still checked for row agreement
  for (char a : {'x', 'y', 'z'}) {
    const fs::path p = signals / ("body_acc_" + std::string(1, a) + "_" + split + ".txt");
    if (fs::is_regular_file(p)) acc.emplace_back(p, read_matrix(p, kUciWindowLength));
  }
  const fs::path ypath = require_file(dir / split / ("y_" + split + ".txt"));
  const auto y = read_labels(ypath, 1, 6);
  const auto rows = static_cast<Index>(y.size());
  for (const auto* group : {&acc, &gyr}) {
    for (const auto& [p, m] : *group) {
      if (m.dim(0) != rows) {
        throw ParseError(p.string() + ": " + std::to_string(m.dim(0)) + " rows, but " + ypath.string() + " has " +
                         std::to_string(rows));
      }
    }
  }
  std::vector<RawWindow> out(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) {
    auto& w = out[static_cast<std::size_t>(i)];
    w.accel = Tensor({kUciWindowLength, 3});
    w.gyro = Tensor({kUciWindowLength, 3});
    for (Index t = 0; t < kUciWindowLength; ++t) {
      for (Index a = 0; a < 3; ++a) {
        w.accel(t, a) = acc[static_cast<std::size_t>(a)].second(i, t);
        w.gyro(t, a) = gyr[static_cast<std::size_t>(a)].second(i, t);
      }
    }
    w.label = y[static_cast<std::size_t>(i)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// canonical CSV + manifest

CanonicalManifest load_manifest(const fs::path& manifest_path) {
  json j;
  try {
    j = json::parse(slurp(manifest_path));
  } catch (const json::parse_error& e) {
    throw ParseError(manifest_path.string() + ": malformed JSON: " + e.what());
  }
  const auto field = [&](const json& obj, const char* key) -> const json& {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(manifest_path.string() + ": missing field '" + key + "'");
    return obj.at(key);
  };
  CanonicalManifest m;
  try {
    m.dataset = field(j, "dataset").get<std::string>();
    m.sample_rate_hz = field(j, "sample_rate_hz").get<double>();
    m.classes = field(j, "classes").get<std::vector<std::string>>();
    const fs::path base = manifest_path.parent_path();
    std::set<std::string> seen;

    for (const auto& r : field(j, "recordings")) {

      ManifestEntry e;
      e.id = field(r, "id").get<std::string>();
      e.subject = field(r, "subject").get<int>();
      e.trial = field(r, "trial").get<int>();
      e.path = field(r, "path").get<std::string>();
      const json& act = field(r, "activity");
      if (act.is_string()) {
        const auto it = std::find(m.classes.begin(), m.classes.end(), act.get<std::string>());
        if (it == m.classes.end()) {
          throw ParseError(manifest_path.string() + ": recording " + e.id + ": unknown activity '" + act.get<std::string>() + "'");
        }
        e.activity = static_cast<int>(it - m.classes.begin());
      } else {
        e.activity = act.get<int>();
      }
      if (e.activity < 0 || e.activity >= static_cast<int>(m.classes.size())) {
        throw ParseError(manifest_path.string() + ": recording " + e.id + ": activity " + std::to_string(e.activity) +
                         " outside 0.." + std::to_string(m.classes.size() - 1));
      }
      if (!seen.insert(e.id).second) throw ParseError(manifest_path.string() + ": duplicate recording id '" + e.id + "'");
      const fs::path p = fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path;
      if (!fs::is_regular_file(p)) throw ParseError(manifest_path.string() + ": recording " + e.id + ": missing file " + p.string());
      m.recordings.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  if (!(m.sample_rate_hz > 0.0)) throw ParseError(manifest_path.string() + ": sample_rate_hz must be positive");
  if (m.classes.empty()) throw ParseError(manifest_path.string() + ": no classes");
  return m;
}

void save_manifest(const CanonicalManifest& m, const fs::path& manifest_path) {
  json j;
  j["dataset"] = m.dataset;
  j["sample_rate_hz"] = m.sample_rate_hz;
  j["classes"] = m.classes;
  j["recordings"] = json::array();
  for (const auto& e : m.recordings) {
    j["recordings"].push_back({{"id", e.id}, {"subject", e.subject}, {"activity", e.activity}, {"trial", e.trial}, {"path", e.path}});
  }
  std::ofstream out(manifest_path);
  if (!out) throw Error("cannot write " + manifest_path.string());
  out << j.dump(2) << "\n";
}

void read_canonical_csv(const fs::path& csv, Tensor& accel, Tensor& gyro) {
  const std::string text = slurp(csv);
  const auto lines = lines_of(text);
  if (lines.empty()) fail(csv, 1, "empty file");
  std::string_view header = lines[0];
  if (header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  const auto names = tokens(header, ',');
  static const char* required[] = {"t", "ax", "ay", "az", "gx", "gy", "gz"};
  std::array<std::size_t, 7> col{};
  for (std::size_t k = 0; k < 7; ++k) {
    const auto it = std::find(names.begin(), names.end(), std::string_view(required[k]));
    if (it == names.end()) fail(csv, 1, std::string("missing column '") + required[k] + "'");
    col[k] = static_cast<std::size_t>(it - names.begin());
  }
  const auto rows = static_cast<Index>(lines.size() - 1);
  accel = Tensor({rows, 3});
  gyro = Tensor({rows, 3});
  for (Index r = 0; r < rows; ++r) {
    const auto line_no = static_cast<std::size_t>(r + 2);
    const auto toks = tokens(lines[static_cast<std::size_t>(r + 1)], ',');
    if (toks.size() != names.size()) {
      fail(csv, line_no, std::to_string(toks.size()) + " fields, header has " + std::to_string(names.size()));
    }
    for (std::size_t k = 0; k < 7; ++k) {
      double v = 0.0;
      if (!parse_double(toks[col[k]], v)) fail(csv, line_no, "malformed value '" + std::string(toks[col[k]]) + "' in column " + required[k]);
      if (!std::isfinite(v)) fail(csv, line_no, std::string("non-finite value in column ") + required[k]);
      if (k >= 1 && k <= 3) accel(r, static_cast<Index>(k - 1)) = v;
      if (k >= 4) gyro(r, static_cast<Index>(k - 4)) = v;
    }
  }
}

void write_canonical_csv(const fs::path& csv, const Tensor& accel, const Tensor& gyro, double sample_rate_hz) {
  if (accel.rank() != 2 || accel.dim(1) != 3 || accel.shape() != gyro.shape()) {
    throw ShapeError("write_canonical_csv: accel " + shape_string(accel.shape()) + " vs gyro " + shape_string(gyro.shape()));
  }
  std::ofstream out(csv);
  if (!out) throw Error("cannot write " + csv.string());
  out << "t,ax,ay,az,gx,gy,gz\n";
  char buf[64];
  for (Index r = 0; r < accel.dim(0); ++r) {
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(r) / sample_rate_hz);
    out << buf;
    for (const Tensor* t : {&accel, &gyro}) {
      for (Index c = 0; c < 3; ++c) {
        std::snprintf(buf, sizeof buf, ",%.17g", (*t)(r, c));
        out << buf;
      }
    }
    out << "\n";
  }
}

std::vector<Recording> parse_canonical_csv(const fs::path& manifest_path) {
  const CanonicalManifest m = load_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  std::vector<Recording> out;
  out.reserve(m.recordings.size());
  for (const auto& e : m.recordings) {
    Recording r;
    r.id = e.id;
    r.subject = e.subject;
    r.label = e.activity;
    r.trial = e.trial;
    r.sample_rate_hz = m.sample_rate_hz;
    read_canonical_csv(fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path, r.accel, r.gyro);
    if (r.length() < 1) throw ParseError((base / e.path).string() + ": no samples");
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const Recording& a, const Recording& b) { return a.id < b.id; });
  return out;
}

// ---------------------------------------------------------------------------

Recording preprocess(const Recording& r, const PreprocessOptions& o, std::vector<std::string>* warnings) {
  Recording out = r;
  std::vector<std::string> local;
  for (Tensor* t : {&out.accel, &out.gyro}) {
    if (o.filter) *t = lowpass_filter(*t, r.sample_rate_hz, o.cutoff_hz);
    if (o.length > 0) *t = standardize_length(*t, o.length);
    *t = normalize(*t, o.norm, &local);
  }
  if (warnings) {
    for (auto& w : local) warnings->push_back("recording " + r.id + ": " + w);
  }
  return out;
}

std::vector<FoldSplit> kfold_split(const std::vector<std::string>& ids, const std::vector<int>& labels, int k,
                                   std::uint64_t seed, std::vector<std::string>* warnings) {
  if (k < 2) throw ConfigError("k-fold split needs k >= 2, got " + std::to_string(k));
  if (ids.size() != labels.size()) throw ShapeError("kfold_split: ids and labels differ in length");
  if (ids.size() < static_cast<std::size_t>(k)) {
    throw ConfigError("k-fold split: " + std::to_string(ids.size()) + " recordings for " + std::to_string(k) + " folds");
  }
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) throw ConfigError("kfold_split: duplicate ids");

  std::map<int, std::vector<std::string>> by_class;
  for (std::size_t i = 0; i < ids.size(); ++i) by_class[labels[i]].push_back(ids[i]);
  Rng rng(seed);
  std::vector<std::vector<std::string>> test(static_cast<std::size_t>(k));
  std::size_t next = 0;
  std::vector<std::string> pooled;
  for (auto& [label, members] : by_class) {
    std::sort(members.begin(), members.end());
    if (members.size() < static_cast<std::size_t>(k)) {
      if (warnings) {
        warnings->push_back("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                            " recordings, fewer than " + std::to_string(k) + " folds; split unstratified");
      }
      pooled.insert(pooled.end(), members.begin(), members.end());
      continue;
    }
    shuffle(members, rng);
    for (auto& id : members) test[next++ % static_cast<std::size_t>(k)].push_back(id);
  }
  shuffle(pooled, rng);
  for (auto& id : pooled) test[next++ % static_cast<std::size_t>(k)].push_back(id);

  std::vector<FoldSplit> out(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    auto& split = out[static_cast<std::size_t>(f)];
    split.fold = f;
    split.test_ids = test[static_cast<std::size_t>(f)];
    std::sort(split.test_ids.begin(), split.test_ids.end());
    for (int g = 0; g < k; ++g) {
      if (g != f) split.train_ids.insert(split.train_ids.end(), test[static_cast<std::size_t>(g)].begin(), test[static_cast<std::size_t>(g)].end());
    }
    std::sort(split.train_ids.begin(), split.train_ids.end());
  }
  return out;
}

std::vector<FoldSplit> kfold_split(const std::vector<Recording>& recordings, int k, std::uint64_t seed,
                                   std::vector<std::string>* warnings) {
  std::vector<std::string> ids;
  std::vector<int> labels;
  for (const auto& r : recordings) {
    ids.push_back(r.id);
    labels.push_back(r.label);
  }
  return kfold_split(ids, labels, k, seed, warnings);
}

Tensor reshape_for_model(const Tensor& block, NetKind target, Index steps) {
  if (block.rank() != 2) throw ShapeError("reshape_for_model: expected [T, C], got " + shape_string(block.shape()));
  const Index t = block.dim(0), c = block.dim(1);
  const bool clstm = target == NetKind::CLSTM1D || target == NetKind::CLSTM2D;
  if (clstm && (steps < 1 || t % steps != 0)) {
    throw ConfigError("reshape_for_model: time length " + std::to_string(t) + " not divisible by " + std::to_string(steps) +
                      " CLSTM steps");
  }
  switch (target) {
    case NetKind::CNN1D:
    case NetKind::LSTM:
      return block;
    case NetKind::CLSTM1D:
      return block.reshaped({steps, t / steps, c});
    case NetKind::CNN2D:
      return permute(block, {1, 0}).reshaped({c, t, 1});
    case NetKind::CLSTM2D:
      return permute(block.reshaped({steps, t / steps, c}), {0, 2, 1}).reshaped({steps, c, t / steps, 1});
  }
  throw ConfigError("reshape_for_model: unknown net kind");
}

Dataset to_dataset(const std::vector<FeatureSample>& samples, const std::string& name) {
  Dataset d;
  d.name = name;
  d.class_names = ucihar_class_names();
  const auto n = static_cast<Index>(samples.size());
  const Index f = n > 0 ? samples[0].features.size() : kUciFeatureCount;
  Tensor x({n, f, 1});
  for (Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    if (s.features.size() != f) throw ShapeError("feature sample " + std::to_string(i) + " has " + std::to_string(s.features.size()) + " values");
    std::copy_n(s.features.data(), f, x.data() + i * f);
    d.labels.push_back(s.label);
  }
  d.blocks.push_back(std::move(x));
  return d;
}

namespace {

Dataset dual_blocks(Index n, Index length, const std::string& name, std::vector<std::string> class_names,
                    const std::function<const Tensor&(Index, int)>& block, const std::function<int(Index)>& label) {
  Dataset d;
  d.name = name;
  d.class_names = std::move(class_names);
  for (int b = 0; b < 2; ++b) {
    Tensor x({n, length, 3});
    for (Index i = 0; i < n; ++i) {
      const Tensor& src = block(i, b);
      if (src.rank() != 2 || src.dim(0) != length || src.dim(1) != 3) {
        throw ShapeError(name + ": sample " + std::to_string(i) + " block " + shape_string(src.shape()) + ", expected [" +
                         std::to_string(length) + "x3]");
      }
      std::copy_n(src.data(), length * 3, x.data() + i * length * 3);
    }
    d.blocks.push_back(std::move(x));
  }
  for (Index i = 0; i < n; ++i) d.labels.push_back(label(i));
  return d;
}

}  // namespace

Dataset to_dataset(const std::vector<RawWindow>& windows, const std::string& name) {
  return dual_blocks(
      static_cast<Index>(windows.size()), kUciWindowLength, name, ucihar_class_names(),
      [&](Index i, int b) -> const Tensor& {
        const auto& w = windows[static_cast<std::size_t>(i)];
        return b == 0 ? w.accel : w.gyro;
      },
      [&](Index i) { return windows[static_cast<std::size_t>(i)].label; });
}

Dataset to_dataset(const std::vector<Recording>& recordings, const std::vector<std::string>& class_names,
                   const std::string& name) {
  const Index length = recordings.empty() ? kStandardLength : recordings[0].length();
  Dataset d = dual_blocks(
      static_cast<Index>(recordings.size()), length, name, class_names,
      [&](Index i, int b) -> const Tensor& {
        const auto& r = recordings[static_cast<std::size_t>(i)];
        return b == 0 ? r.accel : r.gyro;
      },
      [&](Index i) { return recordings[static_cast<std::size_t>(i)].label; });
  for (const auto& r : recordings) d.ids.push_back(r.id);
  return d;
}

}  // namespace harfuse
