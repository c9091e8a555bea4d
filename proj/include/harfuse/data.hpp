#ifndef HARFUSE_DATA_HPP
#define HARFUSE_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "harfuse/dataset.hpp"
#include "harfuse/model.hpp"
#include "harfuse/signal.hpp"

namespace harfuse {

namespace fs = std::filesystem;

/// One continuous IMU recording. accel in g, gyro in deg/s, both [T, 3].
struct Recording {
  std::string id;
  int subject = 0;
  int label = 0;
  int trial = 0;
  Tensor accel;
  Tensor gyro;
  double sample_rate_hz = 100.0;

  Index length() const { return accel.dim(0); }
  /// Throws ShapeError / LabelError when the invariants fail.
  void check(Index class_count) const;
};

struct FeatureSample {
  Tensor features;  // [561]
  int label = 0;
};

/// One fixed-width window of the pre-segmented raw signals.
struct RawWindow {
  Tensor accel;  // [128, 3]
  Tensor gyro;   // [128, 3]
  int label = 0;
};

struct FoldSplit {
  int fold = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

struct ManifestEntry {
  std::string id;
  int subject = 0;
  int activity = 0;  // 0-based index into CanonicalManifest::classes
  int trial = 0;
  std::string path;  // relative to the manifest directory unless absolute

  bool operator==(const ManifestEntry&) const = default;
};

struct CanonicalManifest {
  std::string dataset;
  double sample_rate_hz = 100.0;
  std::vector<std::string> classes;
  std::vector<ManifestEntry> recordings;

  bool operator==(const CanonicalManifest&) const = default;
};

constexpr Index kUciFeatureCount = 561;
constexpr Index kUciWindowLength = 128;

/// Activity names in label order (0..5).
const std::vector<std::string>& ucihar_class_names();

struct UciHarFeatures {
  std::vector<FeatureSample> train;
  std::vector<FeatureSample> test;
};

/// Reads <dir>/{train,test}/X_*.txt and y_*.txt. Labels 1..6 become 0..5.
UciHarFeatures parse_ucihar_features(const fs::path& dir);

/// Reads the nine per-axis signal files of one split ("train" or "test");
/// total_acc axes form the accelerometer block, body_gyro axes the gyroscope block.
std::vector<RawWindow> parse_ucihar_raw(const fs::path& dir, const std::string& split);

/// Loads and validates manifest.json: unique ids, known activities, existing files.
CanonicalManifest load_manifest(const fs::path& manifest_path);
void save_manifest(const CanonicalManifest& manifest, const fs::path& manifest_path);

/// Reads one canonical CSV (header t,ax,ay,az,gx,gy,gz) into accel and gyro.
void read_canonical_csv(const fs::path& csv, Tensor& accel, Tensor& gyro);
void write_canonical_csv(const fs::path& csv, const Tensor& accel, const Tensor& gyro, double sample_rate_hz);

/// Every recording listed in the manifest, ordered by id.
std::vector<Recording> parse_canonical_csv(const fs::path& manifest_path);

struct PreprocessOptions {
  bool filter = true;
  double cutoff_hz = kDefaultCutoffHz;
  NormMode norm = NormMode::ZScore;
  /// 0 keeps the native length.
  Index length = kStandardLength;

  bool operator==(const PreprocessOptions&) const = default;
};

/// Low-pass, length standardization, then per-channel normalization, applied
/// to both modalities.
Recording preprocess(const Recording& r, const PreprocessOptions& options, std::vector<std::string>* warnings = nullptr);

/// Seeded, label-stratified k-fold split. Within each class (ascending label)
/// the shuffled ids are dealt round-robin, continuing the fold counter across
/// classes so fold sizes differ by at most one. Classes with fewer than k
/// members are pooled and dealt unstratified after the rest, with a warning.
std::vector<FoldSplit> kfold_split(const std::vector<std::string>& ids, const std::vector<int>& labels, int k,
                                   std::uint64_t seed, std::vector<std::string>* warnings = nullptr);
std::vector<FoldSplit> kfold_split(const std::vector<Recording>& recordings, int k, std::uint64_t seed,
                                   std::vector<std::string>* warnings = nullptr);

/// Lays a single [T, 3] block out for `target`:
/// 1D kinds unchanged; CNN2D [3, T, 1]; CLSTM1D [steps, T/steps, 3];
/// CLSTM2D [steps, 3, T/steps, 1]. Throws ConfigError if T % steps != 0 for CLSTM.
Tensor reshape_for_model(const Tensor& block, NetKind target, Index clstm_steps = 8);

/// Dataset assembly: blocks [N, L, C] in input order.
Dataset to_dataset(const std::vector<FeatureSample>& samples, const std::string& name);
Dataset to_dataset(const std::vector<RawWindow>& windows, const std::string& name);
/// Recordings must share one length; ids are carried over.
Dataset to_dataset(const std::vector<Recording>& recordings, const std::vector<std::string>& class_names,
                   const std::string& name);

}  // namespace harfuse

#endif  // HARFUSE_DATA_HPP
