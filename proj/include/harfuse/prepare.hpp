#ifndef HARFUSE_PREPARE_HPP
#define HARFUSE_PREPARE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "harfuse/data.hpp"

namespace harfuse {

enum class DatasetKind { UscHad, UciHarRaw, UciHarFeatures };

std::string to_string(DatasetKind kind);
/// "usc-had" | "ucihar-raw" | "ucihar-features".
DatasetKind parse_dataset_kind(const std::string& text);
InputKind input_kind(DatasetKind kind);
/// Native sampling rate of the pre-segmented UCI-HAR signals.
constexpr double kUciSampleRateHz = 50.0;

constexpr int kPreparedVersion = 1;

/// Parsed and preprocessed samples, ready for training. USC-HAD keeps every
/// recording in `train` (folds are drawn later); UCI-HAR carries its fixed
/// train/test split.
struct PreparedData {
  DatasetKind kind = DatasetKind::UscHad;
  std::string input_hash;  // 16 hex digits over input bytes and options
  PreprocessOptions options;
  /// False for feature vectors, which are used as published.
  bool preprocessed = true;
  double sample_rate_hz = 0.0;
  Dataset train;
  std::optional<Dataset> test;
  std::vector<std::string> warnings;
};

struct PrepareOutcome {
  PreparedData data;
  bool cache_hit = false;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Hash over the input files that `kind` reads plus the preprocessing options.
std::string input_fingerprint(const fs::path& data_dir, DatasetKind kind, const PreprocessOptions& options);

/// Parses and preprocesses `data_dir`, storing prepared.json + prepared.bin in
/// `cache_dir`. When the cache already holds the same fingerprint it is
/// loaded instead and `cache_hit` is set.
PrepareOutcome prepare_dataset(const fs::path& data_dir, DatasetKind kind, const PreprocessOptions& options,
                               const fs::path& cache_dir);

/// Throws LoadError when the cache is missing, truncated or from another version.
PreparedData load_prepared(const fs::path& cache_dir);
void save_prepared(const PreparedData& data, const fs::path& cache_dir);

}  // namespace harfuse

#endif  // HARFUSE_PREPARE_HPP
