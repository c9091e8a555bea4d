#ifndef HARFUSE_TESTS_SYNTHETIC_HPP
#define HARFUSE_TESTS_SYNTHETIC_HPP

// Writers for small archives in the published on-disk formats, so parsers
// and the CLI can be exercised without the real datasets.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "harfuse/data.hpp"

namespace synth {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("harfuse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::string uci_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%15.7e", v);
  return buf;
}

/// Deterministic value for (sample, column) with a class-dependent offset, so
/// a model can separate classes.
inline double uci_value(int row, int col, int label, int salt) {
  return 0.5 * std::sin(0.37 * row + 0.11 * col + salt) + 0.3 * std::cos(0.9 * label + 0.05 * col) + 0.02 * label;
}

/// <dir>/{train,test}/X_*.txt, y_*.txt with `features` columns and labels cycling 1..6.
inline void write_uci_features(const fs::path& dir, int n_train, int n_test, int features = 561) {
  for (const auto& [split, n] : {std::pair<std::string, int>{"train", n_train}, {"test", n_test}}) {
    fs::create_directories(dir / split);
    std::ofstream x(dir / split / ("X_" + split + ".txt"));
    std::ofstream y(dir / split / ("y_" + split + ".txt"));
    for (int r = 0; r < n; ++r) {
      const int label = r % 6;
      for (int c = 0; c < features; ++c) x << " " << uci_number(uci_value(r, c, label, split == "test"));
      x << "\n";
      y << label + 1 << "\n";
    }
  }
}

/// Nine per-axis files (body_acc, body_gyro, total_acc) for one split.
inline void write_uci_raw(const fs::path& dir, const std::string& split, int n) {
  const fs::path signals = dir / split / "Inertial Signals";
  fs::create_directories(signals);
  int sensor_no = 0;
  for (const std::string sensor : {"body_acc", "body_gyro", "total_acc"}) {
    int axis_no = 0;
    for (char a : {'x', 'y', 'z'}) {
      std::ofstream out(signals / (sensor + "_" + a + "_" + split + ".txt"));
      for (int r = 0; r < n; ++r) {
        for (int t = 0; t < 128; ++t) out << " " << uci_number(uci_value(r, t, r % 6, 10 * sensor_no + axis_no));
        out << "\n";
      }
      ++axis_no;
    }
    ++sensor_no;
  }
  std::ofstream y(dir / split / ("y_" + split + ".txt"));
  for (int r = 0; r < n; ++r) y << r % 6 + 1 << "\n";
}

/// Canonical CSV set with subjects x activities x trials recordings of
/// `length` samples (plus a per-recording offset) and its manifest.
inline harfuse::CanonicalManifest write_usc_like(const fs::path& dir, int subjects, int activities, int trials,
                                                 int length) {
  harfuse::CanonicalManifest m;
  m.dataset = "usc-had-synthetic";
  m.sample_rate_hz = 100.0;
  for (int a = 0; a < activities; ++a) m.classes.push_back("activity" + std::to_string(a + 1));
  fs::create_directories(dir);
  int k = 0;
  for (int s = 1; s <= subjects; ++s) {
    for (int a = 0; a < activities; ++a) {
      for (int t = 1; t <= trials; ++t, ++k) {
        char id[48];
        std::snprintf(id, sizeof id, "s%02d_a%02d_t%d", s, a + 1, t);
        const harfuse::Index n = length + (k % 7);
        harfuse::Tensor acc({n, 3}), gyr({n, 3});
        for (harfuse::Index i = 0; i < n; ++i) {
          for (harfuse::Index c = 0; c < 3; ++c) {
            acc(i, c) = std::sin(0.05 * (a + 1) * static_cast<double>(i) + static_cast<double>(c) + s) + 0.1 * t;
            gyr(i, c) = 20.0 * std::cos(0.03 * (a + 2) * static_cast<double>(i) + static_cast<double>(c) * t);
          }
        }
        harfuse::write_canonical_csv(dir / (std::string(id) + ".csv"), acc, gyr, m.sample_rate_hz);
        m.recordings.push_back({id, s, a, t, std::string(id) + ".csv"});
      }
    }
  }
  harfuse::save_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace synth

#endif  // HARFUSE_TESTS_SYNTHETIC_HPP
