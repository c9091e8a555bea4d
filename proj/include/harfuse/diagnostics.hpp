#ifndef HARFUSE_DIAGNOSTICS_HPP
#define HARFUSE_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "harfuse/dataset.hpp"
#include "harfuse/model.hpp"
#include "harfuse/nn/gradcheck.hpp"

namespace harfuse {

/// Finite-difference check of the whole model on mean cross-entropy over
/// `batch`, covering every trainable registry entry.
nn::GradCheckReport model_grad_check(FusionModel& model, const Batch& batch, const nn::GradCheckOptions& options = {});

/// Down-scaled geometry for gradient checks and smoke tests: widths `width`,
/// blocks of `length` x 3, short kernels.
ModelConfig tiny_config(NetKind first, NetKind second, bool fusion, InputKind input = InputKind::RawDualBranch,
                        Index width = 3, Index length = 32, Index classes = 3);

/// Random blocks and labels matching `config`.
Batch random_batch(const ModelConfig& config, Index n, Rng& rng);

struct SuiteLine {
  std::string name;
  int instances = 0;
  double worst = 0.0;
  double seconds = 0.0;
  bool pass = true;
};

struct SuiteReport {
  std::vector<SuiteLine> lines;
  double tolerance = 1e-4;
  bool pass() const;
};

enum class SuiteScale { Tiny, Small };

/// Layer checks (conv1d, conv2d, batchnorm, dense, lstm, clstm1d, clstm2d,
/// gap+head; `instances` random draws each) followed by end-to-end model
/// checks covering every NetKind at both levels.
SuiteReport gradient_suite(SuiteScale scale, int instances = 20, std::uint64_t seed = 2024);

}  // namespace harfuse

#endif  // HARFUSE_DIAGNOSTICS_HPP
