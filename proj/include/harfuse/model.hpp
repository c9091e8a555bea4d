#ifndef HARFUSE_MODEL_HPP
#define HARFUSE_MODEL_HPP

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "harfuse/nn/module.hpp"
#include "harfuse/rng.hpp"
#include "harfuse/tensor.hpp"

namespace harfuse {

/// Network kinds, in canonical report order.
enum class NetKind { CNN1D, LSTM, CLSTM1D, CNN2D, CLSTM2D };

inline constexpr std::array<NetKind, 5> kAllNetKinds = {NetKind::CNN1D, NetKind::LSTM, NetKind::CLSTM1D,
                                                       NetKind::CNN2D, NetKind::CLSTM2D};

enum class InputKind { RawDualBranch, SingleFeatureVector };

std::string to_string(NetKind kind);
std::string to_string(InputKind kind);
/// Accepts "cnn1d", "CNN1D", "clstm2d", ... Throws ConfigError.
NetKind parse_net_kind(const std::string& text);
InputKind parse_input_kind(const std::string& text);

/// Two-dimensional kinds consume and produce [N, H, W, C] maps.
inline bool is_2d(NetKind kind) { return kind == NetKind::CNN2D || kind == NetKind::CLSTM2D; }

struct ModelConfig {
  NetKind first = NetKind::CNN1D;
  NetKind second = NetKind::CNN1D;
  bool intermediate_fusion = true;
  InputKind input_kind = InputKind::RawDualBranch;
  Index class_count = 12;
  Index first_width = 128;
  Index second_width = 128;
  /// Per-branch input block is [input_length, input_channels].
  Index input_length = 1024;
  Index input_channels = 3;
  Index clstm_steps = 8;
  Index kernel_1d = 16;
  Index stride_1d = 8;
  std::array<Index, 2> kernel_2d{2, 8};
  std::array<Index, 2> stride_2d{2, 4};

  Index branch_count() const { return input_kind == InputKind::RawDualBranch ? 2 : 1; }
  /// "cnn1d/lstm/fusion=on"
  std::string label() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Throws ConfigError naming the problem. Shape compatibility of the pair is
/// checked by build_model, which knows the actual map shapes.
void validate(const ModelConfig& config);

/// Structural pair rule: a 2D first net only feeds a 2D second net, and
/// feature-vector input admits only 1D kinds.
bool compatible(NetKind first, NetKind second, InputKind input);

/// All compatible (first, second) pairs, each with fusion off then on, in
/// canonical order. `base` supplies every other field.
std::vector<ModelConfig> enumerate_architectures(InputKind input, const ModelConfig& base = {});

/// Dense input length: first_width * branches + second_width with
/// intermediate fusion, second_width without.
Index fused_feature_length(const ModelConfig& config);

/// Two first-level branches (or one for feature vectors), late fusion,
/// second-level net, global pooling, optional intermediate fusion, dense head.
/// Inputs are per-branch blocks [N, input_length, input_channels].
class FusionModel {
 public:
  FusionModel(const ModelConfig& config, Rng& rng);
  FusionModel(const FusionModel&) = delete;
  FusionModel& operator=(const FusionModel&) = delete;

  const ModelConfig& config() const { return config_; }

  /// Logits [N, class_count].
  Tensor forward(const std::vector<Tensor>& blocks, nn::Mode mode);
  /// Accumulates parameter gradients for the last forward; returns the
  /// gradient with respect to each input block.
  std::vector<Tensor> backward(const Tensor& grad_logits);

  /// Stable-named registry: branch_a.*, branch_b.*, second.*, head.*.
  /// Includes non-trainable batch norm statistics.
  std::vector<nn::ParamRef> parameters();
  void zero_grad();
  Index trainable_count();

  /// One line per layer and junction with input/output shapes for a batch of
  /// `batch` samples; used for structural comparisons.
  std::vector<std::string> describe(Index batch = 1) const;
  Shape first_output_shape(Index batch = 1) const;
  Shape fused_shape(Index batch = 1) const;
  Index dense_input_length() const { return head_in_; }

 private:
  Tensor fuse(const std::vector<Tensor>& maps) const;
  std::vector<Tensor> unfuse(const Tensor& grad) const;

  ModelConfig config_;
  std::vector<std::unique_ptr<nn::Sequential>> branches_;
  nn::Sequential second_;
  nn::GlobalAveragePool second_pool_;
  std::vector<nn::GlobalAveragePool> branch_pools_;
  std::unique_ptr<nn::Dense> head_;
  Index head_in_ = 0;
  std::vector<Tensor> branch_maps_;
};

/// Throws ConfigError if the pair cannot be wired for the configured shapes.
std::unique_ptr<FusionModel> build_model(const ModelConfig& config, Rng& rng);

}  // namespace harfuse

#endif  // HARFUSE_MODEL_HPP
