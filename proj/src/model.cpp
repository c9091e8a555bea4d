#include "harfuse/model.hpp"

#include <algorithm>
#include <cctype>

namespace harfuse {

using nn::Mode;

std::string to_string(NetKind kind) {
  switch (kind) {
    case NetKind::CNN1D: return "cnn1d";
    case NetKind::LSTM: return "lstm";
    case NetKind::CLSTM1D: return "clstm1d";
    case NetKind::CNN2D: return "cnn2d";
    case NetKind::CLSTM2D: return "clstm2d";
  }
  return "?";
}

std::string to_string(InputKind kind) {
  return kind == InputKind::RawDualBranch ? "raw-dual-branch" : "single-feature-vector";
}

NetKind parse_net_kind(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  for (NetKind k : kAllNetKinds) {
    if (to_string(k) == lower) return k;
  }
  throw ConfigError("unknown network kind '" + text + "' (expected cnn1d, lstm, clstm1d, cnn2d, clstm2d)");
}

InputKind parse_input_kind(const std::string& text) {
  if (text == to_string(InputKind::RawDualBranch)) return InputKind::RawDualBranch;
  if (text == to_string(InputKind::SingleFeatureVector)) return InputKind::SingleFeatureVector;
  throw ConfigError("unknown input kind '" + text + "'");
}

std::string ModelConfig::label() const {
  return to_string(first) + "/" + to_string(second) + "/fusion=" + (intermediate_fusion ? "on" : "off");
}

void validate(const ModelConfig& c) {
  const auto positive = [](Index v, const char* what) {
    if (v < 1) throw ConfigError(std::string(what) + " must be positive, got " + std::to_string(v));
  };
  if (c.class_count < 2) throw ConfigError("class_count must be at least 2");
  positive(c.first_width, "first_width");
  positive(c.second_width, "second_width");
  positive(c.input_length, "input_length");
  positive(c.input_channels, "input_channels");
  positive(c.clstm_steps, "clstm_steps");
  positive(c.kernel_1d, "kernel_1d");
  positive(c.stride_1d, "stride_1d");
  for (int a = 0; a < 2; ++a) {
    positive(c.kernel_2d[a], "kernel_2d");
    positive(c.stride_2d[a], "stride_2d");
  }
  if (c.kernel_1d < c.stride_1d || c.kernel_2d[0] < c.stride_2d[0] || c.kernel_2d[1] < c.stride_2d[1]) {
    throw ConfigError("convolution kernels must be at least as long as their strides");
  }
  if (c.input_kind == InputKind::SingleFeatureVector && (is_2d(c.first) || is_2d(c.second))) {
    throw ConfigError("feature-vector input admits only 1D kinds, got " + c.label());
  }
}

bool compatible(NetKind first, NetKind second, InputKind input) {
  if (input == InputKind::SingleFeatureVector) return !is_2d(first) && !is_2d(second);
  return !is_2d(first) || is_2d(second);
}

std::vector<ModelConfig> enumerate_architectures(InputKind input, const ModelConfig& base) {
  std::vector<ModelConfig> out;
  for (NetKind first : kAllNetKinds) {
    for (NetKind second : kAllNetKinds) {
      if (!compatible(first, second, input)) continue;
      for (bool fusion : {false, true}) {
        ModelConfig c = base;
        c.first = first;
        c.second = second;
        c.intermediate_fusion = fusion;
        c.input_kind = input;
        out.push_back(c);
      }
    }
  }
  return out;
}

Index fused_feature_length(const ModelConfig& c) {
  return c.intermediate_fusion ? c.first_width * c.branch_count() + c.second_width : c.second_width;
}

namespace {

Index round_up(Index v, Index m) { return (v + m - 1) / m * m; }
Index ceil_div(Index v, Index m) { return (v + m - 1) / m; }

/// Appends a net consuming a 1D map [N, L, C]; returns the output sample shape.
Shape add_1d_net(nn::Sequential& seq, NetKind kind, const Shape& in, Index width, const ModelConfig& c, Rng& rng) {
  const Index len = in[0], ch = in[1];
  switch (kind) {
    case NetKind::CNN1D:
      seq.add("conv", std::make_unique<nn::Conv>(nn::ConvSpec::same(1, c.kernel_1d, 1, c.stride_1d, 1, len, ch, width), rng));
      seq.add("relu", std::make_unique<nn::Relu>());
      seq.add("bn", std::make_unique<nn::BatchNorm>(width));
      return {ceil_div(len, c.stride_1d), width};
    case NetKind::LSTM:
      seq.add("lstm", std::make_unique<nn::Lstm>(ch, width, rng));
      return {len, width};
    case NetKind::CLSTM1D: {
      const Index padded = round_up(len, c.clstm_steps);
      if (padded != len) seq.add("pad", std::make_unique<nn::PadAxis>(1, padded));
      seq.add("split", std::make_unique<nn::Reshape>(Shape{c.clstm_steps, padded / c.clstm_steps, ch}));
      seq.add("clstm", std::make_unique<nn::Clstm>(ch, width, 1, c.kernel_1d, 1, rng));
      return {padded / c.clstm_steps, width};
    }
    default:
      throw ConfigError(to_string(kind) + " is not a 1D kind");
  }
}

/// Appends a net consuming a 2D map [N, H, W, C]; returns the output sample shape.
Shape add_2d_net(nn::Sequential& seq, NetKind kind, const Shape& in, Index width, const ModelConfig& c, Rng& rng) {
  const Index h = in[0], w = in[1], ch = in[2];
  switch (kind) {
    case NetKind::CNN2D:
      seq.add("conv", std::make_unique<nn::Conv>(
                          nn::ConvSpec::same(c.kernel_2d[0], c.kernel_2d[1], c.stride_2d[0], c.stride_2d[1], h, w, ch, width),
                          rng));
      seq.add("relu", std::make_unique<nn::Relu>());
      seq.add("bn", std::make_unique<nn::BatchNorm>(width));
      return {ceil_div(h, c.stride_2d[0]), ceil_div(w, c.stride_2d[1]), width};
    case NetKind::CLSTM2D: {
      const Index padded = round_up(w, c.clstm_steps);
      if (padded != w) seq.add("pad", std::make_unique<nn::PadAxis>(2, padded));
      seq.add("split", std::make_unique<nn::Reshape>(Shape{h, c.clstm_steps, padded / c.clstm_steps, ch}));
      seq.add("steps_first", std::make_unique<nn::Permute>(std::vector<Index>{0, 2, 1, 3, 4}));
      seq.add("clstm", std::make_unique<nn::Clstm>(ch, width, c.kernel_2d[0], c.kernel_2d[1], 2, rng));
      return {h, padded / c.clstm_steps, width};
    }
    default:
      throw ConfigError(to_string(kind) + " is not a 2D kind");
  }
}

Shape batched(Index n, const Shape& sample) {
  Shape s{n};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

}  // namespace

FusionModel::FusionModel(const ModelConfig& config, Rng& rng) : config_(config) {
  validate(config_);
  const Shape block{config_.input_length, config_.input_channels};
  Shape first_out;
  for (Index b = 0; b < config_.branch_count(); ++b) {
    auto seq = std::make_unique<nn::Sequential>();
    if (is_2d(config_.first)) {
      // [N, T, C] -> [N, C, T, 1]: sensor axes as height, time as width.
      seq->add("axes_as_rows", std::make_unique<nn::Permute>(std::vector<Index>{0, 2, 1}));
      seq->add("to_2d", std::make_unique<nn::Reshape>(Shape{config_.input_channels, config_.input_length, 1}));
      first_out = add_2d_net(*seq, config_.first, {config_.input_channels, config_.input_length, 1},
                             config_.first_width, config_, rng);
    } else {
      first_out = add_1d_net(*seq, config_.first, block, config_.first_width, config_, rng);
    }
    branches_.push_back(std::move(seq));
  }

  const Index nb = config_.branch_count();
  Shape fused;
  if (!is_2d(config_.second)) {
    if (first_out.size() != 2) {
      throw ConfigError("incompatible pair " + config_.label() + ": first net emits 2D map " +
                        shape_string(batched(1, first_out)) + " but " + to_string(config_.second) +
                        " consumes 1D maps [N, L, C]");
    }
    fused = {first_out[0], first_out[1] * nb};
    add_1d_net(second_, config_.second, fused, config_.second_width, config_, rng);
  } else {
    if (first_out.size() == 2) {
      fused = {nb, first_out[0], first_out[1]};
    } else {
      fused = {first_out[0] * nb, first_out[1], first_out[2]};
    }
    add_2d_net(second_, config_.second, fused, config_.second_width, config_, rng);
  }

  branch_pools_.resize(static_cast<std::size_t>(nb));
  branch_maps_.resize(static_cast<std::size_t>(nb));
  head_in_ = fused_feature_length(config_);
  head_ = std::make_unique<nn::Dense>(head_in_, config_.class_count, rng, /*zero_init=*/true);
}

Tensor FusionModel::fuse(const std::vector<Tensor>& maps) const {
  if (maps.size() == 1 && !is_2d(config_.second)) return maps[0];
  if (!is_2d(config_.second)) return concat(std::span<const Tensor>(maps), 2);
  if (!is_2d(config_.first)) {
    std::vector<Tensor> rows;
    for (const auto& m : maps) rows.push_back(m.reshaped({m.dim(0), 1, m.dim(1), m.dim(2)}));
    return concat(std::span<const Tensor>(rows), 1);
  }
  return concat(std::span<const Tensor>(maps), 1);
}

std::vector<Tensor> FusionModel::unfuse(const Tensor& grad) const {
  const auto nb = static_cast<Index>(branch_maps_.size());
  if (nb == 1 && !is_2d(config_.second)) return {grad};
  std::vector<Tensor> out;
  const Index axis = is_2d(config_.second) ? 1 : 2;
  const Index part = grad.dim(axis) / nb;
  for (Index b = 0; b < nb; ++b) {
    Tensor g = slice(grad, axis, b * part, (b + 1) * part);
    out.push_back(g.reshaped(branch_maps_[static_cast<std::size_t>(b)].shape()));
  }
  return out;
}

Tensor FusionModel::forward(const std::vector<Tensor>& blocks, Mode mode) {
  if (static_cast<Index>(blocks.size()) != config_.branch_count()) {
    throw ShapeError("model " + config_.label() + " expects " + std::to_string(config_.branch_count()) +
                     " input blocks, got " + std::to_string(blocks.size()));
  }
  const Index n = blocks[0].rank() > 0 ? blocks[0].dim(0) : 0;
  const Shape expected{n, config_.input_length, config_.input_channels};
  for (const auto& b : blocks) {
    if (b.shape() != expected) {
      throw ShapeError("input block " + shape_string(b.shape()) + " does not match " + shape_string(expected));
    }
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) branch_maps_[b] = branches_[b]->forward(blocks[b], mode);
  const Tensor pooled = second_pool_.forward(second_.forward(fuse(branch_maps_), mode), mode);
  if (!config_.intermediate_fusion) return head_->forward(pooled, mode);
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < blocks.size(); ++b) parts.push_back(branch_pools_[b].forward(branch_maps_[b], mode));
  parts.push_back(pooled);
  return head_->forward(concat(std::span<const Tensor>(parts), 1), mode);
}

std::vector<Tensor> FusionModel::backward(const Tensor& grad_logits) {
  const Tensor grad_feature = head_->backward(grad_logits);
  const Index w1 = config_.first_width;
  const auto nb = static_cast<Index>(branch_maps_.size());
  const Tensor grad_pooled =
      config_.intermediate_fusion ? slice(grad_feature, 1, nb * w1, nb * w1 + config_.second_width) : grad_feature;
  std::vector<Tensor> grad_maps = unfuse(second_.backward(second_pool_.backward(grad_pooled)));
  std::vector<Tensor> grad_blocks;
  for (Index b = 0; b < nb; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    if (config_.intermediate_fusion) {
      grad_maps[ub] += branch_pools_[ub].backward(slice(grad_feature, 1, b * w1, (b + 1) * w1));
    }
    grad_blocks.push_back(branches_[ub]->backward(grad_maps[ub]));
  }
  return grad_blocks;
}

std::vector<nn::ParamRef> FusionModel::parameters() {
  static const char* const kBranchNames[2] = {"branch_a", "branch_b"};
  std::vector<nn::ParamRef> out;
  for (std::size_t b = 0; b < branches_.size(); ++b) branches_[b]->parameters(out, kBranchNames[b]);
  second_.parameters(out, "second");
  head_->parameters(out, "head");
  return out;
}

void FusionModel::zero_grad() {
  for (auto& p : parameters()) {
    if (p.grad) p.grad->fill(0.0);
  }
}

Index FusionModel::trainable_count() {
  Index total = 0;
  for (const auto& p : parameters()) {
    if (p.trainable) total += p.value->size();
  }
  return total;
}

Shape FusionModel::first_output_shape(Index batch) const {
  return branches_.front()->output_shape({batch, config_.input_length, config_.input_channels});
}

Shape FusionModel::fused_shape(Index batch) const {
  const Shape first = first_output_shape(batch);
  const Index nb = config_.branch_count();
  if (!is_2d(config_.second)) return {first[0], first[1], first[2] * nb};
  if (first.size() == 3) return {first[0], nb, first[1], first[2]};
  return {first[0], first[1] * nb, first[2], first[3]};
}

std::vector<std::string> FusionModel::describe(Index batch) const {
  static const char* const kBranchNames[2] = {"branch_a", "branch_b"};
  std::vector<std::string> lines;
  const Shape block{batch, config_.input_length, config_.input_channels};
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const auto part = branches_[b]->describe(kBranchNames[b], block);
    lines.insert(lines.end(), part.begin(), part.end());
  }
  const Shape first = first_output_shape(batch);
  const Shape fused = fused_shape(batch);
  lines.push_back("late_fusion concat " + std::to_string(branches_.size()) + "x" + shape_string(first) + " -> " +
                  shape_string(fused));
  const auto second = second_.describe("second", fused);
  lines.insert(lines.end(), second.begin(), second.end());
  const Shape second_out = second_.output_shape(fused);
  const Shape pooled{batch, config_.second_width};
  lines.push_back("second_pool gap " + shape_string(second_out) + " -> " + shape_string(pooled));
  if (config_.intermediate_fusion) {
    for (std::size_t b = 0; b < branches_.size(); ++b) {
      lines.push_back(std::string(kBranchNames[b]) + "_pool gap " + shape_string(first) + " -> " +
                      shape_string({batch, config_.first_width}));
    }
    lines.push_back("intermediate_fusion concat -> " + shape_string({batch, head_in_}));
  }
  lines.push_back("head dense " + shape_string({batch, head_in_}) + " -> " +
                  shape_string({batch, config_.class_count}));
  return lines;
}

std::unique_ptr<FusionModel> build_model(const ModelConfig& config, Rng& rng) {
  return std::make_unique<FusionModel>(config, rng);
}

}  // namespace harfuse
