#ifndef HARFUSE_NN_MODULE_HPP
#define HARFUSE_NN_MODULE_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "harfuse/nn/batchnorm.hpp"
#include "harfuse/nn/clstm.hpp"
#include "harfuse/nn/common.hpp"
#include "harfuse/nn/conv.hpp"
#include "harfuse/nn/lstm.hpp"
#include "harfuse/tensor.hpp"

namespace harfuse::nn {

/// Named view of one tensor owned by a module. Non-trainable entries (batch
/// norm running statistics) are persisted but never optimized.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool trainable = true;
};

/// Stateful layer: forward caches what backward needs; backward accumulates
/// parameter gradients and returns the input gradient. Inputs carry a
/// leading batch axis.
class Module {
 public:
  virtual ~Module() = default;
  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& input, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_output) = 0;
  virtual void parameters(std::vector<ParamRef>& out, const std::string& prefix);
  /// Output shape for a given input shape, without running the layer.
  virtual Shape output_shape(const Shape& input) const = 0;

  std::vector<ParamRef> parameters(const std::string& prefix = "");
  void zero_grad();
};

class Conv : public Module {
 public:
  Conv(ConvSpec spec, Rng& rng);
  std::string kind() const override { return spec_.kernel_h == 1 && spec_.stride_h == 1 ? "conv1d" : "conv2d"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  using Module::parameters;
  void parameters(std::vector<ParamRef>& out, const std::string& prefix) override;
  Shape output_shape(const Shape& input) const override { return spec_.output_shape(input); }
  const ConvSpec& spec() const { return spec_; }
  ConvParams& params() { return params_; }

 private:
  ConvSpec spec_;
  ConvParams params_;
  ConvParams grads_;
  Tensor input_;
};

class Relu : public Module {
 public:
  std::string kind() const override { return "relu"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  Shape output_shape(const Shape& input) const override { return input; }

 private:
  Tensor input_;
};

class BatchNorm : public Module {
 public:
  explicit BatchNorm(Index channels);
  std::string kind() const override { return "batchnorm"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  using Module::parameters;
  void parameters(std::vector<ParamRef>& out, const std::string& prefix) override;
  Shape output_shape(const Shape& input) const override { return input; }
  BatchNormParams& params() { return params_; }

 private:
  BatchNormParams params_;
  Tensor grad_gamma_, grad_beta_;
  BatchNormCache cache_;
};

/// [N, T, D] -> full hidden sequence [N, T, units].
class Lstm : public Module {
 public:
  Lstm(Index input_dim, Index units, Rng& rng);
  std::string kind() const override { return "lstm"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  using Module::parameters;
  void parameters(std::vector<ParamRef>& out, const std::string& prefix) override;
  Shape output_shape(const Shape& input) const override;
  LstmParams& params() { return params_; }

 private:
  LstmParams params_;
  LstmParams grads_;
  LstmTrace trace_;
};

/// [N, T, spatial..., C] -> final hidden map [N, spatial..., units].
class Clstm : public Module {
 public:
  Clstm(Index in_channels, Index units, Index kernel_h, Index kernel_w, int spatial_rank, Rng& rng);
  std::string kind() const override { return params_.spatial_rank == 1 ? "clstm1d" : "clstm2d"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  using Module::parameters;
  void parameters(std::vector<ParamRef>& out, const std::string& prefix) override;
  Shape output_shape(const Shape& input) const override;
  ClstmParams& params() { return params_; }

 private:
  ClstmParams params_;
  ClstmParams grads_;
  ClstmTrace trace_;
};

/// [N, spatial..., C] -> [N, C].
class GlobalAveragePool : public Module {
 public:
  std::string kind() const override { return "gap"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  Shape output_shape(const Shape& input) const override { return {input.front(), input.back()}; }

 private:
  Shape input_shape_;
};

/// [N, F] -> [N, K].
class Dense : public Module {
 public:
  /// zero_init leaves the weights at zero instead of drawing them.
  Dense(Index in_features, Index out_features, Rng& rng, bool zero_init = false);
  std::string kind() const override { return "dense"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  using Module::parameters;
  void parameters(std::vector<ParamRef>& out, const std::string& prefix) override;
  Shape output_shape(const Shape& input) const override { return {input.front(), weight_.dim(1)}; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_, bias_, grad_weight_, grad_bias_;
  Tensor input_;
};

/// Reinterprets the per-sample shape; the batch axis is kept.
class Reshape : public Module {
 public:
  explicit Reshape(Shape sample_shape) : sample_shape_(std::move(sample_shape)) {}
  std::string kind() const override { return "reshape"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  Shape output_shape(const Shape& input) const override;

 private:
  Shape sample_shape_;
  Shape input_shape_;
};

/// Axis permutation including the batch axis (order[0] must be 0).
class Permute : public Module {
 public:
  explicit Permute(std::vector<Index> order);
  std::string kind() const override { return "permute"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  Shape output_shape(const Shape& input) const override;

 private:
  std::vector<Index> order_, inverse_;
};

/// Zero-pads (or crops) one axis at its end to a fixed length.
class PadAxis : public Module {
 public:
  PadAxis(Index axis, Index length) : axis_(axis), length_(length) {}
  std::string kind() const override { return "pad"; }
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  Shape output_shape(const Shape& input) const override;

 private:
  Index axis_, length_;
  Index input_length_ = 0;
};

/// Ordered chain of named modules.
class Sequential : public Module {
 public:
  std::string kind() const override { return "sequential"; }
  Sequential& add(std::string name, std::unique_ptr<Module> module);
  Tensor forward(const Tensor& input, Mode mode) override;
  Tensor backward(const Tensor& grad_output) override;
  using Module::parameters;
  void parameters(std::vector<ParamRef>& out, const std::string& prefix) override;
  Shape output_shape(const Shape& input) const override;
  /// One line per layer: "name kind input -> output".
  std::vector<std::string> describe(const std::string& prefix, Shape input) const;
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> layers_;
};

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_MODULE_HPP
