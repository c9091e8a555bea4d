#include <cmath>

#include "harfuse/nn/activation.hpp"
#include "harfuse/nn/dense.hpp"
#include "harfuse/nn/module.hpp"
#include "harfuse/nn/pooling.hpp"

namespace harfuse::nn {

namespace {

const char* const kGateSuffix[4] = {"f", "i", "c", "o"};

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace

void Module::parameters(std::vector<ParamRef>&, const std::string&) {}

std::vector<ParamRef> Module::parameters(const std::string& prefix) {
  std::vector<ParamRef> out;
  parameters(out, prefix);
  return out;
}

void Module::zero_grad() {
  for (auto& p : parameters()) {
    if (p.grad) p.grad->fill(0.0);
  }
}

// ---------------------------------------------------------------------------

Conv::Conv(ConvSpec spec, Rng& rng) : spec_(spec) {
  params_ = ConvParams::zeros_like(spec_);
  params_.kernels = randn(spec_.kernel_shape(), rng, std::sqrt(2.0 / static_cast<double>(spec_.patch_size())));
  grads_ = ConvParams::zeros_like(spec_);
}

Tensor Conv::forward(const Tensor& input, Mode) {
  input_ = input;
  return conv_forward(input, spec_, params_);
}

Tensor Conv::backward(const Tensor& grad_output) {
  auto g = conv_backward(input_, spec_, params_, grad_output);
  grads_.kernels += g.kernels;
  grads_.bias += g.bias;
  return std::move(g.input);
}

void Conv::parameters(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({join(prefix, "kernels"), &params_.kernels, &grads_.kernels, true});
  out.push_back({join(prefix, "bias"), &params_.bias, &grads_.bias, true});
}

// ---------------------------------------------------------------------------

Tensor Relu::forward(const Tensor& input, Mode) {
  input_ = input;
  return relu(input);
}

Tensor Relu::backward(const Tensor& grad_output) { return relu_backward(input_, grad_output); }

// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(Index channels)
    : params_(BatchNormParams::make(channels)), grad_gamma_(zeros({channels})), grad_beta_(zeros({channels})) {}

Tensor BatchNorm::forward(const Tensor& input, Mode mode) { return batchnorm_forward(input, params_, mode, &cache_); }

Tensor BatchNorm::backward(const Tensor& grad_output) {
  auto g = batchnorm_backward(cache_, params_, grad_output);
  grad_gamma_ += g.gamma;
  grad_beta_ += g.beta;
  return std::move(g.input);
}

void BatchNorm::parameters(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({join(prefix, "gamma"), &params_.gamma, &grad_gamma_, true});
  out.push_back({join(prefix, "beta"), &params_.beta, &grad_beta_, true});
  out.push_back({join(prefix, "running_mean"), &params_.running_mean, nullptr, false});
  out.push_back({join(prefix, "running_var"), &params_.running_var, nullptr, false});
}

// ---------------------------------------------------------------------------

Lstm::Lstm(Index input_dim, Index units, Rng& rng) {
  params_ = LstmParams::zeros_for(input_dim, units);
  grads_ = LstmParams::zeros_for(input_dim, units);
  const double scale = std::sqrt(1.0 / static_cast<double>(input_dim + units));
  for (auto& w : params_.weights) w = randn({input_dim + units, units}, rng, scale);
}

Tensor Lstm::forward(const Tensor& input, Mode) {
  if (input.rank() != 3) throw ShapeError("lstm module expects [N, T, D], got " + shape_string(input.shape()));
  trace_ = lstm_forward(input, params_);
  return trace_.hidden;
}

Tensor Lstm::backward(const Tensor& grad_output) {
  auto g = lstm_backward(trace_, params_, grad_output);
  for (int k = 0; k < 4; ++k) {
    grads_.weights[k] += g.weights[k];
    grads_.biases[k] += g.biases[k];
  }
  return std::move(g.input);
}

void Lstm::parameters(std::vector<ParamRef>& out, const std::string& prefix) {
  for (int k = 0; k < 4; ++k) {
    out.push_back({join(prefix, std::string("W_") + kGateSuffix[k]), &params_.weights[k], &grads_.weights[k], true});
  }
  for (int k = 0; k < 4; ++k) {
    out.push_back({join(prefix, std::string("b_") + kGateSuffix[k]), &params_.biases[k], &grads_.biases[k], true});
  }
}

Shape Lstm::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[2] != params_.input_dim()) {
    throw ShapeError("lstm: cannot consume " + shape_string(input));
  }
  return {input[0], input[1], params_.units};
}

// ---------------------------------------------------------------------------

Clstm::Clstm(Index in_channels, Index units, Index kernel_h, Index kernel_w, int spatial_rank, Rng& rng) {
  params_ = ClstmParams::zeros_for(in_channels, units, kernel_h, kernel_w, spatial_rank);
  grads_ = ClstmParams::zeros_for(in_channels, units, kernel_h, kernel_w, spatial_rank);
  const double scale = std::sqrt(1.0 / static_cast<double>(params_.gate_spec.patch_size()));
  for (auto& g : params_.gates) g.kernels = randn(params_.gate_spec.kernel_shape(), rng, scale);
  params_.validate();
}

Tensor Clstm::forward(const Tensor& input, Mode) {
  trace_ = clstm_forward(input, params_);
  return trace_.hidden_final;
}

Tensor Clstm::backward(const Tensor& grad_output) {
  auto g = clstm_backward(trace_, params_, grad_output);
  for (int k = 0; k < 4; ++k) {
    grads_.gates[k].kernels += g.gates[k].kernels;
    grads_.gates[k].bias += g.gates[k].bias;
  }
  return std::move(g.input);
}

void Clstm::parameters(std::vector<ParamRef>& out, const std::string& prefix) {
  for (int k = 0; k < 4; ++k) {
    out.push_back({join(prefix, std::string("W_") + kGateSuffix[k]), &params_.gates[k].kernels,
                   &grads_.gates[k].kernels, true});
  }
  for (int k = 0; k < 4; ++k) {
    out.push_back({join(prefix, std::string("b_") + kGateSuffix[k]), &params_.gates[k].bias, &grads_.gates[k].bias,
                   true});
  }
}

Shape Clstm::output_shape(const Shape& input) const {
  const auto l = detail::clstm_layout(input, params_.spatial_rank, params_.in_channels);
  return detail::with_channels(l.batch, l.spatial, params_.units);
}

// ---------------------------------------------------------------------------

Tensor GlobalAveragePool::forward(const Tensor& input, Mode) {
  input_shape_ = input.shape();
  return gap(input);
}

Tensor GlobalAveragePool::backward(const Tensor& grad_output) { return gap_backward(input_shape_, grad_output); }

// ---------------------------------------------------------------------------

Dense::Dense(Index in_features, Index out_features, Rng& rng, bool zero_init)
    : weight_(zero_init ? zeros({in_features, out_features})
                        : randn({in_features, out_features}, rng, std::sqrt(2.0 / static_cast<double>(in_features)))),
      bias_(zeros({out_features})),
      grad_weight_(zeros({in_features, out_features})),
      grad_bias_(zeros({out_features})) {}

Tensor Dense::forward(const Tensor& input, Mode) {
  input_ = input;
  return dense_forward(input, weight_, bias_);
}

Tensor Dense::backward(const Tensor& grad_output) {
  auto g = dense_backward(input_, weight_, grad_output);
  grad_weight_ += g.weight;
  grad_bias_ += g.bias;
  return std::move(g.input);
}

void Dense::parameters(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({join(prefix, "W"), &weight_, &grad_weight_, true});
  out.push_back({join(prefix, "b"), &bias_, &grad_bias_, true});
}

// ---------------------------------------------------------------------------

Tensor Reshape::forward(const Tensor& input, Mode) {
  input_shape_ = input.shape();
  return input.reshaped(output_shape(input.shape()));
}

Tensor Reshape::backward(const Tensor& grad_output) { return grad_output.reshaped(input_shape_); }

Shape Reshape::output_shape(const Shape& input) const {
  Shape out{input.front()};
  out.insert(out.end(), sample_shape_.begin(), sample_shape_.end());
  if (shape_size(out) != shape_size(input)) {
    throw ShapeError("reshape: " + shape_string(input) + " cannot become " + shape_string(out));
  }
  return out;
}

Permute::Permute(std::vector<Index> order) : order_(std::move(order)), inverse_(order_.size()) {
  if (order_.empty() || order_[0] != 0) throw ShapeError("permute module must keep the batch axis first");
  for (std::size_t i = 0; i < order_.size(); ++i) inverse_[static_cast<std::size_t>(order_[i])] = static_cast<Index>(i);
}

Tensor Permute::forward(const Tensor& input, Mode) { return permute(input, order_); }

Tensor Permute::backward(const Tensor& grad_output) { return permute(grad_output, inverse_); }

Shape Permute::output_shape(const Shape& input) const {
  if (input.size() != order_.size()) throw ShapeError("permute: rank mismatch for " + shape_string(input));
  Shape out;
  for (Index a : order_) out.push_back(input[static_cast<std::size_t>(a)]);
  return out;
}

Tensor PadAxis::forward(const Tensor& input, Mode) {
  input_length_ = input.dim(axis_);
  return resize_axis(input, axis_, length_);
}

Tensor PadAxis::backward(const Tensor& grad_output) { return resize_axis(grad_output, axis_, input_length_); }

Shape PadAxis::output_shape(const Shape& input) const {
  Shape out = input;
  out.at(static_cast<std::size_t>(axis_)) = length_;
  return out;
}

// ---------------------------------------------------------------------------

Sequential& Sequential::add(std::string name, std::unique_ptr<Module> module) {
  layers_.emplace_back(std::move(name), std::move(module));
  return *this;
}

Tensor Sequential::forward(const Tensor& input, Mode mode) {
  Tensor x = input;
  for (auto& [name, layer] : layers_) x = layer->forward(x, mode);
  return x;
}

Tensor Sequential::backward(const Tensor& grad_output) {
  Tensor g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

void Sequential::parameters(std::vector<ParamRef>& out, const std::string& prefix) {
  for (auto& [name, layer] : layers_) layer->parameters(out, join(prefix, name));
}

Shape Sequential::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& [name, layer] : layers_) s = layer->output_shape(s);
  return s;
}

std::vector<std::string> Sequential::describe(const std::string& prefix, Shape input) const {
  std::vector<std::string> lines;
  for (const auto& [name, layer] : layers_) {
    Shape out = layer->output_shape(input);
    lines.push_back(join(prefix, name) + " " + layer->kind() + " " + shape_string(input) + " -> " +
                    shape_string(out));
    input = std::move(out);
  }
  return lines;
}

}  // namespace harfuse::nn
