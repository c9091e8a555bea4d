#ifndef HARFUSE_NN_BATCHNORM_HPP
#define HARFUSE_NN_BATCHNORM_HPP

#include <cmath>
#include <string>

#include "harfuse/nn/common.hpp"
#include "harfuse/tensor.hpp"

namespace harfuse::nn {

/// Per-channel normalization over the last axis. Statistics are taken over
/// every other axis (batch and spatial positions).
template <typename Scalar>
struct BasicBatchNormParams {
  BasicTensor<Scalar> gamma;
  BasicTensor<Scalar> beta;
  BasicTensor<Scalar> running_mean;
  BasicTensor<Scalar> running_var;
  Scalar epsilon = Scalar(1e-5);
  // running <- momentum * running + (1 - momentum) * batch
  Scalar momentum = Scalar(0.9);

  static BasicBatchNormParams make(Index channels) {
    return {ones<Scalar>({channels}), zeros<Scalar>({channels}), zeros<Scalar>({channels}), ones<Scalar>({channels})};
  }
  Index channels() const { return gamma.size(); }
};

template <typename Scalar>
struct BasicBatchNormCache {
  Mode mode = Mode::Infer;
  BasicTensor<Scalar> normalized;  // x_hat
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
};

template <typename Scalar>
struct BasicBatchNormGrads {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> gamma;
  BasicTensor<Scalar> beta;
};

using BatchNormParams = BasicBatchNormParams<double>;
using BatchNormCache = BasicBatchNormCache<double>;
using BatchNormGrads = BasicBatchNormGrads<double>;

/// Train mode normalizes with the (biased) batch statistics and folds them
/// into the running estimates; infer mode uses the running estimates.
template <typename Scalar>
BasicTensor<Scalar> batchnorm_forward(const BasicTensor<Scalar>& x, BasicBatchNormParams<Scalar>& params, Mode mode,
                                      BasicBatchNormCache<Scalar>* cache = nullptr) {
  const Index c = params.channels();
  if (x.rank() < 2 || x.dim(-1) != c) {
    throw ShapeError("batchnorm: input " + shape_string(x.shape()) + " does not end in " + std::to_string(c) +
                     " channels");
  }
  const Index count = x.size() / c;
  const auto xm = x.as_matrix(count);
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vec mean;
  Vec var;
  if (mode == Mode::Train) {
    if (count < 2) {
      throw DegenerateBatchError("batchnorm: train mode needs at least 2 values per channel, got " +
                                 std::to_string(count));
    }
    mean = xm.colwise().mean().transpose();
    var = (xm.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
    params.running_mean.values() = params.momentum * params.running_mean.values() + (Scalar(1) - params.momentum) * mean;
    params.running_var.values() = params.momentum * params.running_var.values() + (Scalar(1) - params.momentum) * var;
  } else {
    mean = params.running_mean.values();
    var = params.running_var.values();
  }
  const Vec inv_std = (var.array() + params.epsilon).rsqrt().matrix();

  BasicTensor<Scalar> normalized(x.shape());
  auto nm = normalized.as_matrix(count);
  nm = (xm.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array();
  BasicTensor<Scalar> out(x.shape());
  out.as_matrix(count) = (nm.array().rowwise() * params.gamma.values().transpose().array()).rowwise() +
                         params.beta.values().transpose().array();
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
  }
  return out;
}

template <typename Scalar>
BasicBatchNormGrads<Scalar> batchnorm_backward(const BasicBatchNormCache<Scalar>& cache,
                                               const BasicBatchNormParams<Scalar>& params,
                                               const BasicTensor<Scalar>& grad_out) {
  cache.normalized.require_same_shape(grad_out, "batchnorm_backward");
  const Index c = params.channels();
  const Index count = grad_out.size() / c;
  const auto g = grad_out.as_matrix(count);
  const auto xhat = cache.normalized.as_matrix(count);

  BasicBatchNormGrads<Scalar> grads{BasicTensor<Scalar>(grad_out.shape()), zeros<Scalar>({c}), zeros<Scalar>({c})};
  grads.beta.values() = g.colwise().sum().transpose();
  grads.gamma.values() = g.cwiseProduct(xhat).colwise().sum().transpose();

  const auto gamma = params.gamma.values().transpose().array();
  const auto scale = (gamma * cache.inv_std.transpose().array()).eval();
  auto gin = grads.input.as_matrix(count);
  if (cache.mode == Mode::Infer) {
    gin = g.array().rowwise() * scale;
    return grads;
  }
  // dx = gamma * inv_std / m * (m * g - sum(g) - xhat * sum(g * xhat))
  const auto sum_g = grads.beta.values().transpose().array();
  const auto sum_gx = grads.gamma.values().transpose().array();
  const Scalar m = static_cast<Scalar>(count);
  gin = ((g.array() * m).rowwise() - sum_g - (xhat.array().rowwise() * sum_gx)).rowwise() * (scale / m);
  return grads;
}

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_BATCHNORM_HPP
