#ifndef HARFUSE_OPTIM_HPP
#define HARFUSE_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "harfuse/nn/module.hpp"

namespace harfuse {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 500;
  std::uint64_t seed = 0;
  bool shuffle = true;
  /// 0 applies the n_train / 32 rule.
  Index batch_size = 0;

  bool operator==(const TrainConfig&) const = default;
};

/// Throws ConfigError on out-of-range hyperparameters.
void validate(const TrainConfig& config);

/// floor(n_train / 32), at least 1.
inline Index batch_size(Index n_train) {
  if (n_train < 1) throw ParameterError("batch_size: n_train must be positive");
  return std::max<Index>(n_train / 32, 1);
}

/// First and second moments for each trainable registry entry, in registry order.
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> m, v;

  static AdamState for_params(const std::vector<nn::ParamRef>& params);
};

/// One bias-corrected Adam update of a single tensor at step t >= 1.
template <typename Scalar>
void adam_update(BasicTensor<Scalar>& param, const BasicTensor<Scalar>& grad, BasicTensor<Scalar>& m,
                 BasicTensor<Scalar>& v, std::int64_t t, const TrainConfig& config) {
  param.require_same_shape(grad, "adam_update");
  param.require_same_shape(m, "adam_update");
  param.require_same_shape(v, "adam_update");
  if (t < 1) throw ParameterError("adam_update: step must be >= 1");
  const Scalar b1 = Scalar(config.beta1), b2 = Scalar(config.beta2);
  m.values() = b1 * m.values() + (Scalar(1) - b1) * grad.values();
  v.values() = b2 * v.values() + (Scalar(1) - b2) * grad.values().cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(t));
  const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(t));
  const Scalar lr = Scalar(config.learning_rate);
  const Scalar eps = Scalar(config.epsilon);
  param.values().array() -= lr * (m.values().array() / c1) / ((v.values().array() / c2).sqrt() + eps);
}

/// Advances state.step and updates every trainable parameter from its gradient.
void adam_step(const std::vector<nn::ParamRef>& params, AdamState& state, const TrainConfig& config);

}  // namespace harfuse

#endif  // HARFUSE_OPTIM_HPP
