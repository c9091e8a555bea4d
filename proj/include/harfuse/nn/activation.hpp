#ifndef HARFUSE_NN_ACTIVATION_HPP
#define HARFUSE_NN_ACTIVATION_HPP

#include "harfuse/tensor.hpp"

namespace harfuse::nn {

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& x) {
  return map(x, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); });
}

/// Passes gradient where x > 0; the subgradient at exactly 0 is 0.
template <typename Scalar>
BasicTensor<Scalar> relu_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& grad_out) {
  return zip(x, grad_out, [](Scalar v, Scalar g) { return v > Scalar(0) ? g : Scalar(0); });
}

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_ACTIVATION_HPP
