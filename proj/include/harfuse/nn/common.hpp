#ifndef HARFUSE_NN_COMMON_HPP
#define HARFUSE_NN_COMMON_HPP

#include <cmath>

namespace harfuse::nn {

enum class Mode { Train, Infer };

template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_COMMON_HPP
