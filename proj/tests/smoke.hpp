#ifndef HARFUSE_TESTS_SMOKE_HPP
#define HARFUSE_TESTS_SMOKE_HPP

#include "harfuse/dataset.hpp"
#include "harfuse/diagnostics.hpp"

namespace smoke {

using namespace harfuse;

/// Two classes separated by the sign of a fixed pattern, plus noise.
inline Dataset separable_set(Index n, Index length, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor pattern = randn({length}, rng);
  Dataset d;
  d.name = "separable";
  d.class_names = {"neg", "pos"};
  Tensor x(Shape{n, length, 1});
  for (Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double sign = label == 1 ? 1.0 : -1.0;
    for (Index t = 0; t < length; ++t) x(i, t, 0) = sign * pattern[t] + 0.3 * rng.normal();
    d.labels.push_back(label);
  }
  d.blocks.push_back(std::move(x));
  return d;
}

inline ModelConfig smoke_config(Index length) {
  return tiny_config(NetKind::CNN1D, NetKind::LSTM, false, InputKind::SingleFeatureVector, 8, length, 2);
}

}  // namespace smoke

#endif  // HARFUSE_TESTS_SMOKE_HPP
