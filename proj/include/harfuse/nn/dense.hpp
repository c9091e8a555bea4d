#ifndef HARFUSE_NN_DENSE_HPP
#define HARFUSE_NN_DENSE_HPP

#include <cmath>
#include <string>

#include "harfuse/tensor.hpp"

namespace harfuse::nn {

template <typename Scalar>
struct BasicDenseGrads {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> weight;
  BasicTensor<Scalar> bias;
};
using DenseGrads = BasicDenseGrads<double>;

/// x [N, F] * W [F, K] + b [K].
template <typename Scalar>
BasicTensor<Scalar> dense_forward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight,
                                  const BasicTensor<Scalar>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0) || bias.shape() != Shape{weight.dim(1)}) {
    throw ShapeError("dense: x " + shape_string(x.shape()) + ", W " + shape_string(weight.shape()) + ", b " +
                     shape_string(bias.shape()));
  }
  BasicTensor<Scalar> out({x.dim(0), weight.dim(1)});
  out.matrix().noalias() = x.matrix() * weight.matrix();
  out.matrix().rowwise() += bias.values().transpose();
  return out;
}

template <typename Scalar>
BasicDenseGrads<Scalar> dense_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight,
                                       const BasicTensor<Scalar>& grad_out) {
  BasicDenseGrads<Scalar> g{BasicTensor<Scalar>(x.shape()), BasicTensor<Scalar>(weight.shape()),
                            BasicTensor<Scalar>({weight.dim(1)})};
  g.input.matrix().noalias() = grad_out.matrix() * weight.matrix().transpose();
  g.weight.matrix().noalias() = x.matrix().transpose() * grad_out.matrix();
  g.bias.values() = grad_out.matrix().colwise().sum().transpose();
  return g;
}

template <typename Scalar>
struct BasicSoftmaxLoss {
  Scalar loss;                          // mean over the batch of -log p[true]
  BasicTensor<Scalar> probabilities;    // [N, K]
  BasicTensor<Scalar> grad_logits;      // [N, K], per sample p - one_hot
};
using SoftmaxLoss = BasicSoftmaxLoss<double>;

template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& logits) {
  BasicTensor<Scalar> p = logits;
  auto m = p.matrix();
  for (Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  return p;
}

/// Categorical cross-entropy against one-hot labels.
template <typename Scalar>
BasicSoftmaxLoss<Scalar> softmax_crossentropy(const BasicTensor<Scalar>& logits, const BasicTensor<Scalar>& one_hot) {
  if (logits.rank() != 2 || logits.shape() != one_hot.shape()) {
    throw ShapeError("softmax_crossentropy: logits " + shape_string(logits.shape()) + " vs labels " +
                     shape_string(one_hot.shape()));
  }
  const auto y = one_hot.matrix();
  for (Index r = 0; r < y.rows(); ++r) {
    Index hot = 0;
    for (Index k = 0; k < y.cols(); ++k) {
      if (y(r, k) == Scalar(1)) ++hot;
      else if (y(r, k) != Scalar(0)) hot = -1000;
    }
    if (hot != 1) throw LabelError("row " + std::to_string(r) + " of the label matrix is not one-hot");
  }
  BasicSoftmaxLoss<Scalar> out{Scalar(0), softmax(logits), BasicTensor<Scalar>(logits.shape())};
  const auto p = out.probabilities.matrix();
  const auto z = logits.matrix();
  for (Index r = 0; r < p.rows(); ++r) {
    Index k = 0;
    y.row(r).maxCoeff(&k);
    // log-sum-exp form keeps the loss finite when p underflows
    const Scalar zmax = z.row(r).maxCoeff();
    const Scalar lse = zmax + std::log((z.row(r).array() - zmax).exp().sum());
    out.loss += lse - z(r, k);
  }
  out.loss /= static_cast<Scalar>(p.rows());
  out.grad_logits.matrix() = p - y;
  return out;
}

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_DENSE_HPP
