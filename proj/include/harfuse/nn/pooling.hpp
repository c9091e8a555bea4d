#ifndef HARFUSE_NN_POOLING_HPP
#define HARFUSE_NN_POOLING_HPP

#include "harfuse/tensor.hpp"

namespace harfuse::nn {

/// Global average pooling: [N, spatial..., C] -> [N, C], each output the mean
/// of its channel over every spatial position.
template <typename Scalar>
BasicTensor<Scalar> gap(const BasicTensor<Scalar>& x) {
  if (x.rank() < 3) {
    throw ShapeError("gap: input " + shape_string(x.shape()) + " has no spatial axes");
  }
  const Index n = x.dim(0);
  const Index c = x.dim(-1);
  const Index sites = x.size() / (n * c);
  BasicTensor<Scalar> out({n, c});
  for (Index b = 0; b < n; ++b) {
    out.matrix().row(b) = Eigen::Map<const RowMatrix<Scalar>>(x.data() + b * sites * c, sites, c).colwise().mean();
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> gap_backward(const Shape& input_shape, const BasicTensor<Scalar>& grad_out) {
  BasicTensor<Scalar> grad(input_shape);
  const Index n = grad.dim(0);
  const Index c = grad.dim(-1);
  if (grad_out.shape() != Shape{n, c}) throw ShapeError("gap_backward: gradient shape mismatch");
  const Index sites = grad.size() / (n * c);
  for (Index b = 0; b < n; ++b) {
    Eigen::Map<RowMatrix<Scalar>>(grad.data() + b * sites * c, sites, c).rowwise() =
        grad_out.matrix().row(b) / static_cast<Scalar>(sites);
  }
  return grad;
}

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_POOLING_HPP
