#ifndef HARFUSE_NN_CONV_HPP
#define HARFUSE_NN_CONV_HPP

#include <string>
#include <utility>

#include "harfuse/tensor.hpp"

namespace harfuse::nn {

/// Output extent of a strided window: (in - kernel + pad_total) / stride + 1.
/// Throws when the division is inexact or the result is not positive.
inline Index conv_output_extent(Index in, Index kernel, Index stride, Index pad_total) {
  if (in < 1 || kernel < 1 || stride < 1 || pad_total < 0) {
    throw ShapeError("conv sizing: extents must be positive");
  }
  const Index span = in - kernel + pad_total;
  if (span < 0) {
    throw ShapeError("conv sizing: kernel " + std::to_string(kernel) + " exceeds padded input " +
                     std::to_string(in + pad_total));
  }
  if (span % stride != 0) {
    throw ShapeError("conv sizing: (" + std::to_string(in) + " - " + std::to_string(kernel) + " + " +
                     std::to_string(pad_total) + ") / " + std::to_string(stride) + " is not an integer");
  }
  return span / stride + 1;
}

/// Padding (before, after) that makes the output extent ceil(in / stride).
/// Any odd remainder goes after. A kernel shorter than its stride would need
/// negative padding, so that is rejected.
inline std::pair<Index, Index> same_padding(Index in, Index kernel, Index stride) {
  if (kernel < stride) {
    throw ShapeError("same padding needs kernel >= stride, got " + std::to_string(kernel) + " < " +
                     std::to_string(stride));
  }
  const Index out = (in + stride - 1) / stride;
  const Index total = std::max<Index>((out - 1) * stride + kernel - in, 0);
  return {total / 2, total - total / 2};
}

/// Geometry of a convolution over [N, H, W, C] maps. One-dimensional
/// convolutions run over [N, L, C] with the length as the width axis and
/// kernel_h = stride_h = 1.
struct ConvSpec {
  Index kernel_h = 1;
  Index kernel_w = 1;
  Index stride_h = 1;
  Index stride_w = 1;
  Index pad_top = 0;
  Index pad_bottom = 0;
  Index pad_left = 0;
  Index pad_right = 0;
  Index in_channels = 1;
  Index out_channels = 1;

  static ConvSpec conv1d(Index kernel, Index stride, Index padding, Index in_channels, Index out_channels) {
    return {1, kernel, 1, stride, 0, 0, padding, padding, in_channels, out_channels};
  }

  static ConvSpec conv2d(Index kernel_h, Index kernel_w, Index stride_h, Index stride_w, Index padding,
                         Index in_channels, Index out_channels) {
    return {kernel_h, kernel_w, stride_h, stride_w, padding, padding, padding, padding, in_channels, out_channels};
  }

  /// Output extents ceil(in / stride) for an input of in_h x in_w.
  static ConvSpec same(Index kernel_h, Index kernel_w, Index stride_h, Index stride_w, Index in_h, Index in_w,
                       Index in_channels, Index out_channels) {
    const auto [top, bottom] = same_padding(in_h, kernel_h, stride_h);
    const auto [left, right] = same_padding(in_w, kernel_w, stride_w);
    return {kernel_h, kernel_w, stride_h, stride_w, top, bottom, left, right, in_channels, out_channels};
  }

  Index out_h(Index in_h) const { return conv_output_extent(in_h, kernel_h, stride_h, pad_top + pad_bottom); }
  Index out_w(Index in_w) const { return conv_output_extent(in_w, kernel_w, stride_w, pad_left + pad_right); }
  Index patch_size() const { return kernel_h * kernel_w * in_channels; }

  Shape kernel_shape() const { return {kernel_h, kernel_w, in_channels, out_channels}; }

  /// Output shape for a rank-3 ([N, L, C]) or rank-4 ([N, H, W, C]) input.
  Shape output_shape(const Shape& input) const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

template <typename Scalar>
struct BasicConvParams {
  BasicTensor<Scalar> kernels;  // [kernel_h, kernel_w, in_channels, out_channels]
  BasicTensor<Scalar> bias;     // [out_channels]

  static BasicConvParams zeros_like(const ConvSpec& spec) {
    return {harfuse::zeros<Scalar>(spec.kernel_shape()), harfuse::zeros<Scalar>({spec.out_channels})};
  }
};

template <typename Scalar>
struct BasicConvGrads {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> kernels;
  BasicTensor<Scalar> bias;
};

using ConvParams = BasicConvParams<double>;
using ConvGrads = BasicConvGrads<double>;

namespace detail {

struct ConvGeometry {
  Index batch, in_h, in_w, out_h, out_w;
};

inline ConvGeometry conv_geometry(const Shape& input, const ConvSpec& spec) {
  if (input.size() != 3 && input.size() != 4) {
    throw ShapeError("conv input must be [N, L, C] or [N, H, W, C], got " + shape_string(input));
  }
  const bool one_d = input.size() == 3;
  const Index channels = input.back();
  if (channels != spec.in_channels) {
    throw ShapeError("conv channel mismatch: input has " + std::to_string(channels) + ", spec expects " +
                     std::to_string(spec.in_channels));
  }
  if (one_d && (spec.kernel_h != 1 || spec.stride_h != 1 || spec.pad_top != 0 || spec.pad_bottom != 0)) {
    throw ShapeError("one-dimensional input requires a one-dimensional conv spec");
  }
  ConvGeometry g{};
  g.batch = input[0];
  g.in_h = one_d ? 1 : input[1];
  g.in_w = one_d ? input[1] : input[2];
  g.out_h = spec.out_h(g.in_h);
  g.out_w = spec.out_w(g.in_w);
  return g;
}

/// Patch matrix: one row per (n, oy, ox), columns ordered (ky, kx, c) to match
/// the row-major kernel layout.
template <typename Scalar>
RowMatrix<Scalar> im2col(const BasicTensor<Scalar>& input, const ConvSpec& spec, const ConvGeometry& g) {
  const Index c_in = spec.in_channels;
  RowMatrix<Scalar> cols = RowMatrix<Scalar>::Zero(g.batch * g.out_h * g.out_w, spec.patch_size());
  const Scalar* src = input.data();
  for (Index n = 0; n < g.batch; ++n) {
    for (Index oy = 0; oy < g.out_h; ++oy) {
      for (Index ox = 0; ox < g.out_w; ++ox) {
        Scalar* row = cols.data() + ((n * g.out_h + oy) * g.out_w + ox) * spec.patch_size();
        for (Index ky = 0; ky < spec.kernel_h; ++ky) {
          const Index iy = oy * spec.stride_h + ky - spec.pad_top;
          if (iy < 0 || iy >= g.in_h) continue;
          for (Index kx = 0; kx < spec.kernel_w; ++kx) {
            const Index ix = ox * spec.stride_w + kx - spec.pad_left;
            if (ix < 0 || ix >= g.in_w) continue;
            const Scalar* pixel = src + ((n * g.in_h + iy) * g.in_w + ix) * c_in;
            std::copy_n(pixel, c_in, row + (ky * spec.kernel_w + kx) * c_in);
          }
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const ConvSpec& spec, const ConvGeometry& g, BasicTensor<Scalar>& out) {
  const Index c_in = spec.in_channels;
  Scalar* dst = out.data();
  for (Index n = 0; n < g.batch; ++n) {
    for (Index oy = 0; oy < g.out_h; ++oy) {
      for (Index ox = 0; ox < g.out_w; ++ox) {
        const Scalar* row = cols.data() + ((n * g.out_h + oy) * g.out_w + ox) * spec.patch_size();
        for (Index ky = 0; ky < spec.kernel_h; ++ky) {
          const Index iy = oy * spec.stride_h + ky - spec.pad_top;
          if (iy < 0 || iy >= g.in_h) continue;
          for (Index kx = 0; kx < spec.kernel_w; ++kx) {
            const Index ix = ox * spec.stride_w + kx - spec.pad_left;
            if (ix < 0 || ix >= g.in_w) continue;
            Scalar* pixel = dst + ((n * g.in_h + iy) * g.in_w + ix) * c_in;
            const Scalar* patch = row + (ky * spec.kernel_w + kx) * c_in;
            for (Index c = 0; c < c_in; ++c) pixel[c] += patch[c];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void check_params(const ConvSpec& spec, const BasicConvParams<Scalar>& params) {
  if (params.kernels.shape() != spec.kernel_shape() || params.bias.shape() != Shape{spec.out_channels}) {
    throw ShapeError("conv params " + shape_string(params.kernels.shape()) + " do not match spec " +
                     shape_string(spec.kernel_shape()));
  }
}

}  // namespace detail

inline Shape ConvSpec::output_shape(const Shape& input) const {
  const auto g = detail::conv_geometry(input, *this);
  if (input.size() == 3) return {g.batch, g.out_w, out_channels};
  return {g.batch, g.out_h, g.out_w, out_channels};
}

/// Z(i, j) = sum_{m, n, c} Y(i*S_H + m - P, j*S_W + n - P, c) H(m, n, c) + b,
/// evaluated for every output channel. No kernel flip.
template <typename Scalar>
BasicTensor<Scalar> conv_forward(const BasicTensor<Scalar>& input, const ConvSpec& spec,
                                 const BasicConvParams<Scalar>& params) {
  detail::check_params(spec, params);
  const auto g = detail::conv_geometry(input.shape(), spec);
  const RowMatrix<Scalar> cols = detail::im2col(input, spec, g);
  BasicTensor<Scalar> out(spec.output_shape(input.shape()));
  auto out_m = out.as_matrix(cols.rows());
  out_m.noalias() = cols * params.kernels.as_matrix(spec.patch_size());
  out_m.rowwise() += params.bias.values().transpose();
  return out;
}

template <typename Scalar>
BasicConvGrads<Scalar> conv_backward(const BasicTensor<Scalar>& input, const ConvSpec& spec,
                                     const BasicConvParams<Scalar>& params, const BasicTensor<Scalar>& grad_out) {
  detail::check_params(spec, params);
  const auto g = detail::conv_geometry(input.shape(), spec);
  if (grad_out.shape() != spec.output_shape(input.shape())) {
    throw ShapeError("conv_backward: grad_out " + shape_string(grad_out.shape()) + " does not match output " +
                     shape_string(spec.output_shape(input.shape())));
  }
  const Index rows = g.batch * g.out_h * g.out_w;
  const auto gout = grad_out.as_matrix(rows);
  const auto kernel = params.kernels.as_matrix(spec.patch_size());
  const RowMatrix<Scalar> cols = detail::im2col(input, spec, g);

  BasicConvGrads<Scalar> grads{harfuse::zeros<Scalar>(input.shape()), harfuse::zeros<Scalar>(spec.kernel_shape()),
                               harfuse::zeros<Scalar>({spec.out_channels})};
  grads.kernels.as_matrix(spec.patch_size()).noalias() = cols.transpose() * gout;
  grads.bias.values() = gout.colwise().sum().transpose();
  const RowMatrix<Scalar> grad_cols = gout * kernel.transpose();
  detail::col2im(grad_cols, spec, g, grads.input);
  return grads;
}

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_CONV_HPP
