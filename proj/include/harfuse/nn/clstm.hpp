#ifndef HARFUSE_NN_CLSTM_HPP
#define HARFUSE_NN_CLSTM_HPP

#include <array>
#include <string>
#include <vector>

#include "harfuse/nn/conv.hpp"
#include "harfuse/nn/lstm.hpp"

namespace harfuse::nn {

/// Convolutional LSTM parameters. Each gate is a convolution over the
/// channel concatenation [X_t, H_{t-1}] with kernel
/// [kernel_h, kernel_w, in_channels + units, units]. Gate convolutions must
/// preserve the spatial shape (stride 1, padding kernel - 1 per axis) so that
/// X_t and H_{t-1} stay aligned at every step.
template <typename Scalar>
struct BasicClstmParams {
  std::array<BasicConvParams<Scalar>, 4> gates;  // indexed by Gate
  ConvSpec gate_spec;                            // out_channels == units
  Index units = 0;
  Index in_channels = 0;
  int spatial_rank = 1;  // 1: [N, T, L, C], 2: [N, T, H, W, C]

  static ConvSpec same_spec(Index kernel_h, Index kernel_w, Index in_channels, Index units) {
    return ConvSpec{kernel_h, kernel_w, 1, 1, (kernel_h - 1) / 2, kernel_h - 1 - (kernel_h - 1) / 2,
                    (kernel_w - 1) / 2, kernel_w - 1 - (kernel_w - 1) / 2, in_channels + units, units};
  }

  static BasicClstmParams zeros_for(Index in_channels, Index units, Index kernel_h, Index kernel_w,
                                    int spatial_rank) {
    BasicClstmParams p;
    p.units = units;
    p.in_channels = in_channels;
    p.spatial_rank = spatial_rank;
    p.gate_spec = same_spec(kernel_h, kernel_w, in_channels, units);
    for (auto& g : p.gates) g = BasicConvParams<Scalar>::zeros_like(p.gate_spec);
    return p;
  }

  void validate() const {
    const ConvSpec& s = gate_spec;
    if (spatial_rank != 1 && spatial_rank != 2) throw ConfigError("clstm: spatial rank must be 1 or 2");
    if (spatial_rank == 1 && (s.kernel_h != 1 || s.pad_top != 0 || s.pad_bottom != 0)) {
      throw ConfigError("clstm: one-dimensional params need kernel_h = 1 and no vertical padding");
    }
    if (s.stride_h != 1 || s.stride_w != 1 || s.pad_top + s.pad_bottom != s.kernel_h - 1 ||
        s.pad_left + s.pad_right != s.kernel_w - 1) {
      throw ConfigError("clstm: gate convolution must use stride 1 and padding kernel-1 so the hidden state "
                        "keeps the input's spatial shape");
    }
    if (s.in_channels != in_channels + units || s.out_channels != units) {
      throw ConfigError("clstm: gate spec channels disagree with in_channels/units");
    }
    for (const auto& g : gates) detail::check_params(gate_spec, g);
  }

  /// All four gates as one convolution with 4 * units output channels.
  ConvSpec stacked_spec() const {
    ConvSpec s = gate_spec;
    s.out_channels = 4 * units;
    return s;
  }
  BasicConvParams<Scalar> stacked_params() const {
    const ConvSpec s = stacked_spec();
    BasicConvParams<Scalar> p = BasicConvParams<Scalar>::zeros_like(s);
    auto k = p.kernels.as_matrix(s.patch_size());
    for (int g = 0; g < 4; ++g) {
      k.middleCols(g * units, units) = gates[g].kernels.as_matrix(s.patch_size());
      p.bias.values().segment(g * units, units) = gates[g].bias.values();
    }
    return p;
  }
};

template <typename Scalar>
struct BasicClstmTrace {
  BasicTensor<Scalar> hidden_final;     // [N, spatial..., U]
  BasicTensor<Scalar> hidden_sequence;  // [N, T, spatial..., U]
  BasicTensor<Scalar> cell_final;       // [N, spatial..., U]
  // Saved for the backward pass.
  Shape input_shape;
  Shape step_shape;                          // [N, spatial..., C + U]
  std::vector<BasicTensor<Scalar>> stacked;  // [X_t, H_{t-1}] per step
  RowMatrix<Scalar> c0;
  std::vector<detail::CellStep<Scalar>> steps;
};

template <typename Scalar>
struct BasicClstmGrads {
  BasicTensor<Scalar> input;
  std::array<BasicConvGrads<Scalar>, 4> gates;  // .input unused
};

using ClstmParams = BasicClstmParams<double>;
using ClstmTrace = BasicClstmTrace<double>;
using ClstmGrads = BasicClstmGrads<double>;

namespace detail {

struct ClstmLayout {
  Index batch, steps, sites, channels;
  Shape spatial;
};

inline ClstmLayout clstm_layout(const Shape& input, int spatial_rank, Index in_channels) {
  if (static_cast<int>(input.size()) != 3 + spatial_rank) {
    throw ShapeError("clstm: expected [N, T, spatial(" + std::to_string(spatial_rank) + "), C], got " +
                     shape_string(input));
  }
  ClstmLayout l{input[0], input[1], 1, input.back(), {}};
  for (int i = 0; i < spatial_rank; ++i) {
    l.spatial.push_back(input[static_cast<std::size_t>(2 + i)]);
    l.sites *= l.spatial.back();
  }
  if (l.channels != in_channels) {
    throw ShapeError("clstm: input has " + std::to_string(l.channels) + " channels, params expect " +
                     std::to_string(in_channels));
  }
  return l;
}

inline Shape with_channels(Index batch, const Shape& spatial, Index channels) {
  Shape s{batch};
  s.insert(s.end(), spatial.begin(), spatial.end());
  s.push_back(channels);
  return s;
}

}  // namespace detail

/// Runs the convolutional recurrence with zero initial hidden and cell maps.
template <typename Scalar>
BasicClstmTrace<Scalar> clstm_forward(const BasicTensor<Scalar>& sequence, const BasicClstmParams<Scalar>& params) {
  params.validate();
  const auto l = detail::clstm_layout(sequence.shape(), params.spatial_rank, params.in_channels);
  const Index u = params.units;
  const Index c = l.channels;
  const Index rows = l.batch * l.sites;
  const ConvSpec spec = params.stacked_spec();
  const BasicConvParams<Scalar> stacked = params.stacked_params();

  BasicClstmTrace<Scalar> trace;
  trace.input_shape = sequence.shape();
  trace.step_shape = detail::with_channels(l.batch, l.spatial, c + u);
  trace.c0 = RowMatrix<Scalar>::Zero(rows, u);
  Shape seq_shape = sequence.shape();
  seq_shape.back() = u;
  trace.hidden_sequence = BasicTensor<Scalar>(seq_shape);

  const Index frame = l.sites * c;  // one time step of one sample
  for (Index t = 0; t < l.steps; ++t) {
    BasicTensor<Scalar> xh(trace.step_shape);
    auto xh_m = xh.as_matrix(rows);
    for (Index n = 0; n < l.batch; ++n) {
      xh_m.block(n * l.sites, 0, l.sites, c) =
          Eigen::Map<const RowMatrix<Scalar>>(sequence.data() + (n * l.steps + t) * frame, l.sites, c);
    }
    if (t > 0) xh_m.rightCols(u) = trace.steps.back().hidden;
    else xh_m.rightCols(u).setZero();

    BasicTensor<Scalar> pre_t = conv_forward(xh, spec, stacked);
    const RowMatrix<Scalar> pre = pre_t.as_matrix(rows);
    const RowMatrix<Scalar>& c_prev = t == 0 ? trace.c0 : trace.steps.back().cell;
    trace.steps.push_back(detail::cell_forward(pre, c_prev, u));
    trace.stacked.push_back(std::move(xh));

    const auto& h = trace.steps.back().hidden;
    for (Index n = 0; n < l.batch; ++n) {
      Eigen::Map<RowMatrix<Scalar>>(trace.hidden_sequence.data() + (n * l.steps + t) * l.sites * u, l.sites, u) =
          h.middleRows(n * l.sites, l.sites);
    }
  }
  const Shape out_shape = detail::with_channels(l.batch, l.spatial, u);
  trace.hidden_final = BasicTensor<Scalar>(out_shape);
  trace.hidden_final.as_matrix(rows) = trace.steps.back().hidden;
  trace.cell_final = BasicTensor<Scalar>(out_shape);
  trace.cell_final.as_matrix(rows) = trace.steps.back().cell;
  return trace;
}

/// Backpropagation through time from a gradient on the final hidden map and,
/// optionally, on the full hidden sequence.
template <typename Scalar>
BasicClstmGrads<Scalar> clstm_backward(const BasicClstmTrace<Scalar>& trace, const BasicClstmParams<Scalar>& params,
                                       const BasicTensor<Scalar>& grad_hidden_final,
                                       const BasicTensor<Scalar>& grad_hidden_sequence = {}) {
  trace.hidden_final.require_same_shape(grad_hidden_final, "clstm_backward");
  if (!grad_hidden_sequence.empty()) trace.hidden_sequence.require_same_shape(grad_hidden_sequence, "clstm_backward");
  const auto l = detail::clstm_layout(trace.input_shape, params.spatial_rank, params.in_channels);
  const Index u = params.units;
  const Index c = l.channels;
  const Index rows = l.batch * l.sites;
  const ConvSpec spec = params.stacked_spec();
  const BasicConvParams<Scalar> stacked = params.stacked_params();

  BasicTensor<Scalar> grad_input(trace.input_shape);
  BasicTensor<Scalar> grad_kernels = zeros<Scalar>(spec.kernel_shape());
  BasicTensor<Scalar> grad_bias = zeros<Scalar>({spec.out_channels});
  RowMatrix<Scalar> dh_next = grad_hidden_final.as_matrix(rows);
  RowMatrix<Scalar> dc = RowMatrix<Scalar>::Zero(rows, u);
  Shape pre_shape = trace.step_shape;
  pre_shape.back() = 4 * u;
  const Index frame = l.sites * c;

  for (Index t = l.steps - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    RowMatrix<Scalar> dh = dh_next;
    if (!grad_hidden_sequence.empty()) {
      for (Index n = 0; n < l.batch; ++n) {
        dh.middleRows(n * l.sites, l.sites) += Eigen::Map<const RowMatrix<Scalar>>(
            grad_hidden_sequence.data() + (n * l.steps + t) * l.sites * u, l.sites, u);
      }
    }
    const RowMatrix<Scalar>& c_prev = t == 0 ? trace.c0 : trace.steps[ts - 1].cell;
    BasicTensor<Scalar> dpre(pre_shape);
    dpre.as_matrix(rows) = detail::cell_backward(trace.steps[ts], c_prev, dh, dc, u);

    const auto g = conv_backward(trace.stacked[ts], spec, stacked, dpre);
    grad_kernels += g.kernels;
    grad_bias += g.bias;
    const auto gxh = g.input.as_matrix(rows);
    for (Index n = 0; n < l.batch; ++n) {
      Eigen::Map<RowMatrix<Scalar>>(grad_input.data() + (n * l.steps + t) * frame, l.sites, c) =
          gxh.block(n * l.sites, 0, l.sites, c);
    }
    dh_next = gxh.rightCols(u);
  }

  BasicClstmGrads<Scalar> grads;
  grads.input = std::move(grad_input);
  const auto k = grad_kernels.as_matrix(spec.patch_size());
  for (int gi = 0; gi < 4; ++gi) {
    grads.gates[gi].kernels = BasicTensor<Scalar>(params.gate_spec.kernel_shape());
    grads.gates[gi].kernels.as_matrix(spec.patch_size()) = k.middleCols(gi * u, u);
    grads.gates[gi].bias = BasicTensor<Scalar>({u});
    grads.gates[gi].bias.values() = grad_bias.values().segment(gi * u, u);
  }
  return grads;
}

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_CLSTM_HPP
