#ifndef HARFUSE_NN_LSTM_HPP
#define HARFUSE_NN_LSTM_HPP

#include <array>
#include <string>
#include <vector>

#include "harfuse/nn/common.hpp"
#include "harfuse/tensor.hpp"

namespace harfuse::nn {

/// Gate order used wherever the four gates are stacked: forget, input,
/// cell candidate, output.
enum Gate : int { kForget = 0, kInput = 1, kCell = 2, kOutput = 3 };

namespace detail {

/// Activations of one recurrent step over R rows (batch, or batch x spatial
/// sites for the convolutional variant).
template <typename Scalar>
struct CellStep {
  RowMatrix<Scalar> gates;   // [R, 4U] post-activation f, i, g, o
  RowMatrix<Scalar> cell;    // [R, U]
  RowMatrix<Scalar> tanh_c;  // [R, U]
  RowMatrix<Scalar> hidden;  // [R, U]
};

/// f = s(Zf), i = s(Zi), g = tanh(Zc), o = s(Zo),
/// C = f * C_prev + i * g, H = o * tanh(C).
template <typename Scalar>
CellStep<Scalar> cell_forward(const RowMatrix<Scalar>& pre, const RowMatrix<Scalar>& c_prev, Index units) {
  CellStep<Scalar> s;
  s.gates.resize(pre.rows(), pre.cols());
  const auto sig = [](Scalar v) { return sigmoid(v); };
  s.gates.leftCols(2 * units) = pre.leftCols(2 * units).unaryExpr(sig);
  s.gates.middleCols(2 * units, units) = pre.middleCols(2 * units, units).array().tanh().matrix();
  s.gates.rightCols(units) = pre.rightCols(units).unaryExpr(sig);
  const auto f = s.gates.leftCols(units).array();
  const auto i = s.gates.middleCols(units, units).array();
  const auto g = s.gates.middleCols(2 * units, units).array();
  const auto o = s.gates.rightCols(units).array();
  s.cell = (f * c_prev.array() + i * g).matrix();
  s.tanh_c = s.cell.array().tanh().matrix();
  s.hidden = (o * s.tanh_c.array()).matrix();
  return s;
}

/// Given dL/dH_t (total) and dL/dC_t carried from step t+1, returns the
/// pre-activation gradient [R, 4U] and writes dL/dC_{t-1} into dc.
template <typename Scalar>
RowMatrix<Scalar> cell_backward(const CellStep<Scalar>& s, const RowMatrix<Scalar>& c_prev,
                                const RowMatrix<Scalar>& dh, RowMatrix<Scalar>& dc, Index units) {
  const auto f = s.gates.leftCols(units).array();
  const auto i = s.gates.middleCols(units, units).array();
  const auto g = s.gates.middleCols(2 * units, units).array();
  const auto o = s.gates.rightCols(units).array();
  const auto tc = s.tanh_c.array();
  dc = (dc.array() + dh.array() * o * (Scalar(1) - tc * tc)).matrix();
  RowMatrix<Scalar> dpre(s.gates.rows(), 4 * units);
  dpre.leftCols(units) = (dc.array() * c_prev.array() * f * (Scalar(1) - f)).matrix();
  dpre.middleCols(units, units) = (dc.array() * g * i * (Scalar(1) - i)).matrix();
  dpre.middleCols(2 * units, units) = (dc.array() * i * (Scalar(1) - g * g)).matrix();
  dpre.rightCols(units) = (dh.array() * tc * o * (Scalar(1) - o)).matrix();
  dc = (dc.array() * f).matrix();
  return dpre;
}

}  // namespace detail

/// Dense-gate LSTM: every gate is W [input_dim + units, units] applied to the
/// concatenation [X_t, H_{t-1}], plus a bias [units].
template <typename Scalar>
struct BasicLstmParams {
  std::array<BasicTensor<Scalar>, 4> weights;  // indexed by Gate
  std::array<BasicTensor<Scalar>, 4> biases;
  Index units = 0;

  static BasicLstmParams zeros_for(Index input_dim, Index units) {
    BasicLstmParams p;
    p.units = units;
    for (int g = 0; g < 4; ++g) {
      p.weights[g] = harfuse::zeros<Scalar>({input_dim + units, units});
      p.biases[g] = harfuse::zeros<Scalar>({units});
    }
    return p;
  }

  Index input_dim() const { return weights[0].dim(0) - units; }

  void validate() const {
    for (int g = 0; g < 4; ++g) {
      if (weights[g].shape() != weights[0].shape() || weights[g].rank() != 2 || weights[g].dim(1) != units ||
          biases[g].shape() != Shape{units}) {
        throw ShapeError("lstm params: gate shapes disagree");
      }
    }
  }

  /// [input_dim + units, 4 * units], gates side by side.
  RowMatrix<Scalar> stacked_weights() const {
    RowMatrix<Scalar> w(weights[0].dim(0), 4 * units);
    for (int g = 0; g < 4; ++g) w.middleCols(g * units, units) = weights[g].matrix();
    return w;
  }
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> stacked_bias() const {
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> b(4 * units);
    for (int g = 0; g < 4; ++g) b.segment(g * units, units) = biases[g].values().transpose();
    return b;
  }
};

template <typename Scalar>
struct BasicLstmTrace {
  BasicTensor<Scalar> hidden;      // [N, T, U] (or [T, U] for unbatched input)
  BasicTensor<Scalar> cell_final;  // [N, U] (or [U])
  // Saved for the backward pass.
  bool batched = true;
  BasicTensor<Scalar> input;  // [N, T, D]
  RowMatrix<Scalar> h0, c0;
  std::vector<detail::CellStep<Scalar>> steps;
};

template <typename Scalar>
struct BasicLstmGrads {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> h0;
  BasicTensor<Scalar> c0;
  std::array<BasicTensor<Scalar>, 4> weights;
  std::array<BasicTensor<Scalar>, 4> biases;
};

using LstmParams = BasicLstmParams<double>;
using LstmTrace = BasicLstmTrace<double>;
using LstmGrads = BasicLstmGrads<double>;

namespace detail {

template <typename Scalar>
RowMatrix<Scalar> initial_state(const BasicTensor<Scalar>& state, Index rows, Index units, const char* what) {
  if (state.empty()) return RowMatrix<Scalar>::Zero(rows, units);
  if (state.size() != rows * units) {
    throw ShapeError(std::string("lstm: ") + what + " has shape " + shape_string(state.shape()) + ", expected " +
                     std::to_string(rows) + "x" + std::to_string(units));
  }
  return state.as_matrix(rows);
}

}  // namespace detail

/// Runs the recurrence over a [N, T, D] (or unbatched [T, D]) sequence.
/// Empty h0 / c0 mean zero initial states.
template <typename Scalar>
BasicLstmTrace<Scalar> lstm_forward(const BasicTensor<Scalar>& sequence, const BasicLstmParams<Scalar>& params,
                                    const BasicTensor<Scalar>& h0 = {}, const BasicTensor<Scalar>& c0 = {}) {
  params.validate();
  BasicLstmTrace<Scalar> trace;
  trace.batched = sequence.rank() == 3;
  if (sequence.rank() != 2 && sequence.rank() != 3) {
    throw ShapeError("lstm: sequence must be [T, D] or [N, T, D], got " + shape_string(sequence.shape()));
  }
  trace.input = trace.batched ? sequence : sequence.reshaped({1, sequence.dim(0), sequence.dim(1)});
  const Index n = trace.input.dim(0);
  const Index steps = trace.input.dim(1);
  const Index d = trace.input.dim(2);
  const Index u = params.units;
  if (d != params.input_dim()) {
    throw ShapeError("lstm: input dim " + std::to_string(d) + " but params expect " +
                     std::to_string(params.input_dim()));
  }
  trace.h0 = detail::initial_state(h0, n, u, "h0");
  trace.c0 = detail::initial_state(c0, n, u, "c0");

  const RowMatrix<Scalar> w = params.stacked_weights();
  const auto b = params.stacked_bias();
  BasicTensor<Scalar> hidden({n, steps, u});
  RowMatrix<Scalar> xh(n, d + u);
  trace.steps.reserve(static_cast<std::size_t>(steps));
  for (Index t = 0; t < steps; ++t) {
    for (Index r = 0; r < n; ++r) {
      xh.row(r).head(d) = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(
          trace.input.data() + (r * steps + t) * d, d);
    }
    xh.rightCols(u) = t == 0 ? trace.h0 : trace.steps.back().hidden;
    RowMatrix<Scalar> pre = xh * w;
    pre.rowwise() += b;
    const RowMatrix<Scalar>& c_prev = t == 0 ? trace.c0 : trace.steps.back().cell;
    trace.steps.push_back(detail::cell_forward(pre, c_prev, u));
    for (Index r = 0; r < n; ++r) {
      Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(hidden.data() + (r * steps + t) * u, u) =
          trace.steps.back().hidden.row(r);
    }
  }
  trace.cell_final = BasicTensor<Scalar>({n, u});
  trace.cell_final.matrix() = trace.steps.back().cell;
  if (!trace.batched) {
    hidden = hidden.reshaped({steps, u});
    trace.cell_final = trace.cell_final.reshaped({u});
  }
  trace.hidden = std::move(hidden);
  return trace;
}

/// Backpropagation through time. grad_hidden matches trace.hidden; an empty
/// grad_cell_final means the final cell state is unused downstream.
template <typename Scalar>
BasicLstmGrads<Scalar> lstm_backward(const BasicLstmTrace<Scalar>& trace, const BasicLstmParams<Scalar>& params,
                                     const BasicTensor<Scalar>& grad_hidden,
                                     const BasicTensor<Scalar>& grad_cell_final = {}) {
  trace.hidden.require_same_shape(grad_hidden, "lstm_backward");
  const Index n = trace.input.dim(0);
  const Index steps = trace.input.dim(1);
  const Index d = trace.input.dim(2);
  const Index u = params.units;
  const RowMatrix<Scalar> w = params.stacked_weights();

  RowMatrix<Scalar> dw = RowMatrix<Scalar>::Zero(d + u, 4 * u);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> db = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(4 * u);
  BasicTensor<Scalar> grad_input({n, steps, d});
  RowMatrix<Scalar> dc = grad_cell_final.empty() ? RowMatrix<Scalar>::Zero(n, u) : detail::initial_state(grad_cell_final, n, u, "grad_cell_final");
  RowMatrix<Scalar> dh_next = RowMatrix<Scalar>::Zero(n, u);
  RowMatrix<Scalar> xh(n, d + u);
  RowMatrix<Scalar> dh(n, u);

  for (Index t = steps - 1; t >= 0; --t) {
    for (Index r = 0; r < n; ++r) {
      dh.row(r) = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(grad_hidden.data() + (r * steps + t) * u, u);
    }
    dh += dh_next;
    const RowMatrix<Scalar>& c_prev = t == 0 ? trace.c0 : trace.steps[static_cast<std::size_t>(t - 1)].cell;
    const RowMatrix<Scalar> dpre = detail::cell_backward(trace.steps[static_cast<std::size_t>(t)], c_prev, dh, dc, u);

    for (Index r = 0; r < n; ++r) {
      xh.row(r).head(d) = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(
          trace.input.data() + (r * steps + t) * d, d);
    }
    xh.rightCols(u) = t == 0 ? trace.h0 : trace.steps[static_cast<std::size_t>(t - 1)].hidden;
    dw.noalias() += xh.transpose() * dpre;
    db += dpre.colwise().sum();
    const RowMatrix<Scalar> dxh = dpre * w.transpose();
    for (Index r = 0; r < n; ++r) {
      Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(grad_input.data() + (r * steps + t) * d, d) =
          dxh.row(r).head(d);
    }
    dh_next = dxh.rightCols(u);
  }

  BasicLstmGrads<Scalar> grads;
  for (int g = 0; g < 4; ++g) {
    grads.weights[g] = BasicTensor<Scalar>({d + u, u});
    grads.weights[g].matrix() = dw.middleCols(g * u, u);
    grads.biases[g] = BasicTensor<Scalar>({u});
    grads.biases[g].values() = db.segment(g * u, u).transpose();
  }
  grads.h0 = BasicTensor<Scalar>({n, u});
  grads.h0.matrix() = dh_next;
  grads.c0 = BasicTensor<Scalar>({n, u});
  grads.c0.matrix() = dc;
  grads.input = trace.batched ? std::move(grad_input) : grad_input.reshaped({steps, d});
  return grads;
}

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_LSTM_HPP
