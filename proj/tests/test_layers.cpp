#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "harfuse/nn/activation.hpp"
#include "harfuse/nn/batchnorm.hpp"
#include "harfuse/nn/clstm.hpp"
#include "harfuse/nn/conv.hpp"
#include "harfuse/nn/dense.hpp"
#include "harfuse/nn/gradcheck.hpp"
#include "harfuse/nn/lstm.hpp"
#include "harfuse/nn/module.hpp"
#include "harfuse/nn/pooling.hpp"
#include "oracles.hpp"

using namespace harfuse;
using namespace harfuse::nn;

namespace {

std::vector<double> to_vec(const Tensor& t) { return {t.begin(), t.end()}; }

ConvParams random_conv_params(const ConvSpec& spec, Rng& rng) {
  return {randn(spec.kernel_shape(), rng), randn({spec.out_channels}, rng)};
}

LstmParams random_lstm(Index d, Index u, Rng& rng, double scale = 0.5) {
  auto p = LstmParams::zeros_for(d, u);
  for (int g = 0; g < 4; ++g) {
    p.weights[g] = randn({d + u, u}, rng, scale);
    p.biases[g] = randn({u}, rng, scale);
  }
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolution

TEST_CASE("conv output sizing") {
  CHECK(conv_output_extent(1024, 16, 8, 0) == 127);
  CHECK(conv_output_extent(5, 3, 1, 2) == 5);
  CHECK_THROWS_AS(conv_output_extent(10, 16, 8, 0), ShapeError);
  CHECK_THROWS_AS(conv_output_extent(561, 16, 8, 0), ShapeError);  // 545 / 8 is not an integer

  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index out = 1 + static_cast<Index>(rng.uniform_index(60));
    const Index kernel = 1 + static_cast<Index>(rng.uniform_index(20));
    const Index stride = 1 + static_cast<Index>(rng.uniform_index(10));
    const Index pad = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(kernel)));
    const Index in = (out - 1) * stride + kernel - 2 * pad;
    if (in < 1) continue;
    CHECK(conv_output_extent(in, kernel, stride, 2 * pad) == (in - kernel + 2 * pad) / stride + 1);
    CHECK(conv_output_extent(in, kernel, stride, 2 * pad) == out);
  }
}

TEST_CASE("same padding yields ceil(in / stride)") {
  for (Index in = 1; in < 80; ++in) {
    for (Index k : {1, 2, 3, 8, 16}) {
      for (Index s : {1, 2, 4, 8}) {
        if (k < s) {
          CHECK_THROWS_AS(same_padding(in, k, s), ShapeError);
          continue;
        }
        const auto [before, after] = same_padding(in, k, s);
        CHECK(before <= after);
        CHECK(conv_output_extent(in, k, s, before + after) == (in + s - 1) / s);
      }
    }
  }
}

TEST_CASE("conv forward: identity kernel and hand case") {
  Rng rng(2);
  const Tensor x = randn({2, 7, 3}, rng);
  const ConvSpec spec = ConvSpec::conv1d(1, 1, 0, 3, 3);
  ConvParams p{zeros(spec.kernel_shape()), zeros({3})};
  for (Index c = 0; c < 3; ++c) p.kernels(0, 0, c, c) = 1.0;
  CHECK(conv_forward(x, spec, p) == x);

  const Tensor seq({1, 4, 1}, {1, 2, 3, 4});
  const ConvSpec s2 = ConvSpec::conv1d(2, 2, 0, 1, 1);
  const ConvParams p2{Tensor({1, 2, 1, 1}, {1, 1}), zeros({1})};
  CHECK(to_vec(conv_forward(seq, s2, p2)) == std::vector<double>{3, 7});
}

TEST_CASE("conv forward: Table geometry 1024 -> 127") {
  Rng rng(3);
  const ConvSpec spec = ConvSpec::conv1d(16, 8, 0, 3, 4);
  const Tensor y = conv_forward(randn({1, 1024, 3}, rng), spec, random_conv_params(spec, rng));
  CHECK(y.shape() == Shape{1, 127, 4});
}

TEST_CASE("conv forward matches brute-force oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Index c = 1 + static_cast<Index>(rng.uniform_index(3));
    const Index k = 1 + static_cast<Index>(rng.uniform_index(3));
    const Index hf = 1 + static_cast<Index>(rng.uniform_index(3));
    const Index wf = 1 + static_cast<Index>(rng.uniform_index(4));
    const Index sh = 1 + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(hf)));
    const Index sw = 1 + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(wf)));
    const Index h = 4 + static_cast<Index>(rng.uniform_index(4));
    const Index w = 5 + static_cast<Index>(rng.uniform_index(6));
    const ConvSpec spec = ConvSpec::same(hf, wf, sh, sw, h, w, c, k);
    const Tensor x = randn({1, h, w, c}, rng);
    const ConvParams p = random_conv_params(spec, rng);
    Index oh = 0, ow = 0;
    const auto expected = oracle::conv2d(to_vec(x), h, w, c, to_vec(p.kernels), hf, wf, k, to_vec(p.bias), sh, sw,
                                         spec.pad_top, spec.pad_bottom, spec.pad_left, spec.pad_right, oh, ow);
    const Tensor y = conv_forward(x, spec, p);
    REQUIRE(y.shape() == Shape{1, oh, ow, k});
    for (Index i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(expected[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
}

TEST_CASE("conv errors") {
  Rng rng(5);
  const ConvSpec spec = ConvSpec::conv1d(3, 2, 0, 2, 2);
  const ConvParams p = random_conv_params(spec, rng);
  CHECK_THROWS_AS(conv_forward(randn({1, 8, 2}, rng), spec, p), ShapeError);  // (8-3)/2 not integral
  CHECK_THROWS_AS(conv_forward(randn({1, 9, 3}, rng), spec, p), ShapeError);  // channel mismatch
  CHECK_THROWS_AS(conv_backward(randn({1, 9, 2}, rng), spec, p, zeros({1, 3, 2})), ShapeError);
}

TEST_CASE("conv backward") {
  Rng rng(6);
  const ConvSpec spec = ConvSpec::conv1d(4, 2, 1, 2, 3);
  const ConvParams p = random_conv_params(spec, rng);
  const Tensor constant = full<double>({2, 10, 2}, 0.7);
  const Shape out = spec.output_shape(constant.shape());
  const auto g = conv_backward(constant, spec, p, ones(out));
  for (double v : g.bias) CHECK(v == doctest::Approx(static_cast<double>(out[0] * out[1])));

  const auto z = conv_backward(constant, spec, p, zeros(out));
  CHECK(sum(map(z.input, [](double v) { return std::abs(v); })) == 0.0);
  CHECK(sum(map(z.kernels, [](double v) { return std::abs(v); })) == 0.0);
  CHECK(sum(map(z.bias, [](double v) { return std::abs(v); })) == 0.0);
}

TEST_CASE("conv backward matches finite differences (1D and 2D)") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const bool two_d = trial % 2 == 1;
    const ConvSpec spec = two_d ? ConvSpec::same(2, 3, 2, 2, 3, 7, 2, 3) : ConvSpec::conv1d(3, 2, 1, 2, 3);
    const Tensor x = two_d ? randn({2, 3, 7, 2}, rng) : randn({2, 9, 2}, rng);
    ConvParams p = random_conv_params(spec, rng);
    const Tensor r = randn(spec.output_shape(x.shape()), rng);
    const auto g = conv_backward(x, spec, p, r);
    const auto loss_x = [&](const Tensor& xi) { return r.values().dot(conv_forward(xi, spec, p).values()); };
    CHECK(oracle::max_relative_error(g.input, oracle::numeric_gradient(loss_x, x)) < 1e-4);
    const auto loss_k = [&](const Tensor& k) {
      return r.values().dot(conv_forward(x, spec, ConvParams{k, p.bias}).values());
    };
    CHECK(oracle::max_relative_error(g.kernels, oracle::numeric_gradient(loss_k, p.kernels)) < 1e-4);
    const auto loss_b = [&](const Tensor& b) {
      return r.values().dot(conv_forward(x, spec, ConvParams{p.kernels, b}).values());
    };
    CHECK(oracle::max_relative_error(g.bias, oracle::numeric_gradient(loss_b, p.bias)) < 1e-4);
  }
}

// ---------------------------------------------------------------------------
// ReLU

TEST_CASE("relu") {
  CHECK(to_vec(relu(Tensor({3}, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});
  CHECK(relu(Tensor({2}, {-3, -0.5})) == zeros({2}));
  const Tensor x({4}, {-1, 0, 2, 0.5});
  CHECK(to_vec(relu_backward(x, ones({4}))) == std::vector<double>{0, 0, 1, 1});

  Rng rng(8);
  Tensor y = randn({50}, rng);
  for (auto& v : y) {
    if (std::abs(v) < 1e-3) v = 0.5;  // stay away from the kink
  }
  const Tensor r = randn({50}, rng);
  const auto loss = [&](const Tensor& t) { return r.values().dot(relu(t).values()); };
  CHECK(oracle::max_relative_error(relu_backward(y, r), oracle::numeric_gradient(loss, y)) < 1e-6);
}

// ---------------------------------------------------------------------------
// Batch normalization

TEST_CASE("batchnorm train mode standardizes each channel") {
  Rng rng(9);
  const Tensor x = randn({16, 5, 3}, rng, 3.0) + full<double>({16, 5, 3}, 2.0);
  auto p = BatchNormParams::make(3);
  const Tensor y = batchnorm_forward(x, p, Mode::Train);
  const auto m = y.as_matrix(80);
  for (Index c = 0; c < 3; ++c) {
    const double mean = m.col(c).mean();
    const double var = (m.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-10);
    // epsilon shrinks the variance by var / (var + eps)
    CHECK(std::abs(var - 1.0) < 1e-5);
  }
  // running statistics moved toward the batch statistics
  for (Index c = 0; c < 3; ++c) CHECK(p.running_mean[c] > 0.0);
}

TEST_CASE("batchnorm unit variance to 1e-8 when epsilon is negligible") {
  Rng rng(10);
  const Tensor x = randn({32, 4}, rng, 2.0);
  auto p = BatchNormParams::make(4);
  p.epsilon = 1e-14;
  const Tensor y = batchnorm_forward(x, p, Mode::Train);
  const auto m = y.as_matrix(32);
  for (Index c = 0; c < 4; ++c) {
    const double mean = m.col(c).mean();
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs((m.col(c).array() - mean).square().mean() - 1.0) < 1e-8);
  }
}

TEST_CASE("batchnorm constant channel gives zeros; degenerate batch throws") {
  auto p = BatchNormParams::make(2);
  const Tensor x = full<double>({4, 2}, 3.5);
  CHECK(batchnorm_forward(x, p, Mode::Train) == zeros({4, 2}));
  CHECK_THROWS_AS(batchnorm_forward(Tensor({1, 2}, {1, 2}), p, Mode::Train), DegenerateBatchError);
  // infer mode on a single sample is fine
  CHECK_NOTHROW(batchnorm_forward(Tensor({1, 2}, {1, 2}), p, Mode::Infer));
}

TEST_CASE("batchnorm infer mode uses running statistics") {
  auto p = BatchNormParams::make(1);
  p.running_mean[0] = 2.0;
  p.running_var[0] = 4.0 - p.epsilon;
  p.gamma[0] = 3.0;
  p.beta[0] = 1.0;
  const Tensor y = batchnorm_forward(Tensor({2, 1}, {2.0, 4.0}), p, Mode::Infer);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(4.0));
}

TEST_CASE("batchnorm backward matches finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Mode mode = trial % 4 == 3 ? Mode::Infer : Mode::Train;
    const Tensor x = randn({4, 3, 2}, rng, 1.5);
    auto p = BatchNormParams::make(2);
    p.gamma = randn({2}, rng);
    p.beta = randn({2}, rng);
    p.running_mean = randn({2}, rng);
    p.running_var = full<double>({2}, 1.3);
    const Tensor r = randn({4, 3, 2}, rng);
    BatchNormCache cache;
    auto scratch = p;
    batchnorm_forward(x, scratch, mode, &cache);
    const auto g = batchnorm_backward(cache, p, r);
    const auto loss_x = [&](const Tensor& xi) {
      auto q = p;
      return r.values().dot(batchnorm_forward(xi, q, mode).values());
    };
    CHECK(oracle::max_relative_error(g.input, oracle::numeric_gradient(loss_x, x)) < 1e-4);
    const auto loss_g = [&](const Tensor& gamma) {
      auto q = p;
      q.gamma = gamma;
      return r.values().dot(batchnorm_forward(x, q, mode).values());
    };
    CHECK(oracle::max_relative_error(g.gamma, oracle::numeric_gradient(loss_g, p.gamma)) < 1e-4);
    const auto loss_b = [&](const Tensor& beta) {
      auto q = p;
      q.beta = beta;
      return r.values().dot(batchnorm_forward(x, q, mode).values());
    };
    CHECK(oracle::max_relative_error(g.beta, oracle::numeric_gradient(loss_b, p.beta)) < 1e-4);
  }
}

// ---------------------------------------------------------------------------
// LSTM

TEST_CASE("lstm with zero parameters stays at zero") {
  const auto p = LstmParams::zeros_for(3, 4);
  Rng rng(12);
  const auto trace = lstm_forward(randn({5, 3}, rng), p);
  CHECK(trace.hidden == zeros({5, 4}));
  CHECK(trace.cell_final == zeros({4}));
  for (const auto& s : trace.steps) {
    for (Index i = 0; i < s.gates.rows(); ++i) {
      CHECK(s.gates(i, 0) == 0.5);  // forget
      CHECK(s.gates(i, 4) == 0.5);  // input
      CHECK(s.gates(i, 12) == 0.5);  // output
    }
  }
}

TEST_CASE("lstm single step hand evaluation") {
  auto p = LstmParams::zeros_for(1, 1);
  p.biases[kCell][0] = 50.0;  // tanh(50) == 1 in double precision
  const auto trace = lstm_forward(Tensor({1, 1}, {0.0}), p);
  CHECK(trace.hidden[0] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-14));
  CHECK(trace.hidden[0] == doctest::Approx(0.23106).epsilon(1e-5));
  CHECK(trace.cell_final[0] == doctest::Approx(0.5));
}

TEST_CASE("lstm forward matches scalar-loop oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Index d = 1 + static_cast<Index>(rng.uniform_index(4));
    const Index u = 1 + static_cast<Index>(rng.uniform_index(4));
    const Index steps = 1 + static_cast<Index>(rng.uniform_index(6));
    const auto p = random_lstm(d, u, rng);
    const Tensor x = randn({steps, d}, rng);
    std::vector<std::vector<double>> w, b;
    for (int g = 0; g < 4; ++g) {
      w.push_back(to_vec(p.weights[g]));
      b.push_back(to_vec(p.biases[g]));
    }
    const auto expected = oracle::lstm(to_vec(x), steps, d, u, w, b);
    const auto trace = lstm_forward(x, p);
    for (Index i = 0; i < trace.hidden.size(); ++i) {
      CHECK(trace.hidden[i] == doctest::Approx(expected[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("lstm gates stay in (0, 1)") {
  Rng rng(14);
  const auto p = random_lstm(3, 5, rng, 1.0);
  const auto trace = lstm_forward(randn({2, 7, 3}, rng, 1.0), p);
  for (const auto& s : trace.steps) {
    for (Index r = 0; r < s.gates.rows(); ++r) {
      for (Index c = 0; c < 5; ++c) {
        for (Index g : {0, 1, 3}) {
          CHECK(s.gates(r, g * 5 + c) > 0.0);
          CHECK(s.gates(r, g * 5 + c) < 1.0);
        }
      }
    }
  }
}

TEST_CASE("lstm backward through time matches finite differences") {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2, steps = 4, d = 3, u = 3;
    auto p = random_lstm(d, u, rng);
    const Tensor x = randn({n, steps, d}, rng);
    const Tensor h0 = randn({n, u}, rng, 0.5);
    const Tensor c0 = randn({n, u}, rng, 0.5);
    const Tensor r = randn({n, steps, u}, rng);
    const Tensor rc = randn({n, u}, rng);
    const auto loss_with = [&](const LstmParams& q, const Tensor& xi, const Tensor& hi, const Tensor& ci) {
      const auto t = lstm_forward(xi, q, hi, ci);
      return r.values().dot(t.hidden.values()) + rc.values().dot(t.cell_final.values());
    };
    const auto trace = lstm_forward(x, p, h0, c0);
    const auto g = lstm_backward(trace, p, r, rc);
    CHECK(oracle::max_relative_error(g.input, oracle::numeric_gradient([&](const Tensor& t) { return loss_with(p, t, h0, c0); }, x)) < 1e-4);
    CHECK(oracle::max_relative_error(g.h0, oracle::numeric_gradient([&](const Tensor& t) { return loss_with(p, x, t, c0); }, h0)) < 1e-4);
    CHECK(oracle::max_relative_error(g.c0, oracle::numeric_gradient([&](const Tensor& t) { return loss_with(p, x, h0, t); }, c0)) < 1e-4);
    for (int k = 0; k < 4; ++k) {
      const auto lw = [&](const Tensor& w) {
        auto q = p;
        q.weights[k] = w;
        return loss_with(q, x, h0, c0);
      };
      CHECK(oracle::max_relative_error(g.weights[k], oracle::numeric_gradient(lw, p.weights[k])) < 1e-4);
      const auto lb = [&](const Tensor& b) {
        auto q = p;
        q.biases[k] = b;
        return loss_with(q, x, h0, c0);
      };
      CHECK(oracle::max_relative_error(g.biases[k], oracle::numeric_gradient(lb, p.biases[k])) < 1e-4);
    }
  }
}

TEST_CASE("lstm shape errors") {
  const auto p = LstmParams::zeros_for(3, 2);
  Rng rng(16);
  CHECK_THROWS_AS(lstm_forward(randn({4, 2}, rng), p), ShapeError);
  CHECK_THROWS_AS(lstm_forward(randn({4}, rng), p), ShapeError);
  CHECK_THROWS_AS(lstm_forward(randn({1, 4, 3}, rng), p, zeros({1, 3})), ShapeError);
}

// ---------------------------------------------------------------------------
// Convolutional LSTM

namespace {

ClstmParams random_clstm(Index c, Index u, Index kh, Index kw, int rank, Rng& rng, double scale = 0.4) {
  auto p = ClstmParams::zeros_for(c, u, kh, kw, rank);
  for (auto& g : p.gates) {
    g.kernels = randn(p.gate_spec.kernel_shape(), rng, scale);
    g.bias = randn({u}, rng, scale);
  }
  return p;
}

}  // namespace

TEST_CASE("clstm with spatial size 1 and kernel 1 equals lstm") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.uniform_index(3));
    const Index steps = 1 + static_cast<Index>(rng.uniform_index(5));
    const Index d = 1 + static_cast<Index>(rng.uniform_index(4));
    const Index u = 1 + static_cast<Index>(rng.uniform_index(4));
    const auto lp = random_lstm(d, u, rng, 0.8);
    auto cp = ClstmParams::zeros_for(d, u, 1, 1, 1);
    for (int g = 0; g < 4; ++g) {
      cp.gates[g].kernels = lp.weights[g].reshaped({1, 1, d + u, u});
      cp.gates[g].bias = lp.biases[g];
    }
    const Tensor x = randn({n, steps, d}, rng);
    const auto lt = lstm_forward(x, lp);
    const auto ct = clstm_forward(x.reshaped({n, steps, 1, d}), cp);
    CHECK(max_abs_diff(ct.hidden_sequence.reshaped({n, steps, u}), lt.hidden) <= 1e-10);
    CHECK(max_abs_diff(ct.hidden_final.reshaped({n, u}), slice(lt.hidden, 1, steps - 1, steps).reshaped({n, u})) <= 1e-10);
  }
}

TEST_CASE("clstm with zero parameters gives zero hidden maps") {
  const auto p = ClstmParams::zeros_for(2, 3, 1, 5, 1);
  Rng rng(18);
  const auto t = clstm_forward(randn({2, 4, 6, 2}, rng), p);
  CHECK(t.hidden_final == zeros({2, 6, 3}));
  CHECK(t.hidden_sequence == zeros({2, 4, 6, 3}));
}

TEST_CASE("clstm rejects shape-changing gate convolutions") {
  auto p = ClstmParams::zeros_for(2, 3, 1, 5, 1);
  p.gate_spec.stride_w = 2;
  Rng rng(19);
  CHECK_THROWS_AS(clstm_forward(randn({1, 2, 8, 2}, rng), p), ConfigError);
  auto q = ClstmParams::zeros_for(2, 3, 1, 5, 1);
  q.gate_spec.pad_right = 0;
  CHECK_THROWS_AS(clstm_forward(randn({1, 2, 8, 2}, rng), q), ConfigError);
}

TEST_CASE("clstm preserves spatial shape with even kernels") {
  Rng rng(20);
  const auto p = random_clstm(1, 2, 2, 8, 2, rng);
  const auto t = clstm_forward(randn({1, 3, 3, 16, 1}, rng), p);
  CHECK(t.hidden_final.shape() == Shape{1, 3, 16, 2});
  CHECK(t.hidden_sequence.shape() == Shape{1, 3, 3, 16, 2});
}

TEST_CASE("clstm gates stay in (0, 1)") {
  Rng rng(21);
  const auto p = random_clstm(2, 3, 1, 3, 1, rng, 1.0);
  const auto t = clstm_forward(randn({2, 3, 5, 2}, rng, 1.0), p);
  for (const auto& s : t.steps) {
    for (Index r = 0; r < s.gates.rows(); ++r) {
      for (Index c = 0; c < 3; ++c) {
        for (Index g : {0, 1, 3}) {
          CHECK(s.gates(r, g * 3 + c) > 0.0);
          CHECK(s.gates(r, g * 3 + c) < 1.0);
        }
      }
    }
  }
}

TEST_CASE("clstm backward matches finite differences (1D: T=3, spatial 8, 2 channels, 3 units)") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_clstm(2, 3, 1, 3, 1, rng);
    const Tensor x = randn({1, 3, 8, 2}, rng);
    const Tensor r = randn({1, 8, 3}, rng);
    const Tensor rs = randn({1, 3, 8, 3}, rng);
    const auto loss_with = [&](const ClstmParams& q, const Tensor& xi) {
      const auto t = clstm_forward(xi, q);
      return r.values().dot(t.hidden_final.values()) + rs.values().dot(t.hidden_sequence.values());
    };
    const auto g = clstm_backward(clstm_forward(x, p), p, r, rs);
    CHECK(oracle::max_relative_error(g.input, oracle::numeric_gradient([&](const Tensor& t) { return loss_with(p, t); }, x)) < 1e-4);
    for (int k = 0; k < 4; ++k) {
      const auto lk = [&](const Tensor& w) {
        auto q = p;
        q.gates[k].kernels = w;
        return loss_with(q, x);
      };
      CHECK(oracle::max_relative_error(g.gates[k].kernels, oracle::numeric_gradient(lk, p.gates[k].kernels)) < 1e-4);
      const auto lb = [&](const Tensor& b) {
        auto q = p;
        q.gates[k].bias = b;
        return loss_with(q, x);
      };
      CHECK(oracle::max_relative_error(g.gates[k].bias, oracle::numeric_gradient(lb, p.gates[k].bias)) < 1e-4);
    }
  }
}

TEST_CASE("clstm 2D backward matches finite differences") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_clstm(1, 2, 2, 3, 2, rng);
    const Tensor x = randn({2, 2, 3, 4, 1}, rng);
    const Tensor r = randn({2, 3, 4, 2}, rng);
    const auto loss_with = [&](const ClstmParams& q, const Tensor& xi) {
      return r.values().dot(clstm_forward(xi, q).hidden_final.values());
    };
    const auto g = clstm_backward(clstm_forward(x, p), p, r);
    CHECK(oracle::max_relative_error(g.input, oracle::numeric_gradient([&](const Tensor& t) { return loss_with(p, t); }, x)) < 1e-4);
    for (int k = 0; k < 4; ++k) {
      const auto lk = [&](const Tensor& w) {
        auto q = p;
        q.gates[k].kernels = w;
        return loss_with(q, x);
      };
      CHECK(oracle::max_relative_error(g.gates[k].kernels, oracle::numeric_gradient(lk, p.gates[k].kernels)) < 1e-4);
    }
  }
}

// ---------------------------------------------------------------------------
// Pooling, dense, softmax

TEST_CASE("global average pooling") {
  const Tensor constant = full<double>({1, 3, 4, 2}, 1.25);
  CHECK(gap(constant) == full<double>({1, 2}, 1.25));
  const Tensor map2x2({1, 2, 2, 1}, {1, 2, 3, 4});
  const Tensor y = gap(map2x2);
  CHECK(y.shape() == Shape{1, 1});
  CHECK(y[0] == 2.5);
  CHECK_THROWS_AS(gap(zeros({3, 4})), ShapeError);

  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = randn({2, 3, 5, 4}, rng);
    const Tensor expected = reduce_mean(x, {1, 2}).reshaped({2, 4});
    CHECK(max_abs_diff(gap(x), expected) < 1e-14);
  }

  const Tensor x = randn({2, 6, 3}, rng);
  const Tensor r = randn({2, 3}, rng);
  const auto loss = [&](const Tensor& t) { return r.values().dot(gap(t).values()); };
  CHECK(oracle::max_relative_error(gap_backward(x.shape(), r), oracle::numeric_gradient(loss, x)) < 1e-6);
}

TEST_CASE("softmax cross-entropy") {
  for (Index k : {2, 6, 12}) {
    Tensor y = zeros({1, k});
    y[0] = 1.0;
    const auto out = softmax_crossentropy(zeros({1, k}), y);
    CHECK(out.loss == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-14));
  }
  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor logits = randn({4, 5}, rng, 3.0);
    Tensor y = zeros({4, 5});
    for (Index r = 0; r < 4; ++r) y(r, static_cast<Index>(rng.uniform_index(5))) = 1.0;
    const auto out = softmax_crossentropy(logits, y);
    for (Index r = 0; r < 4; ++r) {
      CHECK(std::abs(out.probabilities.matrix().row(r).sum() - 1.0) < 1e-12);
      CHECK(std::abs(out.grad_logits.matrix().row(r).sum()) < 1e-12);
      Index a = 0, b = 0;
      out.probabilities.matrix().row(r).maxCoeff(&a);
      logits.matrix().row(r).maxCoeff(&b);
      CHECK(a == b);
    }
    // mean loss gradient is grad_logits / N
    const auto loss = [&](const Tensor& z) { return softmax_crossentropy(z, y).loss; };
    CHECK(oracle::max_relative_error(out.grad_logits * 0.25, oracle::numeric_gradient(loss, logits)) < 1e-4);
  }
  const auto certain = softmax_crossentropy(Tensor({1, 2}, {1000.0, 0.0}), Tensor({1, 2}, {1.0, 0.0}));
  CHECK(certain.loss == 0.0);
  CHECK_THROWS_AS(softmax_crossentropy(zeros({1, 3}), Tensor({1, 3}, {1, 1, 0})), LabelError);
  CHECK_THROWS_AS(softmax_crossentropy(zeros({1, 3}), Tensor({1, 3}, {0.5, 0.5, 0})), LabelError);
  CHECK_THROWS_AS(softmax_crossentropy(zeros({1, 3}), zeros({1, 3})), LabelError);
}

TEST_CASE("dense backward matches finite differences") {
  Rng rng(26);
  const Tensor x = randn({3, 4}, rng);
  const Tensor w = randn({4, 2}, rng);
  const Tensor b = randn({2}, rng);
  const Tensor r = randn({3, 2}, rng);
  const auto g = dense_backward(x, w, r);
  CHECK(oracle::max_relative_error(g.input, oracle::numeric_gradient([&](const Tensor& t) { return r.values().dot(dense_forward(t, w, b).values()); }, x)) < 1e-6);
  CHECK(oracle::max_relative_error(g.weight, oracle::numeric_gradient([&](const Tensor& t) { return r.values().dot(dense_forward(x, t, b).values()); }, w)) < 1e-6);
  CHECK(oracle::max_relative_error(g.bias, oracle::numeric_gradient([&](const Tensor& t) { return r.values().dot(dense_forward(x, w, t).values()); }, b)) < 1e-6);
  CHECK_THROWS_AS(dense_forward(x, randn({3, 2}, rng), b), ShapeError);
}

// ---------------------------------------------------------------------------
// Gradient checker

namespace {

/// Conv module whose backward reports twice the true parameter gradient.
class CorruptedConv : public Module {
 public:
  CorruptedConv(ConvSpec spec, Rng& rng) : inner_(spec, rng) {}
  std::string kind() const override { return "corrupted"; }
  Tensor forward(const Tensor& x, Mode mode) override { return inner_.forward(x, mode); }
  Tensor backward(const Tensor& g) override {
    Tensor gi = inner_.backward(g);
    for (auto& p : inner_.parameters()) *p.grad *= 2.0;
    return gi;
  }
  using Module::parameters;
  void parameters(std::vector<ParamRef>& out, const std::string& prefix) override { inner_.parameters(out, prefix); }
  Shape output_shape(const Shape& in) const override { return inner_.output_shape(in); }

 private:
  Conv inner_;
};

}  // namespace

TEST_CASE("grad_check on modules") {
  Rng rng(27);
  Relu relu_layer;
  Tensor x = randn({2, 5, 3}, rng);
  for (auto& v : x) {
    if (std::abs(v) < 1e-3) v = 0.1;
  }
  const auto r = grad_check(relu_layer, x);
  CHECK(r.pass);
  REQUIRE(r.entries.size() == 1);
  CHECK(r.entries[0].name == "input");

  Conv conv(ConvSpec::conv1d(3, 2, 1, 3, 4), rng);
  const auto rc = grad_check(conv, randn({2, 9, 3}, rng));
  CHECK(rc.pass);
  CHECK(rc.entries.size() == 3);
  CHECK(rc.max_rel_error < 1e-4);

  CorruptedConv bad(ConvSpec::conv1d(3, 2, 1, 3, 4), rng);
  CHECK_FALSE(grad_check(bad, randn({2, 9, 3}, rng)).pass);

  GradCheckOptions bad_step;
  bad_step.step = 1e-2;
  CHECK_THROWS_AS(grad_check(conv, randn({2, 9, 3}, rng), bad_step), ParameterError);
}

TEST_CASE("module chain grad_check: conv -> relu -> batchnorm, lstm, clstm") {
  Rng rng(28);
  Sequential seq;
  seq.add("conv", std::make_unique<Conv>(ConvSpec::same(1, 4, 1, 2, 1, 12, 2, 3), rng));
  seq.add("relu", std::make_unique<Relu>());
  seq.add("bn", std::make_unique<BatchNorm>(3));
  const auto r = grad_check(seq, randn({3, 12, 2}, rng));
  CHECK(r.pass);

  Lstm lstm(2, 3, rng);
  CHECK(grad_check(lstm, randn({2, 4, 2}, rng)).pass);

  Clstm clstm(2, 2, 1, 3, 1, rng);
  CHECK(grad_check(clstm, randn({2, 3, 5, 2}, rng)).pass);
}
