#include "harfuse/diagnostics.hpp"

#include <chrono>
#include <functional>

#include "harfuse/nn/dense.hpp"

namespace harfuse {

using nn::GradCheckOptions;
using nn::GradCheckReport;

nn::GradCheckReport model_grad_check(FusionModel& model, const Batch& batch, const GradCheckOptions& options) {
  const Tensor targets = one_hot(batch.labels, model.config().class_count);
  nn::GradCheckTarget target;
  target.params = model.parameters();
  target.loss = [&] { return nn::softmax_crossentropy(model.forward(batch.blocks, nn::Mode::Train), targets).loss; };
  target.gradients = [&] {
    model.zero_grad();
    const auto ce = nn::softmax_crossentropy(model.forward(batch.blocks, nn::Mode::Train), targets);
    model.backward(ce.grad_logits * (1.0 / static_cast<double>(batch.labels.size())));
  };
  return nn::grad_check(target, options);
}

ModelConfig tiny_config(NetKind first, NetKind second, bool fusion, InputKind input, Index width, Index length,
                        Index classes) {
  ModelConfig c;
  c.first = first;
  c.second = second;
  c.intermediate_fusion = fusion;
  c.input_kind = input;
  c.class_count = classes;
  c.first_width = width;
  c.second_width = width;
  c.input_length = length;
  c.input_channels = input == InputKind::RawDualBranch ? 3 : 1;
  c.clstm_steps = 4;
  c.kernel_1d = 4;
  c.stride_1d = 2;
  c.kernel_2d = {2, 4};
  c.stride_2d = {2, 2};
  return c;
}

Batch random_batch(const ModelConfig& config, Index n, Rng& rng) {
  Batch b;
  for (Index i = 0; i < config.branch_count(); ++i) {
    b.blocks.push_back(randn({n, config.input_length, config.input_channels}, rng));
  }
  for (Index i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(config.class_count))));
  return b;
}

bool SuiteReport::pass() const {
  for (const auto& l : lines) {
    if (!l.pass) return false;
  }
  return !lines.empty();
}

namespace {

Index draw(Rng& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
}

void randomize(nn::Module& m, Rng& rng, double scale) {
  for (auto& p : m.parameters()) {
    if (p.trainable) *p.value = randn(p.value->shape(), rng, scale);
  }
}

/// Runs `instances` draws of `make_check` and folds them into one line.
SuiteLine run_line(const std::string& name, int instances, double tolerance,
                   const std::function<GradCheckReport(Rng&)>& make_check, Rng& rng) {
  SuiteLine line{name, instances, 0.0, 0.0, true};
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < instances; ++i) {
    Rng local = rng.split();
    const auto r = make_check(local);
    line.worst = std::max(line.worst, r.max_rel_error);
  }
  line.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  line.pass = line.worst < tolerance;
  return line;
}

/// Nudges inputs away from the ReLU kink so central differences stay on one side.
Tensor away_from_zero(Tensor x) {
  for (auto& v : x) {
    if (std::abs(v) < 1e-2) v = v < 0 ? -0.05 : 0.05;
  }
  return x;
}

}  // namespace

SuiteReport gradient_suite(SuiteScale scale, int instances, std::uint64_t seed) {
  SuiteReport report;
  GradCheckOptions opts;
  opts.retry_other_steps = true;
  report.tolerance = opts.tolerance;
  Rng rng(seed);
  const Index grow = scale == SuiteScale::Small ? 2 : 0;

  report.lines.push_back(run_line("conv1d", instances, opts.tolerance, [&](Rng& r) {
    const Index k = draw(r, 1, 4), s = draw(r, 1, k), len = draw(r, 5, 12 + 4 * grow);
    const Index cin = draw(r, 1, 3), cout = draw(r, 1, 3 + grow);
    nn::Conv conv(nn::ConvSpec::same(1, k, 1, s, 1, len, cin, cout), r);
    randomize(conv, r, 0.5);
    return nn::grad_check(conv, randn({2, len, cin}, r), opts);
  }, rng));

  report.lines.push_back(run_line("conv2d", instances, opts.tolerance, [&](Rng& r) {
    const Index kh = draw(r, 1, 2), kw = draw(r, 1, 4), sh = draw(r, 1, kh), sw = draw(r, 1, kw);
    const Index h = draw(r, 2, 4), w = draw(r, 4, 9 + 4 * grow), cin = draw(r, 1, 2), cout = draw(r, 1, 3 + grow);
    nn::Conv conv(nn::ConvSpec::same(kh, kw, sh, sw, h, w, cin, cout), r);
    randomize(conv, r, 0.5);
    return nn::grad_check(conv, randn({2, h, w, cin}, r), opts);
  }, rng));

  report.lines.push_back(run_line("batchnorm", instances, opts.tolerance, [&](Rng& r) {
    const Index c = draw(r, 1, 4 + grow), len = draw(r, 2, 6);
    nn::BatchNorm bn(c);
    randomize(bn, r, 1.0);
    return nn::grad_check(bn, randn({3, len, c}, r, 2.0), opts);
  }, rng));

  report.lines.push_back(run_line("dense", instances, opts.tolerance, [&](Rng& r) {
    const Index f = draw(r, 1, 8 + 8 * grow), k = draw(r, 2, 6);
    nn::Dense dense(f, k, r);
    randomize(dense, r, 0.5);
    return nn::grad_check(dense, randn({3, f}, r), opts);
  }, rng));

  report.lines.push_back(run_line("lstm", instances, opts.tolerance, [&](Rng& r) {
    const Index d = draw(r, 1, 3), u = draw(r, 1, 4 + grow), t = draw(r, 1, 5 + 2 * grow);
    nn::Lstm lstm(d, u, r);
    randomize(lstm, r, 0.5);
    return nn::grad_check(lstm, randn({2, t, d}, r), opts);
  }, rng));

  report.lines.push_back(run_line("clstm1d", instances, opts.tolerance, [&](Rng& r) {
    const Index c = draw(r, 1, 2), u = draw(r, 1, 3 + grow), k = draw(r, 1, 4), t = draw(r, 1, 3), w = draw(r, 3, 8);
    nn::Clstm clstm(c, u, 1, k, 1, r);
    randomize(clstm, r, 0.4);
    return nn::grad_check(clstm, randn({2, t, w, c}, r), opts);
  }, rng));

  report.lines.push_back(run_line("clstm2d", instances, opts.tolerance, [&](Rng& r) {
    const Index c = draw(r, 1, 2), u = draw(r, 1, 2 + grow), kh = draw(r, 1, 2), kw = draw(r, 1, 4);
    const Index t = draw(r, 1, 3), h = draw(r, 2, 3), w = draw(r, 3, 6);
    nn::Clstm clstm(c, u, kh, kw, 2, r);
    randomize(clstm, r, 0.4);
    return nn::grad_check(clstm, randn({2, t, h, w, c}, r), opts);
  }, rng));

  report.lines.push_back(run_line("gap+head", instances, opts.tolerance, [&](Rng& r) {
    const Index c = draw(r, 1, 6), len = draw(r, 2, 7), k = draw(r, 2, 6);
    nn::Sequential seq;
    seq.add("gap", std::make_unique<nn::GlobalAveragePool>());
    seq.add("head", std::make_unique<nn::Dense>(c, k, r));
    randomize(seq, r, 0.5);
    return nn::grad_check(seq, away_from_zero(randn({3, len, c}, r)), opts);
  }, rng));

  struct Pair {
    NetKind first, second;
    bool fusion;
    InputKind input;
  };
  std::vector<Pair> pairs = {
      {NetKind::CNN1D, NetKind::LSTM, true, InputKind::RawDualBranch},
      {NetKind::LSTM, NetKind::CLSTM1D, true, InputKind::RawDualBranch},
      {NetKind::CLSTM1D, NetKind::CNN1D, false, InputKind::RawDualBranch},
      {NetKind::CNN1D, NetKind::CNN2D, true, InputKind::RawDualBranch},
      {NetKind::LSTM, NetKind::CLSTM2D, false, InputKind::RawDualBranch},
      {NetKind::CNN2D, NetKind::CLSTM2D, true, InputKind::RawDualBranch},
      {NetKind::CLSTM2D, NetKind::CNN2D, true, InputKind::RawDualBranch},
  };
  if (scale == SuiteScale::Small) {
    for (const auto& c : enumerate_architectures(InputKind::SingleFeatureVector)) {
      if (c.intermediate_fusion) pairs.push_back({c.first, c.second, true, InputKind::SingleFeatureVector});
    }
  }
  // Deep compositions carry near-zero gradients (zero-padded CLSTM steps,
  // saturated gates) where roundoff dominates at h = 1e-5; h = 1e-4 keeps the
  // truncation error far below tolerance while suppressing that noise.
  GradCheckOptions model_opts = opts;
  model_opts.step = 1e-4;
  model_opts.retry_other_steps = true;
  for (const auto& p : pairs) {
    const ModelConfig cfg = tiny_config(p.first, p.second, p.fusion, p.input, 3, scale == SuiteScale::Small ? 32 : 16);
    std::string name = "model " + cfg.label();
    if (p.input == InputKind::SingleFeatureVector) name += " (features)";
    report.lines.push_back(run_line(name, 1, opts.tolerance, [&](Rng& r) {
      auto model = build_model(cfg, r);
      for (auto& param : model->parameters()) {
        if (param.name.rfind("head.", 0) == 0) *param.value = randn(param.value->shape(), r, 0.5);
      }
      const Batch batch = random_batch(cfg, 3, r);
      return model_grad_check(*model, batch, model_opts);
    }, rng));
  }
  return report;
}

}  // namespace harfuse
