#include "harfuse/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace harfuse::nn {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const GradCheckTarget& target, const GradCheckOptions& options) {
  if (!(options.step > 1e-7 && options.step < 1e-3)) {
    throw ParameterError("grad_check step must lie in (1e-7, 1e-3)");
  }
  GradCheckReport report;
  report.tolerance = options.tolerance;
  report.step = options.step;
  target.gradients();
  Rng rng(options.seed);
  for (const auto& p : target.params) {
    if (!p.trainable || p.grad == nullptr) continue;
    // analytic gradients are read before any perturbation
    const Tensor analytic = *p.grad;
    std::vector<Index> entries(static_cast<std::size_t>(p.value->size()));
    std::iota(entries.begin(), entries.end(), Index{0});
    if (options.max_entries > 0 && static_cast<Index>(entries.size()) > options.max_entries) {
      shuffle(entries, rng);
      entries.resize(static_cast<std::size_t>(options.max_entries));
    }
    GradCheckEntry entry{p.name, 0.0, 0};
    const auto central = [&](Index i, double h) {
      double& v = (*p.value)[i];
      const double saved = v;
      v = saved + h;
      const double up = target.loss();
      v = saved - h;
      const double down = target.loss();
      v = saved;
      return (up - down) / (2.0 * h);
    };
    for (Index i : entries) {
      double err = relative_error(analytic[i], central(i, options.step));
      if (err >= options.tolerance && options.retry_other_steps) {
        err = std::min(err, relative_error(analytic[i], central(i, options.step / 10.0)));
        err = std::min(err, relative_error(analytic[i], central(i, std::min(options.step * 10.0, 9e-4))));
      }
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.pass = report.max_rel_error < options.tolerance;
  return report;
}

GradCheckReport grad_check(Module& module, const Tensor& input, const GradCheckOptions& options, Mode mode) {
  Tensor x = input;
  Tensor grad_x = zeros(input.shape());
  Rng rng(options.seed ^ 0x5bd1e995ULL);
  const Tensor projection = randn(module.output_shape(input.shape()), rng);

  GradCheckTarget target;
  target.params.push_back({"input", &x, &grad_x, true});
  for (auto& p : module.parameters()) target.params.push_back(p);
  target.loss = [&] {
    const Tensor y = module.forward(x, mode);
    return projection.values().dot(y.values());
  };
  target.gradients = [&] {
    module.zero_grad();
    module.forward(x, mode);
    grad_x = module.backward(projection);
  };
  return grad_check(target, options);
}

}  // namespace harfuse::nn
