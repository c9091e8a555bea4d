#ifndef HARFUSE_NN_GRADCHECK_HPP
#define HARFUSE_NN_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "harfuse/nn/module.hpp"

namespace harfuse::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  Index checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  double step = 0.0;
  bool pass = true;
};

/// What the checker perturbs and how it evaluates the scalar loss.
/// `loss` must be a pure function of the tensors in `params`;
/// `gradients` must leave d(loss)/d(value) in each entry's grad tensor.
struct GradCheckTarget {
  std::vector<ParamRef> params;
  std::function<double()> loss;
  std::function<void()> gradients;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Checks at most this many entries per tensor (chosen at random); 0 = all.
  Index max_entries = 0;
  std::uint64_t seed = 0;
  /// When an entry exceeds tolerance, re-measure at step / 10 and step * 10
  /// (capped below 1e-3) and keep the smallest error. A difference straddling a ReLU kink is wrong at
  /// one step but not a smaller one; roundoff on a near-zero gradient shrinks
  /// with a larger step. A wrong analytic gradient fails at all three.
  bool retry_other_steps = false;
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Central differences (L(v + h) - L(v - h)) / 2h against the analytic
/// gradient for every entry of every tensor in the target.
GradCheckReport grad_check(const GradCheckTarget& target, const GradCheckOptions& options = {});

/// Checks a module on `input` with loss sum(R * forward(input)) for a fixed
/// random R; the input gradient is reported under the name "input".
GradCheckReport grad_check(Module& module, const Tensor& input, const GradCheckOptions& options = {},
                           Mode mode = Mode::Train);

}  // namespace harfuse::nn

#endif  // HARFUSE_NN_GRADCHECK_HPP
