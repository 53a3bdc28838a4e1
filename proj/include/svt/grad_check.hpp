#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "svt/autograd.hpp"

namespace svt {

// Builds a graph on `tape` from leaves bound to `inputs` and returns its output.
using GraphFn = std::function<Var<double>(Tape<double>& tape, std::span<const Var<double>> inputs)>;

// Numeric derivatives are Richardson-extrapolated central differences at
// eps and eps/2. A probe whose two estimates disagree by more than
// kink_tolerance (relative) straddles a non-differentiable point such as a
// ReLU kink; it is counted in nonsmooth_probes and not compared.
struct GradCheckOptions {
  double eps = 1e-4;
  double kink_tolerance = 1e-5;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // Coordinates probed per input; 0 probes all of them.
  std::size_t max_probes_per_input = 0;
  unsigned seed = 7;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t probes = 0;
  std::size_t nonsmooth_probes = 0;
};

// Compares reverse-mode gradients of the (sum-reduced) graph output against
// central finite differences. Non-scalar outputs are reduced with fixed
// pseudo-random weights so that constant-sum outputs such as softmax rows
// still carry a non-trivial gradient.
GradCheckResult grad_check(const GraphFn& graph, const std::vector<NdArray<double>>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace svt
