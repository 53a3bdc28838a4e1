#include "svt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "svt/ops.hpp"

namespace svt {
namespace {

Var<double> reduce(Var<double> out, unsigned seed) {
  if (out.value().size() == 1 && out.shape().empty()) return out;
  NdArray<double> w(out.shape());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (auto& v : w.data()) v = u(rng);
  return weighted_sum(out, w);
}

double evaluate(const GraphFn& graph, const std::vector<NdArray<double>>& inputs, unsigned seed) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& in : inputs) leaves.push_back(tape.leaf(in, false));
  return reduce(graph(tape, leaves), seed).value()[0];
}

}  // namespace

GradCheckResult grad_check(const GraphFn& graph, const std::vector<NdArray<double>>& inputs,
                           const GradCheckOptions& options) {
  std::vector<NdArray<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& in : inputs) leaves.push_back(tape.leaf(in, true));
    Var<double> loss = reduce(graph(tape, leaves), options.seed);
    tape.backward(loss);
    for (const auto& l : leaves) {
      analytic.push_back(tape.has_grad(l.id) ? tape.grad(l.id) : NdArray<double>(l.shape()));
    }
  }

  GradCheckResult result;
  std::mt19937_64 rng(options.seed + 1);
  std::vector<NdArray<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<std::size_t> coords(inputs[k].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_probes_per_input && coords.size() > options.max_probes_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_probes_per_input);
    }
    for (std::size_t i : coords) {
      const double x0 = inputs[k][i];
      auto central = [&](double h) {
        probe[k][i] = x0 + h;
        const double up = evaluate(graph, probe, options.seed);
        probe[k][i] = x0 - h;
        const double down = evaluate(graph, probe, options.seed);
        probe[k][i] = x0;
        return (up - down) / (2.0 * h);
      };
      const double coarse = central(options.eps);
      const double fine = central(options.eps / 2.0);
      const double scale = std::max({std::abs(coarse), std::abs(fine), options.floor});
      if (std::abs(coarse - fine) > options.kink_tolerance * scale) {
        ++result.nonsmooth_probes;
        continue;
      }
      const double numeric = (4.0 * fine - coarse) / 3.0;
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double err = std::abs(a - numeric) / denom;
      ++result.probes;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_input = k;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace svt
