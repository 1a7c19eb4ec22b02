#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "omega/numerics/tape.hpp"
#include "omega/numerics/tensor.hpp"

namespace omega::numerics {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares an analytic gradient against central differences.
///
/// `evaluate` returns the loss at the current parameter values. `analytic`
/// must leave d(loss)/d(param) in each parameter's grad buffer; buffers are
/// zeroed before it runs. The relative error of a coordinate is
/// |a - n| / max(|a|, |n|, floor).
template <class T>
GradCheckReport grad_check(const std::function<double()>& evaluate,
                           const std::function<void()>& analytic,
                           std::span<BasicTensor<T>* const> params, double step,
                           double tol, double floor = 1e-8) {
  if (!(step > 0.0)) throw ContractError("finite-difference step must be positive");
  for (auto* p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
  analytic();
  GradCheckReport report;
  report.tolerance = tol;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    BasicTensor<T>& p = *params[pi];
    const std::vector<T> grads(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const T original = p[i];
      p[i] = static_cast<T>(static_cast<double>(original) + step);
      const double up = evaluate();
      p[i] = static_cast<T>(static_cast<double>(original) - step);
      const double down = evaluate();
      p[i] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("non-finite loss while probing tensor " + std::to_string(pi) +
                           " coordinate " + std::to_string(i));
      }
      const double numeric = (up - down) / (2.0 * step);
      const double a = grads[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = pi;
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

/// Convenience wrapper: `build` records the loss on a fresh tape, with the
/// checked tensors registered through `tape.parameter`.
template <class T>
GradCheckReport grad_check_taped(
    const std::function<typename BasicTape<T>::Var(BasicTape<T>&)>& build,
    std::span<BasicTensor<T>* const> params, double step, double tol) {
  auto evaluate = [&] {
    BasicTape<T> tape(false);
    return static_cast<double>(tape.value(build(tape)).item());
  };
  auto analytic = [&] {
    BasicTape<T> tape;
    tape.backward(build(tape));
  };
  return grad_check<T>(evaluate, analytic, params, step, tol);
}

}  // namespace omega::numerics
