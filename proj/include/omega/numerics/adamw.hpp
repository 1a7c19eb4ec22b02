#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "omega/numerics/tensor.hpp"

namespace omega::numerics {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moment buffers for a fixed, ordered list of parameters.
template <class T>
struct AdamWState {
  AdamWConfig config;
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
  std::size_t t = 0;

  AdamWState() = default;
  AdamWState(AdamWConfig cfg, std::span<BasicTensor<T>* const> params) : config(cfg) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto* p : params) {
      m.emplace_back(p->shape(), T{0});
      v.emplace_back(p->shape(), T{0});
    }
  }
};

/// One decoupled-weight-decay Adam update. Gradients are read, never cleared.
template <class T>
void adamw_step(std::span<BasicTensor<T>* const> params, AdamWState<T>& state) {
  if (params.size() != state.m.size()) {
    throw ShapeError("optimizer state tracks " + std::to_string(state.m.size()) +
                     " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad()) {
      throw ContractError("parameter " + std::to_string(i) + " has no gradient");
    }
    if (params[i]->shape() != state.m[i].shape()) {
      throw ShapeError("optimizer moment shape " + shape_str(state.m[i].shape()) +
                       " does not match parameter " + shape_str(params[i]->shape()));
    }
  }
  const AdamWConfig& c = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->data();
    auto g = std::as_const(*params[i]).grad();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      double wj = static_cast<double>(w[j]) * decay;
      wj -= c.lr * (mj / bc1) / (std::sqrt(vj / bc2) + c.eps);
      w[j] = static_cast<T>(wj);
    }
  }
}

}  // namespace omega::numerics
