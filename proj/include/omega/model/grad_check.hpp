#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "omega/model/forward.hpp"
#include "omega/model/params.hpp"
#include "omega/numerics/grad_check.hpp"

// Finite-difference verification of every composite block of the model in
// double precision on a tiny configuration.

namespace omega::model {

/// Central-difference step. Key biases have an exactly zero gradient
/// (softmax is shift invariant), so the step must keep rounding noise of the
/// probe well below the relative-error floor.
inline constexpr double kGradCheckStep = 1e-4;

struct BlockCheck {
  std::string block;
  numerics::GradCheckReport report;
};

inline ModelConfig grad_check_config(NormKind kind = NormKind::layer) {
  ModelConfig c;
  c.l_patch = 4;
  c.n_patches = 3;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.l_pred = 5;
  c.norm_kind = kind;
  c.seed = 7;
  return c;
}

namespace detail {

using TapeD = BasicTape<double>;
using TensorD = BasicTensor<double>;
using VarD = Var<double>;

inline TensorD gaussian(numerics::Shape shape, std::mt19937_64& rng, double std) {
  TensorD t(shape);
  std::normal_distribution<double> g(0.0, std);
  for (auto& v : t.data()) v = g(rng);
  return t;
}

/// Parameters at O(1) scale: the 0.02 init makes deep gradients so small
/// that central differences drown in rounding noise.
inline ModelParams<double> probe_params(const ModelConfig& c, std::uint64_t seed) {
  ModelParams<double> p = make_params<double>(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  visit_model(p, [&](const std::string&, TensorD& t, TensorRole role) {
    const double fan_in = t.rank() == 2 ? static_cast<double>(t.dim(0)) : 1.0;
    for (auto& v : t.data()) {
      switch (role) {
        case TensorRole::weight: v = g(rng) / std::sqrt(fan_in); break;
        case TensorRole::bias: v = 0.1 * g(rng); break;
        case TensorRole::gain: v = 1.0 + 0.2 * g(rng); break;
        case TensorRole::running_stat: break;
      }
    }
  });
  for (auto& l : p.encoder.layers) {
    for (auto* n : {&l.attn_norm, &l.ff_norm}) {
      if (!n->stats) continue;
      for (auto& v : n->stats->mean.data()) v = 0.2 * g(rng);
      for (auto& v : n->stats->var.data()) v = 0.5 + std::abs(g(rng));
    }
  }
  return p;
}

inline numerics::GradCheckReport run(const std::function<VarD(TapeD&)>& build,
                                     std::vector<TensorD*> params, double tol) {
  return numerics::grad_check_taped<double>(build, params, kGradCheckStep, tol);
}

}  // namespace detail

/// Checks attention, feedforward, each norm kind in each mode, both decoders
/// and the full dual-head loss. Every report uses relative error
/// |a - n| / max(|a|, |n|, 1e-8).
inline std::vector<BlockCheck> check_model_gradients(double tol = 1e-3, std::uint64_t seed = 1) {
  using namespace detail;
  std::vector<BlockCheck> out;
  std::mt19937_64 rng(seed);
  const std::size_t B = 3;

  for (NormKind kind : {NormKind::layer, NormKind::batch}) {
    const ModelConfig c = grad_check_config(kind);
    const std::size_t rows = B * c.sequence_length(), d = c.d_model;
    ModelParams<double> p = probe_params(c, seed + static_cast<std::uint64_t>(kind));
    LayerParams<double>& l = p.encoder.layers[0];
    TensorD x = gaussian({rows, d}, rng, 1.0);
    const TensorD target = gaussian({rows, d}, rng, 1.0);

    if (kind == NormKind::layer) {
      out.push_back({"attention", run(
          [&](TapeD& t) {
            auto b = [&](TensorD& v) { return t.parameter(v); };
            VarD xi = b(x);
            VarD q = numerics::linear(t, xi, b(l.wq), b(l.bq));
            VarD k = numerics::linear(t, xi, b(l.wk), b(l.bk));
            VarD v = numerics::linear(t, xi, b(l.wv), b(l.bv));
            VarD a = numerics::causal_attention(t, q, k, v, B, c.sequence_length(), c.n_heads);
            return numerics::mse(t, numerics::linear(t, a, b(l.wo), b(l.bo)), t.constant_ref(target));
          },
          {&x, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo}, tol)});
      out.push_back({"feedforward", run(
          [&](TapeD& t) {
            auto b = [&](TensorD& v) { return t.parameter(v); };
            VarD h = numerics::relu(t, numerics::linear(t, b(x), b(l.w1), b(l.b1)));
            return numerics::mse(t, numerics::linear(t, h, b(l.w2), b(l.b2)), t.constant_ref(target));
          },
          {&x, &l.w1, &l.b1, &l.w2, &l.b2}, tol)});
    }

    for (Mode mode : {Mode::train, Mode::infer}) {
      const std::string name = std::string(numerics::to_string(kind)) + "_norm_" +
                               (mode == Mode::train ? "train" : "infer");
      NormParams<double>& n = l.attn_norm;
      out.push_back({name, run(
          [&](TapeD& t) {
            VarD y = numerics::normalize(t, t.parameter(x), kind, t.parameter(n.gain),
                                         t.parameter(n.bias), n.stats ? &*n.stats : nullptr, mode);
            return numerics::mse(t, y, t.constant_ref(target));
          },
          {&x, &n.gain, &n.bias}, tol)});
    }

    if (kind == NormKind::layer) {
      TensorD z = gaussian({B, d}, rng, 1.0);
      for (DecoderParams<double>* dec : {&p.reconstruct, &p.forecast}) {
        const std::size_t width = dec->w2.dim(1);
        const TensorD tgt = gaussian({B, width}, rng, 1.0);
        std::vector<TensorD*> ps{&z};
        for (auto* t : trainable_tensors(*dec)) ps.push_back(t);
        out.push_back({std::string(to_string(dec->role)) + "_decoder", run(
            [&](TapeD& t) { return numerics::mse(t, decode(t, *dec, t.parameter(z), true), t.constant_ref(tgt)); },
            ps, tol)});
      }
    }

    TensorD patches({B * c.n_patches, c.l_patch});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : patches.data()) v = u(rng);
    TensorD recon_target = patches;
    recon_target.reshape({B, c.context_length()});
    const TensorD forecast_target = gaussian({B, c.l_pred}, rng, 0.5);
    out.push_back({std::string("dual_loss_") + numerics::to_string(kind), run(
        [&](TapeD& t) {
          const Encoded<double> e = encode(t, p.encoder, c, t.constant_ref(patches), B, Mode::train, true);
          VarD f = decode_forecast(t, p.forecast, e.summary, true);
          VarD r = decode_reconstruct(t, p.reconstruct, e.summary, true);
          return numerics::weighted_sum(t, numerics::mse(t, f, t.constant_ref(forecast_target)), 0.6,
                                        numerics::mse(t, r, t.constant_ref(recon_target)), 0.4);
        },
        trainable_tensors(p), tol)});
  }
  return out;
}

}  // namespace omega::model
