#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "omega/model/config.hpp"
#include "omega/numerics/ops.hpp"
#include "omega/numerics/tensor.hpp"
#include "omega/util/rng.hpp"

namespace omega::model {

using numerics::BasicTensor;
using numerics::RunningStats;

enum class TensorRole { weight, bias, gain, running_stat };

template <class T>
struct NormParams {
  BasicTensor<T> gain;
  BasicTensor<T> bias;
  std::optional<RunningStats<T>> stats;  // batch kind only
};

template <class T>
struct LayerParams {
  BasicTensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  NormParams<T> attn_norm;
  BasicTensor<T> w1, b1, w2, b2;
  NormParams<T> ff_norm;
};

template <class T>
struct EncoderParams {
  BasicTensor<T> patch_weight;  // [l_patch x d_model]
  BasicTensor<T> patch_bias;
  BasicTensor<T> positional;  // [(n+1) x d_model], last row for the [SEQ] token
  BasicTensor<T> seq_token;
  std::vector<LayerParams<T>> layers;
};

enum class DecoderRole { reconstruct, forecast };

inline const char* to_string(DecoderRole r) {
  return r == DecoderRole::reconstruct ? "reconstruct" : "forecast";
}

/// layer norm -> W1 [d_model x d_int] -> ReLU -> W2 [d_int x d_out].
template <class T>
struct DecoderParams {
  DecoderRole role = DecoderRole::forecast;
  BasicTensor<T> norm_gain, norm_bias;
  BasicTensor<T> w1, b1, w2, b2;
};

template <class T>
struct ModelParams {
  ModelConfig config;
  EncoderParams<T> encoder;
  DecoderParams<T> reconstruct;
  DecoderParams<T> forecast;
};

namespace detail {

template <class Norm, class Fn>
void visit_norm(Norm& norm, const std::string& prefix, Fn& fn) {
  fn(prefix + ".gain", norm.gain, TensorRole::gain);
  fn(prefix + ".bias", norm.bias, TensorRole::bias);
  if (norm.stats) {
    fn(prefix + ".running_mean", norm.stats->mean, TensorRole::running_stat);
    fn(prefix + ".running_var", norm.stats->var, TensorRole::running_stat);
  }
}

}  // namespace detail

/// Visits every encoder tensor in a fixed order with its canonical name.
/// Works on const and non-const parameter sets.
template <class Enc, class Fn>
void visit_encoder(Enc& enc, Fn&& fn) {
  fn(std::string("encoder.patch.weight"), enc.patch_weight, TensorRole::weight);
  fn(std::string("encoder.patch.bias"), enc.patch_bias, TensorRole::bias);
  fn(std::string("encoder.positional"), enc.positional, TensorRole::weight);
  fn(std::string("encoder.seq_token"), enc.seq_token, TensorRole::weight);
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    auto& l = enc.layers[i];
    const std::string p = "encoder.layer" + std::to_string(i);
    fn(p + ".attn.wq", l.wq, TensorRole::weight);
    fn(p + ".attn.bq", l.bq, TensorRole::bias);
    fn(p + ".attn.wk", l.wk, TensorRole::weight);
    fn(p + ".attn.bk", l.bk, TensorRole::bias);
    fn(p + ".attn.wv", l.wv, TensorRole::weight);
    fn(p + ".attn.bv", l.bv, TensorRole::bias);
    fn(p + ".attn.wo", l.wo, TensorRole::weight);
    fn(p + ".attn.bo", l.bo, TensorRole::bias);
    detail::visit_norm(l.attn_norm, p + ".attn_norm", fn);
    fn(p + ".ff.w1", l.w1, TensorRole::weight);
    fn(p + ".ff.b1", l.b1, TensorRole::bias);
    fn(p + ".ff.w2", l.w2, TensorRole::weight);
    fn(p + ".ff.b2", l.b2, TensorRole::bias);
    detail::visit_norm(l.ff_norm, p + ".ff_norm", fn);
  }
}

template <class Dec, class Fn>
void visit_decoder(Dec& dec, Fn&& fn) {
  const std::string p = std::string("decoder.") + to_string(dec.role);
  fn(p + ".norm.gain", dec.norm_gain, TensorRole::gain);
  fn(p + ".norm.bias", dec.norm_bias, TensorRole::bias);
  fn(p + ".w1", dec.w1, TensorRole::weight);
  fn(p + ".b1", dec.b1, TensorRole::bias);
  fn(p + ".w2", dec.w2, TensorRole::weight);
  fn(p + ".b2", dec.b2, TensorRole::bias);
}

template <class Params, class Fn>
void visit_model(Params& params, Fn&& fn) {
  visit_encoder(params.encoder, fn);
  visit_decoder(params.reconstruct, fn);
  visit_decoder(params.forecast, fn);
}

namespace detail {

template <class T>
auto learnable_collector(std::vector<BasicTensor<T>*>& out) {
  return [&out](const std::string&, BasicTensor<T>& t, TensorRole role) {
    if (role != TensorRole::running_stat) out.push_back(&t);
  };
}

}  // namespace detail

/// Learnable tensors (running statistics excluded) in visit order.
template <class T>
std::vector<BasicTensor<T>*> trainable_tensors(EncoderParams<T>& enc) {
  std::vector<BasicTensor<T>*> out;
  visit_encoder(enc, detail::learnable_collector(out));
  return out;
}

template <class T>
std::vector<BasicTensor<T>*> trainable_tensors(DecoderParams<T>& dec) {
  std::vector<BasicTensor<T>*> out;
  visit_decoder(dec, detail::learnable_collector(out));
  return out;
}

template <class T>
std::vector<BasicTensor<T>*> trainable_tensors(ModelParams<T>& params) {
  std::vector<BasicTensor<T>*> out;
  visit_model(params, detail::learnable_collector(out));
  return out;
}

/// Allocates every tensor at its declared shape: weights zero, gains one,
/// running variance one.
template <class T>
ModelParams<T> make_params(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  auto norm = [&](std::size_t f) {
    NormParams<T> n{BasicTensor<T>({f}, T{1}), BasicTensor<T>({f}, T{0}), std::nullopt};
    if (c.norm_kind == NormKind::batch) n.stats.emplace(f);
    return n;
  };
  ModelParams<T> p;
  p.config = c;
  p.encoder.patch_weight = BasicTensor<T>({c.l_patch, d});
  p.encoder.patch_bias = BasicTensor<T>({d});
  p.encoder.positional = BasicTensor<T>({c.n_patches + 1, d});
  p.encoder.seq_token = BasicTensor<T>({d});
  p.encoder.layers.resize(c.n_layers);
  for (auto& l : p.encoder.layers) {
    for (auto* w : {&l.wq, &l.wk, &l.wv, &l.wo}) *w = BasicTensor<T>({d, d});
    for (auto* b : {&l.bq, &l.bk, &l.bv, &l.bo}) *b = BasicTensor<T>({d});
    l.attn_norm = norm(d);
    l.w1 = BasicTensor<T>({d, c.d_ff});
    l.b1 = BasicTensor<T>({c.d_ff});
    l.w2 = BasicTensor<T>({c.d_ff, d});
    l.b2 = BasicTensor<T>({d});
    l.ff_norm = norm(d);
  }
  auto decoder = [&](DecoderRole role, std::size_t hidden, std::size_t out) {
    DecoderParams<T> dec;
    dec.role = role;
    dec.norm_gain = BasicTensor<T>({d}, T{1});
    dec.norm_bias = BasicTensor<T>({d});
    dec.w1 = BasicTensor<T>({d, hidden});
    dec.b1 = BasicTensor<T>({hidden});
    dec.w2 = BasicTensor<T>({hidden, out});
    dec.b2 = BasicTensor<T>({out});
    return dec;
  };
  p.reconstruct = decoder(DecoderRole::reconstruct, c.reconstruct_hidden(), c.reconstruct_out());
  p.forecast = decoder(DecoderRole::forecast, c.forecast_hidden(), c.forecast_out());
  return p;
}

inline constexpr double kInitStd = 0.02;

/// Weights, positional rows and the [SEQ] token ~ N(0, 0.02^2); biases zero;
/// gains one. Deterministic given config.seed.
template <class T>
ModelParams<T> init_params(const ModelConfig& c) {
  ModelParams<T> p = make_params<T>(c);
  util::Rng rng(c.seed);
  std::normal_distribution<double> gauss(0.0, kInitStd);
  visit_model(p, [&](const std::string&, BasicTensor<T>& t, TensorRole role) {
    if (role != TensorRole::weight) return;
    for (auto& v : t.data()) v = static_cast<T>(gauss(rng));
  });
  return p;
}

template <class T>
void zero_grads(ModelParams<T>& p) {
  visit_model(p, [](const std::string&, BasicTensor<T>& t, TensorRole) { t.zero_grad(); });
}

}  // namespace omega::model
