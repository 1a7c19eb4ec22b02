#pragma once

#include <cstddef>
#include <vector>

#include "omega/data/window.hpp"
#include "omega/error.hpp"
#include "omega/model/params.hpp"
#include "omega/numerics/ops.hpp"
#include "omega/numerics/tape.hpp"

namespace omega::model {

using numerics::BasicTape;
using numerics::Mode;
template <class T>
using Var = numerics::Var<T>;

/// Leaf binding policy: learnable parameters get gradients, frozen ones are
/// borrowed constants.
template <class T>
Var<T> bind(BasicTape<T>& tape, BasicTensor<T>& t, bool trainable) {
  return trainable ? tape.parameter(t) : tape.constant_ref(t);
}

template <class T>
struct Encoded {
  Var<T> tokens;   // [B(n+1) x d_model]
  Var<T> summary;  // [B x d_model], the [SEQ] position
};

/// Batched encoder over patch rows [B*n x l_patch]. In train mode with batch
/// normalization the running statistics are updated.
template <class T>
Encoded<T> encode(BasicTape<T>& tape, EncoderParams<T>& p, const ModelConfig& c,
                  Var<T> patches, std::size_t batch, Mode mode, bool trainable) {
  const auto& pv = tape.value(patches);
  if (pv.rank() != 2 || pv.dim(1) != c.l_patch || pv.dim(0) != batch * c.n_patches) {
    throw ShapeError("encoder expects patches [" + std::to_string(batch * c.n_patches) + " x " +
                     std::to_string(c.l_patch) + "], got " + numerics::shape_str(pv.shape()));
  }
  if (mode == Mode::train && c.norm_kind == NormKind::batch && batch < 2) {
    throw DegenerateBatchError(
        "batch normalization in train mode needs at least 2 samples per batch; use infer mode "
        "or layer normalization for single samples");
  }
  const std::size_t seq = c.sequence_length();
  auto b = [&](BasicTensor<T>& t) { return bind(tape, t, trainable); };
  auto norm = [&](Var<T> x, NormParams<T>& n) {
    return numerics::normalize(tape, x, c.norm_kind, b(n.gain), b(n.bias),
                               n.stats ? &*n.stats : nullptr, mode);
  };

  Var<T> emb = numerics::linear(tape, patches, b(p.patch_weight), b(p.patch_bias));
  Var<T> x = numerics::assemble_tokens(tape, emb, b(p.positional), b(p.seq_token), batch,
                                       c.n_patches);
  for (auto& l : p.layers) {
    Var<T> q = numerics::linear(tape, x, b(l.wq), b(l.bq));
    Var<T> k = numerics::linear(tape, x, b(l.wk), b(l.bk));
    Var<T> v = numerics::linear(tape, x, b(l.wv), b(l.bv));
    Var<T> a = numerics::causal_attention(tape, q, k, v, batch, seq, c.n_heads);
    Var<T> o = numerics::linear(tape, a, b(l.wo), b(l.bo));
    x = numerics::add(tape, x, norm(o, l.attn_norm));
    Var<T> h = numerics::relu(tape, numerics::linear(tape, x, b(l.w1), b(l.b1)));
    Var<T> f = numerics::linear(tape, h, b(l.w2), b(l.b2));
    x = numerics::add(tape, x, norm(f, l.ff_norm));
  }
  return {x, numerics::take_rows(tape, x, batch, seq, c.n_patches)};
}

template <class T>
Var<T> decode(BasicTape<T>& tape, DecoderParams<T>& d, Var<T> summary, bool trainable) {
  auto b = [&](BasicTensor<T>& t) { return bind(tape, t, trainable); };
  Var<T> h = numerics::layer_norm(tape, summary, b(d.norm_gain), b(d.norm_bias));
  h = numerics::relu(tape, numerics::linear(tape, h, b(d.w1), b(d.b1)));
  return numerics::linear(tape, h, b(d.w2), b(d.b2));
}

template <class T>
Var<T> decode_reconstruct(BasicTape<T>& tape, DecoderParams<T>& d, Var<T> summary,
                          bool trainable) {
  if (d.role != DecoderRole::reconstruct) {
    throw ContractError("decode_reconstruct was given the forecast decoder");
  }
  return decode(tape, d, summary, trainable);
}

template <class T>
Var<T> decode_forecast(BasicTape<T>& tape, DecoderParams<T>& d, Var<T> summary,
                       bool trainable) {
  if (d.role != DecoderRole::forecast) {
    throw ContractError("decode_forecast was given the reconstruction decoder");
  }
  return decode(tape, d, summary, trainable);
}

enum class Head { reconstruct, forecast };

/// Inference forward over a batch of patch rows; parameters are untouched.
template <class T>
BasicTensor<T> predict(const ModelParams<T>& params, const BasicTensor<T>& patches,
                       std::size_t batch, Head head) {
  // Infer mode reads running statistics only, and constant_ref never writes.
  auto& p = const_cast<ModelParams<T>&>(params);
  BasicTape<T> tape(false);
  const Encoded<T> e =
      encode(tape, p.encoder, p.config, tape.constant_ref(patches), batch, Mode::infer, false);
  const Var<T> out = head == Head::forecast
                         ? decode_forecast(tape, p.forecast, e.summary, false)
                         : decode_reconstruct(tape, p.reconstruct, e.summary, false);
  return tape.value(out);
}

template <class T>
struct EncodedSequence {
  BasicTensor<T> tokens;  // [(n+1) x d_model]
  std::vector<T> summary;
};

/// Single-sample encoder. Train mode with batch normalization has no
/// meaningful statistics for one sample and is rejected.
template <class T>
EncodedSequence<T> encode(const ModelParams<T>& params, const data::PatchSequence& patches,
                          Mode mode = Mode::infer) {
  const ModelConfig& c = params.config;
  if (patches.patch_length() != c.l_patch || patches.count() != c.n_patches) {
    throw ShapeError("expected " + std::to_string(c.n_patches) + " patches of length " +
                     std::to_string(c.l_patch) + ", got " + std::to_string(patches.count()) +
                     " of length " + std::to_string(patches.patch_length()));
  }
  if (mode == Mode::train && c.norm_kind == NormKind::batch) {
    throw DegenerateBatchError(
        "batch normalization in train mode needs at least 2 samples; encode a single "
        "sequence in infer mode");
  }
  std::vector<T> flat(patches.flat().begin(), patches.flat().end());
  BasicTensor<T> input({c.n_patches, c.l_patch}, std::move(flat));
  auto& p = const_cast<ModelParams<T>&>(params);
  BasicTape<T> tape(false);
  const Encoded<T> e = encode(tape, p.encoder, c, tape.constant_ref(input), 1, Mode::infer, false);
  const auto& s = tape.value(e.summary);
  return {tape.value(e.tokens), std::vector<T>(s.data().begin(), s.data().end())};
}

}  // namespace omega::model
