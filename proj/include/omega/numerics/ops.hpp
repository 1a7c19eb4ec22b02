#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "omega/numerics/kernels.hpp"
#include "omega/numerics/tape.hpp"
#include "omega/numerics/tensor.hpp"

// Differentiable operations recorded on a BasicTape. Each op computes its
// forward value eagerly and registers a closure that accumulates input
// gradients from the output gradient.

namespace omega::numerics {

enum class Mode { train, infer };
enum class NormKind { batch, layer };

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

inline const char* to_string(NormKind kind) {
  return kind == NormKind::batch ? "batch" : "layer";
}

template <class T>
struct RunningStats {
  BasicTensor<T> mean;
  BasicTensor<T> var;

  explicit RunningStats(std::size_t features = 1)
      : mean({features}, T{0}), var({features}, T{1}) {}
};

namespace detail {

template <class T>
void require_matrix(const BasicTensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a matrix, got " +
                     shape_str(t.shape()));
  }
}

template <class T>
void add_into(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

template <class T>
using Var = typename BasicTape<T>::Var;

template <class T>
Var<T> matmul(BasicTape<T>& tape, Var<T> a, Var<T> b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  BasicTensor<T> out = kernels::matmul(av, bv);
  const std::size_t M = av.dim(0), K = av.dim(1), N = bv.dim(1);
  return tape.record("matmul", {a, b}, std::move(out),
                     [a, b, M, K, N](BasicTape<T>& t, std::span<const T> g) {
                       // dA = dC * B^T, dB = A^T * dC
                       if (t.requires_grad(a)) {
                         kernels::gemm_nt(M, K, N, g.data(), t.value(b).data().data(),
                                          t.grad_buffer(a).data(), true);
                       }
                       if (t.requires_grad(b)) {
                         kernels::gemm_tn(K, N, M, t.value(a).data().data(), g.data(),
                                          t.grad_buffer(b).data(), true);
                       }
                     });
}

/// x[R x in] * W[in x out] + b[out].
template <class T>
Var<T> linear(BasicTape<T>& tape, Var<T> x, Var<T> w, Var<T> b) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(w);
  const auto& bv = tape.value(b);
  detail::require_matrix(xv, "linear");
  detail::require_matrix(wv, "linear");
  if (xv.dim(1) != wv.dim(0) || bv.numel() != wv.dim(1)) {
    throw ShapeError("linear shape mismatch: x " + shape_str(xv.shape()) +
                     ", W " + shape_str(wv.shape()) + ", b " +
                     shape_str(bv.shape()));
  }
  const std::size_t R = xv.dim(0), I = xv.dim(1), O = wv.dim(1);
  BasicTensor<T> out({R, O});
  kernels::gemm(R, O, I, xv.data().data(), wv.data().data(), out.data().data(), false);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t o = 0; o < O; ++o) out[r * O + o] += bv[o];
  }
  require_finite<T>(out.data(), "linear");
  return tape.record(
      "linear", {x, w, b}, std::move(out),
      [x, w, b, R, I, O](BasicTape<T>& t, std::span<const T> g) {
        if (t.requires_grad(x)) {
          kernels::gemm_nt(R, I, O, g.data(), t.value(w).data().data(),
                           t.grad_buffer(x).data(), true);
        }
        if (t.requires_grad(w)) {
          kernels::gemm_tn(I, O, R, t.value(x).data().data(), g.data(),
                           t.grad_buffer(w).data(), true);
        }
        if (t.requires_grad(b)) {
          std::vector<double> acc(O, 0.0);
          for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t o = 0; o < O; ++o) acc[o] += g[r * O + o];
          }
          auto gb = t.grad_buffer(b);
          for (std::size_t o = 0; o < O; ++o) gb[o] += static_cast<T>(acc[o]);
        }
      });
}

template <class T>
Var<T> add(BasicTape<T>& tape, Var<T> a, Var<T> b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.shape() != bv.shape()) {
    throw ShapeError("add shape mismatch: " + shape_str(av.shape()) + " vs " +
                     shape_str(bv.shape()));
  }
  BasicTensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  require_finite<T>(out.data(), "add");
  return tape.record("add", {a, b}, std::move(out),
                     [a, b](BasicTape<T>& t, std::span<const T> g) {
                       if (t.requires_grad(a)) detail::add_into(t.grad_buffer(a), g);
                       if (t.requires_grad(b)) detail::add_into(t.grad_buffer(b), g);
                     });
}

template <class T>
Var<T> relu(BasicTape<T>& tape, Var<T> x) {
  const auto& xv = tape.value(x);
  BasicTensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  return tape.record("relu", {x}, std::move(out),
                     [x](BasicTape<T>& t, std::span<const T> g) {
                       const auto& xv = t.value(x);
                       auto gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         if (xv[i] > T{0}) gx[i] += g[i];
                       }
                     });
}

template <class T>
Var<T> scale(BasicTape<T>& tape, Var<T> x, double factor) {
  const auto& xv = tape.value(x);
  BasicTensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<T>(factor * static_cast<double>(xv[i]));
  }
  return tape.record("scale", {x}, std::move(out),
                     [x, factor](BasicTape<T>& t, std::span<const T> g) {
                       auto gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         gx[i] += static_cast<T>(factor * static_cast<double>(g[i]));
                       }
                     });
}

template <class T>
Var<T> sum(BasicTape<T>& tape, Var<T> x) {
  const auto& xv = tape.value(x);
  double acc = 0.0;
  for (T v : xv.data()) acc += v;
  return tape.record("sum", {x}, BasicTensor<T>::scalar(static_cast<T>(acc)),
                     [x](BasicTape<T>& t, std::span<const T> g) {
                       auto gx = t.grad_buffer(x);
                       for (auto& v : gx) v += g[0];
                     });
}

/// a*wa + b*wb for two scalars.
template <class T>
Var<T> weighted_sum(BasicTape<T>& tape, Var<T> a, double wa, Var<T> b, double wb) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.numel() != 1 || bv.numel() != 1) {
    throw ShapeError("weighted_sum expects scalars");
  }
  const double v = wa * static_cast<double>(av[0]) + wb * static_cast<double>(bv[0]);
  return tape.record("weighted_sum", {a, b}, BasicTensor<T>::scalar(static_cast<T>(v)),
                     [a, wa, b, wb](BasicTape<T>& t, std::span<const T> g) {
                       if (t.requires_grad(a)) t.grad_buffer(a)[0] += static_cast<T>(wa * g[0]);
                       if (t.requires_grad(b)) t.grad_buffer(b)[0] += static_cast<T>(wb * g[0]);
                     });
}

template <class T>
Var<T> softmax_lastdim(BasicTape<T>& tape, Var<T> x) {
  BasicTensor<T> y = kernels::softmax_lastdim(tape.value(x));
  const std::size_t rows = y.rows(), cols = y.cols();
  std::vector<T> saved = y.storage();
  return tape.record("softmax", {x}, std::move(y),
                     [x, rows, cols, saved = std::move(saved)](BasicTape<T>& t,
                                                               std::span<const T> g) {
                       auto gx = t.grad_buffer(x);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) {
                           dot += static_cast<double>(g[r * cols + c]) * saved[r * cols + c];
                         }
                         for (std::size_t c = 0; c < cols; ++c) {
                           const std::size_t i = r * cols + c;
                           gx[i] += static_cast<T>(saved[i] * (g[i] - dot));
                         }
                       }
                     });
}

/// Mean of squared differences over all elements.
template <class T>
Var<T> mse(BasicTape<T>& tape, Var<T> pred, Var<T> target) {
  const auto& pv = tape.value(pred);
  const auto& tv = tape.value(target);
  if (pv.shape() != tv.shape()) {
    throw ShapeError("mse shape mismatch: " + shape_str(pv.shape()) + " vs " +
                     shape_str(tv.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.numel(); ++i) {
    const double d = static_cast<double>(pv[i]) - static_cast<double>(tv[i]);
    acc += d * d;
  }
  const double count = static_cast<double>(pv.numel());
  auto out = BasicTensor<T>::scalar(static_cast<T>(acc / count));
  require_finite<T>(out.data(), "mse");
  return tape.record("mse", {pred, target}, std::move(out),
                     [pred, target, count](BasicTape<T>& t, std::span<const T> g) {
                       const auto& pv = t.value(pred);
                       const auto& tv = t.value(target);
                       const double k = 2.0 * static_cast<double>(g[0]) / count;
                       if (t.requires_grad(pred)) {
                         auto gp = t.grad_buffer(pred);
                         for (std::size_t i = 0; i < gp.size(); ++i) {
                           gp[i] += static_cast<T>(k * (static_cast<double>(pv[i]) - tv[i]));
                         }
                       }
                       if (t.requires_grad(target)) {
                         auto gt = t.grad_buffer(target);
                         for (std::size_t i = 0; i < gt.size(); ++i) {
                           gt[i] -= static_cast<T>(k * (static_cast<double>(pv[i]) - tv[i]));
                         }
                       }
                     });
}

/// Per-row standardization over the feature axis, then gain and bias.
template <class T>
Var<T> layer_norm(BasicTape<T>& tape, Var<T> x, Var<T> gain, Var<T> bias,
                  double eps = kNormEps) {
  const auto& xv = tape.value(x);
  const auto& gv = tape.value(gain);
  const auto& bv = tape.value(bias);
  detail::require_matrix(xv, "layer_norm");
  const std::size_t R = xv.dim(0), F = xv.dim(1);
  if (gv.numel() != F || bv.numel() != F) {
    throw ShapeError("layer_norm feature dimension " + std::to_string(F) +
                     " does not match gain/bias " + shape_str(gv.shape()));
  }
  BasicTensor<T> out({R, F});
  std::vector<T> xhat(R * F);
  std::vector<double> inv_std(R);
  for (std::size_t r = 0; r < R; ++r) {
    const T* row = xv.data().data() + r * F;
    double mean = 0.0;
    for (std::size_t f = 0; f < F; ++f) mean += row[f];
    mean /= static_cast<double>(F);
    double var = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      const double d = row[f] - mean;
      var += d * d;
    }
    var /= static_cast<double>(F);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t f = 0; f < F; ++f) {
      const double h = (row[f] - mean) * inv_std[r];
      xhat[r * F + f] = static_cast<T>(h);
      out[r * F + f] = static_cast<T>(h * gv[f] + bv[f]);
    }
  }
  require_finite<T>(out.data(), "layer_norm");
  return tape.record(
      "layer_norm", {x, gain, bias}, std::move(out),
      [x, gain, bias, R, F, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          BasicTape<T>& t, std::span<const T> g) {
        const auto& gv = t.value(gain);
        if (t.requires_grad(gain) || t.requires_grad(bias)) {
          std::vector<double> dg(F, 0.0), db(F, 0.0);
          for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t f = 0; f < F; ++f) {
              dg[f] += static_cast<double>(g[r * F + f]) * xhat[r * F + f];
              db[f] += g[r * F + f];
            }
          }
          if (t.requires_grad(gain)) {
            auto gg = t.grad_buffer(gain);
            for (std::size_t f = 0; f < F; ++f) gg[f] += static_cast<T>(dg[f]);
          }
          if (t.requires_grad(bias)) {
            auto gb = t.grad_buffer(bias);
            for (std::size_t f = 0; f < F; ++f) gb[f] += static_cast<T>(db[f]);
          }
        }
        if (t.requires_grad(x)) {
          auto gx = t.grad_buffer(x);
          for (std::size_t r = 0; r < R; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t f = 0; f < F; ++f) {
              const double dh = static_cast<double>(g[r * F + f]) * gv[f];
              s1 += dh;
              s2 += dh * xhat[r * F + f];
            }
            const double n = static_cast<double>(F);
            for (std::size_t f = 0; f < F; ++f) {
              const double dh = static_cast<double>(g[r * F + f]) * gv[f];
              gx[r * F + f] += static_cast<T>(
                  inv_std[r] / n * (n * dh - s1 - xhat[r * F + f] * s2));
            }
          }
        }
      });
}

/// Per-feature standardization over the row (batch) axis. Training mode uses
/// batch statistics and folds them into `stats`; inference uses `stats`.
template <class T>
Var<T> batch_norm(BasicTape<T>& tape, Var<T> x, Var<T> gain, Var<T> bias,
                  RunningStats<T>& stats, Mode mode, double momentum = kBatchNormMomentum,
                  double eps = kNormEps) {
  const auto& xv = tape.value(x);
  const auto& gv = tape.value(gain);
  const auto& bv = tape.value(bias);
  detail::require_matrix(xv, "batch_norm");
  const std::size_t R = xv.dim(0), F = xv.dim(1);
  if (gv.numel() != F || bv.numel() != F || stats.mean.numel() != F ||
      stats.var.numel() != F) {
    throw ShapeError("batch_norm feature dimension " + std::to_string(F) +
                     " does not match gain/bias/statistics");
  }
  std::vector<double> mean(F, 0.0), inv_std(F, 0.0);
  if (mode == Mode::train) {
    if (R < 2) {
      throw DegenerateBatchError("batch normalization in training needs a batch of at least 2, got " +
                                 std::to_string(R));
    }
    std::vector<double> var(F, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t f = 0; f < F; ++f) mean[f] += xv[r * F + f];
    }
    for (auto& m : mean) m /= static_cast<double>(R);
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t f = 0; f < F; ++f) {
        const double d = xv[r * F + f] - mean[f];
        var[f] += d * d;
      }
    }
    for (std::size_t f = 0; f < F; ++f) {
      const double biased = var[f] / static_cast<double>(R);
      const double unbiased = var[f] / static_cast<double>(R - 1);
      inv_std[f] = 1.0 / std::sqrt(biased + eps);
      stats.mean[f] = static_cast<T>((1.0 - momentum) * stats.mean[f] + momentum * mean[f]);
      stats.var[f] = static_cast<T>((1.0 - momentum) * stats.var[f] + momentum * unbiased);
    }
  } else {
    for (std::size_t f = 0; f < F; ++f) {
      mean[f] = stats.mean[f];
      inv_std[f] = 1.0 / std::sqrt(static_cast<double>(stats.var[f]) + eps);
    }
  }
  BasicTensor<T> out({R, F});
  std::vector<T> xhat(R * F);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t f = 0; f < F; ++f) {
      const double h = (xv[r * F + f] - mean[f]) * inv_std[f];
      xhat[r * F + f] = static_cast<T>(h);
      out[r * F + f] = static_cast<T>(h * gv[f] + bv[f]);
    }
  }
  require_finite<T>(out.data(), "batch_norm");
  const bool batch_stats = mode == Mode::train;
  return tape.record(
      "batch_norm", {x, gain, bias}, std::move(out),
      [x, gain, bias, R, F, batch_stats, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](BasicTape<T>& t, std::span<const T> g) {
        const auto& gv = t.value(gain);
        std::vector<double> dg(F, 0.0), db(F, 0.0);
        for (std::size_t r = 0; r < R; ++r) {
          for (std::size_t f = 0; f < F; ++f) {
            const double gi = g[r * F + f];
            dg[f] += gi * xhat[r * F + f];
            db[f] += gi;
          }
        }
        if (t.requires_grad(gain)) {
          auto gg = t.grad_buffer(gain);
          for (std::size_t f = 0; f < F; ++f) gg[f] += static_cast<T>(dg[f]);
        }
        if (t.requires_grad(bias)) {
          auto gb = t.grad_buffer(bias);
          for (std::size_t f = 0; f < F; ++f) gb[f] += static_cast<T>(db[f]);
        }
        if (!t.requires_grad(x)) return;
        auto gx = t.grad_buffer(x);
        const double n = static_cast<double>(R);
        for (std::size_t r = 0; r < R; ++r) {
          for (std::size_t f = 0; f < F; ++f) {
            const double dh = static_cast<double>(g[r * F + f]) * gv[f];
            if (batch_stats) {
              // sum(dh) = gain*db, sum(dh*xhat) = gain*dg
              gx[r * F + f] += static_cast<T>(
                  inv_std[f] / n *
                  (n * dh - gv[f] * db[f] - xhat[r * F + f] * gv[f] * dg[f]));
            } else {
              gx[r * F + f] += static_cast<T>(dh * inv_std[f]);
            }
          }
        }
      });
}

/// Dispatches to batch or layer normalization. `stats` is only consulted for
/// the batch kind.
template <class T>
Var<T> normalize(BasicTape<T>& tape, Var<T> x, NormKind kind, Var<T> gain,
                 Var<T> bias, RunningStats<T>* stats, Mode mode) {
  if (kind == NormKind::layer) return layer_norm(tape, x, gain, bias);
  if (!stats) throw ContractError("batch normalization needs running statistics");
  return batch_norm(tape, x, gain, bias, *stats, mode);
}

/// Causal multi-head scaled dot-product attention.
///
/// q, k, v are [batch*seq x d_model]; position i of a sequence attends only
/// to positions j <= i of the same sequence.
template <class T>
Var<T> causal_attention(BasicTape<T>& tape, Var<T> q, Var<T> k, Var<T> v,
                        std::size_t batch, std::size_t seq, std::size_t heads) {
  const auto& qv = tape.value(q);
  const auto& kv = tape.value(k);
  const auto& vv = tape.value(v);
  detail::require_matrix(qv, "causal_attention");
  const std::size_t D = qv.dim(1);
  if (qv.dim(0) != batch * seq || kv.shape() != qv.shape() || vv.shape() != qv.shape()) {
    throw ShapeError("attention inputs must all be [" + std::to_string(batch * seq) +
                     "x" + std::to_string(D) + "], got q " + shape_str(qv.shape()));
  }
  if (heads == 0 || D % heads != 0) {
    throw ShapeError("d_model " + std::to_string(D) + " is not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs[b][h][i][j], zero above the diagonal.
  std::vector<T> probs(batch * heads * seq * seq, T{0});
  BasicTensor<T> out({batch * seq, D});
  std::vector<double> scores(seq);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      T* p = probs.data() + (b * heads + h) * seq * seq;
      for (std::size_t i = 0; i < seq; ++i) {
        const T* qi = qv.data().data() + (b * seq + i) * D + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const T* kj = kv.data().data() + (b * seq + j) * D + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += static_cast<double>(qi[c]) * kj[c];
          scores[j] = s * scale;
          mx = std::max(mx, scores[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          total += scores[j];
        }
        T* oi = out.data().data() + (b * seq + i) * D + h * dh;
        std::vector<double> acc(dh, 0.0);
        for (std::size_t j = 0; j <= i; ++j) {
          const double w = scores[j] / total;
          p[i * seq + j] = static_cast<T>(w);
          const T* vj = vv.data().data() + (b * seq + j) * D + h * dh;
          for (std::size_t c = 0; c < dh; ++c) acc[c] += w * vj[c];
        }
        for (std::size_t c = 0; c < dh; ++c) oi[c] = static_cast<T>(acc[c]);
      }
    }
  }
  require_finite<T>(out.data(), "causal_attention");
  return tape.record(
      "causal_attention", {q, k, v}, std::move(out),
      [q, k, v, batch, seq, heads, D, dh, scale, probs = std::move(probs)](
          BasicTape<T>& t, std::span<const T> g) {
        const T* qd = t.value(q).data().data();
        const T* kd = t.value(k).data().data();
        const T* vd = t.value(v).data().data();
        const bool need_q = t.requires_grad(q);
        const bool need_k = t.requires_grad(k);
        const bool need_v = t.requires_grad(v);
        T* gq = need_q ? t.grad_buffer(q).data() : nullptr;
        T* gk = need_k ? t.grad_buffer(k).data() : nullptr;
        T* gv = need_v ? t.grad_buffer(v).data() : nullptr;
        std::vector<double> dscore(seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const T* p = probs.data() + (b * heads + h) * seq * seq;
            for (std::size_t i = 0; i < seq; ++i) {
              const T* gi = g.data() + (b * seq + i) * D + h * dh;
              double dot = 0.0;
              for (std::size_t j = 0; j <= i; ++j) {
                const T* vj = vd + (b * seq + j) * D + h * dh;
                double dp = 0.0;
                for (std::size_t c = 0; c < dh; ++c) dp += static_cast<double>(gi[c]) * vj[c];
                dscore[j] = dp;
                dot += dp * p[i * seq + j];
              }
              for (std::size_t j = 0; j <= i; ++j) {
                const double pij = p[i * seq + j];
                const double ds = pij * (dscore[j] - dot) * scale;
                const std::size_t qi = (b * seq + i) * D + h * dh;
                const std::size_t kj = (b * seq + j) * D + h * dh;
                for (std::size_t c = 0; c < dh; ++c) {
                  if (need_q) gq[qi + c] += static_cast<T>(ds * kd[kj + c]);
                  if (need_k) gk[kj + c] += static_cast<T>(ds * qd[qi + c]);
                  if (need_v) gv[kj + c] += static_cast<T>(pij * gi[c]);
                }
              }
            }
          }
        }
      });
}

/// Builds the encoder token sequence: per sample, n projected patches plus
/// their positional rows, followed by the sequence token plus its own
/// positional row. Output is [batch*(n+1) x d_model].
template <class T>
Var<T> assemble_tokens(BasicTape<T>& tape, Var<T> patch_emb, Var<T> positional,
                       Var<T> seq_token, std::size_t batch, std::size_t n) {
  const auto& pe = tape.value(patch_emb);
  const auto& pos = tape.value(positional);
  const auto& st = tape.value(seq_token);
  detail::require_matrix(pe, "assemble_tokens");
  const std::size_t D = pe.dim(1);
  if (pe.dim(0) != batch * n || pos.numel() != (n + 1) * D || st.numel() != D) {
    throw ShapeError("token assembly shape mismatch: patches " + shape_str(pe.shape()) +
                     ", positional " + shape_str(pos.shape()) + ", seq token " +
                     shape_str(st.shape()));
  }
  const std::size_t T1 = n + 1;
  BasicTensor<T> out({batch * T1, D});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t c = 0; c < D; ++c) {
        out[(b * T1 + k) * D + c] = pe[(b * n + k) * D + c] + pos[k * D + c];
      }
    }
    for (std::size_t c = 0; c < D; ++c) {
      out[(b * T1 + n) * D + c] = st[c] + pos[n * D + c];
    }
  }
  return tape.record(
      "assemble_tokens", {patch_emb, positional, seq_token}, std::move(out),
      [patch_emb, positional, seq_token, batch, n, D, T1](BasicTape<T>& t,
                                                          std::span<const T> g) {
        if (t.requires_grad(patch_emb)) {
          auto gp = t.grad_buffer(patch_emb);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < n; ++k) {
              for (std::size_t c = 0; c < D; ++c) {
                gp[(b * n + k) * D + c] += g[(b * T1 + k) * D + c];
              }
            }
          }
        }
        if (t.requires_grad(positional)) {
          auto gp = t.grad_buffer(positional);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < T1 * D; ++i) gp[i] += g[b * T1 * D + i];
          }
        }
        if (t.requires_grad(seq_token)) {
          auto gs = t.grad_buffer(seq_token);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < D; ++c) gs[c] += g[(b * T1 + n) * D + c];
          }
        }
      });
}

/// Row `index` of every length-`seq` block: [batch*seq x D] -> [batch x D].
template <class T>
Var<T> take_rows(BasicTape<T>& tape, Var<T> x, std::size_t batch, std::size_t seq,
                 std::size_t index) {
  const auto& xv = tape.value(x);
  detail::require_matrix(xv, "take_rows");
  if (xv.dim(0) != batch * seq || index >= seq) {
    throw ShapeError("take_rows out of range for " + shape_str(xv.shape()));
  }
  const std::size_t D = xv.dim(1);
  BasicTensor<T> out({batch, D});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < D; ++c) out[b * D + c] = xv[(b * seq + index) * D + c];
  }
  return tape.record("take_rows", {x}, std::move(out),
                     [x, batch, seq, index, D](BasicTape<T>& t, std::span<const T> g) {
                       auto gx = t.grad_buffer(x);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t c = 0; c < D; ++c) {
                           gx[(b * seq + index) * D + c] += g[b * D + c];
                         }
                       }
                     });
}

}  // namespace omega::numerics
