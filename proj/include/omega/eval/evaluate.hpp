#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "omega/data/batch.hpp"
#include "omega/data/csv.hpp"
#include "omega/data/series.hpp"
#include "omega/data/window.hpp"
#include "omega/error.hpp"
#include "omega/model/forward.hpp"
#include "omega/model/params.hpp"
#include "omega/util/rng.hpp"

namespace omega::eval {

using numerics::Tensor;

enum class Task { forecast, reconstruct };

inline const char* to_string(Task t) { return t == Task::forecast ? "forecast" : "reconstruct"; }

inline Task parse_task(std::string_view s) {
  if (s == "forecast") return Task::forecast;
  if (s == "reconstruct") return Task::reconstruct;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected forecast or reconstruct)");
}

enum class Variant { zero_shot, fine_tuned, target_trained, persistence, window_mean };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::zero_shot: return "zero_shot";
    case Variant::fine_tuned: return "fine_tuned";
    case Variant::target_trained: return "target_trained";
    case Variant::persistence: return "persistence";
    case Variant::window_mean: return "window_mean";
  }
  return "unknown";
}

struct WindowRecord {
  std::size_t offset = 0;  // context start, absolute index in the parent series
  double mse = 0.0;
};

struct WindowTrace {
  std::size_t offset = 0;
  std::vector<data::TraceRow> rows;
};

struct EvalReport {
  std::string dataset;
  Task task = Task::forecast;
  Variant variant = Variant::zero_shot;
  std::size_t length = 0;  // L, W, H, S of the evaluated view
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::size_t stride = 0;
  std::vector<WindowRecord> windows;
  double mean_mse = 0.0;
  double persistence_mse = 0.0;
  double mean_baseline_mse = 0.0;
  std::uint64_t config_fingerprint = 0;
  std::vector<WindowTrace> traces;  // filled only when requested

  static constexpr std::string_view kSummaryHeader =
      "dataset,task,variant,windows,mean_mse,persistence_mse,mean_baseline_mse";

  std::string summary_line() const {
    using data::detail::format_double;
    return dataset + ',' + to_string(task) + ',' + to_string(variant) + ',' +
           std::to_string(windows.size()) + ',' + format_double(mean_mse) + ',' +
           format_double(persistence_mse) + ',' + format_double(mean_baseline_mse);
  }
};

/// Writes `<stem>_summary.csv`, `<stem>_windows.csv` and, when present,
/// `<stem>_traces/window_<offset>.csv`.
inline void write_report(const std::filesystem::path& dir, const std::string& stem,
                         const EvalReport& r) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / (stem + "_summary.csv"));
    if (!out) throw IoError("cannot write report in " + dir.string());
    out << EvalReport::kSummaryHeader << '\n' << r.summary_line() << '\n';
  }
  {
    std::ofstream out(dir / (stem + "_windows.csv"));
    if (!out) throw IoError("cannot write report in " + dir.string());
    out << "offset,mse\n";
    for (const auto& w : r.windows) out << w.offset << ',' << data::detail::format_double(w.mse) << '\n';
  }
  if (!r.traces.empty()) {
    const auto tdir = dir / (stem + "_traces");
    std::filesystem::create_directories(tdir);
    for (const auto& t : r.traces) {
      data::write_trace_csv(tdir / ("window_" + std::to_string(t.offset) + ".csv"), t.rows);
    }
  }
}

/// Maps a batch to predictions in normalized scale: [B x >=H] for forecast,
/// [B x W] for reconstruct.
struct Predictor {
  std::size_t l_patch = 0;
  std::function<Tensor(const data::Batch&, Task)> fn;
  std::uint64_t fingerprint = 0;
};

inline std::uint64_t fingerprint(const model::ModelConfig& c) { return util::fnv1a(c.to_text()); }

inline Predictor model_predictor(const model::ModelParams<float>& params) {
  return {params.config.l_patch,
          [&params](const data::Batch& b, Task task) {
            return model::predict(params, b.inputs, b.size,
                                  task == Task::forecast ? model::Head::forecast
                                                         : model::Head::reconstruct);
          },
          fingerprint(params.config)};
}

/// Returns the model input unchanged; scores exactly 0 on reconstruction.
inline Predictor echo_predictor(std::size_t l_patch) {
  return {l_patch,
          [](const data::Batch& b, Task task) {
            if (task != Task::reconstruct) throw ContractError("the echo oracle only reconstructs");
            Tensor out = b.inputs;
            out.reshape({b.size, b.n * b.l_patch});
            return out;
          },
          0};
}

struct EvalOptions {
  std::size_t workers = 1;
  bool emit_traces = false;
};

namespace detail {

inline constexpr std::size_t kChunk = 32;

struct WindowResult {
  double mse = 0.0;
  double persistence = 0.0;
  double mean = 0.0;
  std::vector<data::TraceRow> trace;
};

inline double mse_of(std::span<const double> pred, std::span<const double> target) {
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double e = pred[i] - target[i];
    acc += e * e;
  }
  return acc / static_cast<double>(target.size());
}

inline double constant_mse(double value, std::span<const double> target) {
  double acc = 0.0;
  for (double t : target) acc += (value - t) * (value - t);
  return acc / static_cast<double>(target.size());
}

inline double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Runs `fn(chunk)` for every chunk index on up to `workers` threads. The first
// exception is rethrown after all threads join.
inline void for_each_chunk(std::size_t chunks, std::size_t workers,
                           const std::function<void(std::size_t)>& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(chunks, 1));
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      (void)w;
      for (std::size_t c = next++; c < chunks && !failed; c = next++) {
        try {
          fn(c);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Scores `predictor` on every sliding window of `series`.
///
/// Each window's context is min-max normalized; the forecast target is the
/// next H samples under the same map and the reconstruction target is the
/// model input itself. Model scores compare against the float inputs the
/// model saw; baselines are computed in double. Windows are processed in
/// fixed chunks so the result is independent of the worker count.
inline EvalReport evaluate(const Predictor& predictor, const data::SeriesView& series, Task task,
                           std::size_t W, std::size_t H, std::size_t S,
                           const EvalOptions& options = {}) {
  const std::vector<data::WindowIndex> idx = data::sliding_windows(series, W, H, S);
  std::vector<detail::WindowResult> results(idx.size());
  const std::vector<data::SeriesView> pool{series};
  const std::size_t chunks = (idx.size() + detail::kChunk - 1) / detail::kChunk;

  detail::for_each_chunk(chunks, options.workers, [&](std::size_t c) {
    const std::size_t lo = c * detail::kChunk, hi = std::min(idx.size(), lo + detail::kChunk);
    std::vector<data::BatchItem> items;
    for (std::size_t i = lo; i < hi; ++i) items.push_back({0, idx[i].context_begin});
    const data::Batch batch = data::assemble_batch(pool, items, W, H, predictor.l_patch);
    const Tensor pred = predictor.fn(batch, task);
    const std::size_t width = task == Task::forecast ? H : W;
    if (pred.rank() != 2 || pred.dim(0) != batch.size || pred.dim(1) < width) {
      throw ShapeError("predictor returned " + numerics::shape_str(pred.shape()) + " for " +
                       std::to_string(batch.size) + " windows of width " + std::to_string(width));
    }
    const Tensor& model_target = task == Task::forecast ? batch.forecast_targets
                                                        : batch.reconstruction_targets;
    for (std::size_t b = 0; b < batch.size; ++b) {
      const data::ContextWindow& ctx = batch.contexts[b];
      std::vector<double> p(width), t(width);
      for (std::size_t j = 0; j < width; ++j) {
        p[j] = pred[b * pred.dim(1) + j];
        t[j] = model_target[b * width + j];
      }
      detail::WindowResult& r = results[lo + b];
      r.mse = detail::mse_of(p, t);

      std::vector<double> exact;
      if (task == Task::forecast) {
        const auto horizon = series.read(items[b].offset + W, H);
        exact.reserve(H);
        for (double x : horizon) exact.push_back(ctx.apply(x));
      } else {
        exact = ctx.values;
      }
      r.persistence = detail::constant_mse(ctx.values.back(), exact);
      r.mean = detail::constant_mse(detail::mean_of(ctx.values), exact);

      if (options.emit_traces) {
        const std::size_t base = series.begin() + items[b].offset;
        const auto raw = series.read(items[b].offset, W + H);
        const std::vector<double> denorm = data::denormalize(p, ctx);
        for (std::size_t i = 0; i < W; ++i) {
          data::TraceRow row{base + i, raw[i], std::nullopt};
          if (task == Task::reconstruct) row.prediction = denorm[i];
          r.trace.push_back(row);
        }
        if (task == Task::forecast) {
          for (std::size_t h = 0; h < H; ++h) r.trace.push_back({base + W + h, raw[W + h], denorm[h]});
        }
      }
    }
  });

  EvalReport rep;
  rep.dataset = series.id();
  rep.task = task;
  rep.length = series.size();
  rep.window = W;
  rep.horizon = H;
  rep.stride = S;
  rep.config_fingerprint = predictor.fingerprint;
  double sum = 0.0, sum_p = 0.0, sum_m = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    rep.windows.push_back({series.begin() + idx[i].context_begin, results[i].mse});
    sum += results[i].mse;
    sum_p += results[i].persistence;
    sum_m += results[i].mean;
    if (options.emit_traces) rep.traces.push_back({rep.windows.back().offset, std::move(results[i].trace)});
  }
  const double n = static_cast<double>(idx.size());
  rep.mean_mse = sum / n;
  rep.persistence_mse = sum_p / n;
  rep.mean_baseline_mse = sum_m / n;
  return rep;
}

/// Throws ConfigMismatchError unless W = n * l_patch and H <= l_pred.
inline void require_geometry(const model::ModelConfig& c, std::size_t W, std::size_t H) {
  if (W != c.context_length() || H == 0 || H > c.l_pred) {
    throw ConfigMismatchError("checkpoint expects window " + std::to_string(c.context_length()) +
                              " (n_patches * l_patch) and horizon <= " + std::to_string(c.l_pred) +
                              ", got window " + std::to_string(W) + " and horizon " +
                              std::to_string(H));
  }
}

/// Zero-shot evaluation: inference only, parameters are never written.
inline EvalReport evaluate_zero_shot(const model::ModelParams<float>& params,
                                     const data::SeriesView& series, Task task, std::size_t W,
                                     std::size_t H, std::size_t S,
                                     const EvalOptions& options = {}) {
  require_geometry(params.config, W, H);
  EvalReport r = evaluate(model_predictor(params), series, task, W, H, S, options);
  r.variant = Variant::zero_shot;
  return r;
}

namespace detail {

inline EvalReport baseline_report(const data::SeriesView& series, Task task, std::size_t W,
                                  std::size_t H, std::size_t S, Variant variant) {
  EvalReport r;
  r.dataset = series.id();
  r.task = task;
  r.variant = variant;
  r.length = series.size();
  r.window = W;
  r.horizon = H;
  r.stride = S;
  double sum = 0.0, sum_p = 0.0, sum_m = 0.0;
  for (const auto& w : data::sliding_windows(series, W, H, S)) {
    const auto ctx = data::minmax_normalize(series.read(w.context_begin, W), w.context_begin);
    std::vector<double> exact;
    if (task == Task::forecast) {
      for (double x : series.read(w.target_begin, H)) exact.push_back(ctx.apply(x));
    } else {
      exact = ctx.values;
    }
    const double p = constant_mse(ctx.values.back(), exact);
    const double m = constant_mse(mean_of(ctx.values), exact);
    r.windows.push_back({series.begin() + w.context_begin, variant == Variant::persistence ? p : m});
    sum += r.windows.back().mse;
    sum_p += p;
    sum_m += m;
  }
  const double n = static_cast<double>(r.windows.size());
  r.mean_mse = sum / n;
  r.persistence_mse = sum_p / n;
  r.mean_baseline_mse = sum_m / n;
  return r;
}

}  // namespace detail

/// Last context value repeated, scored in normalized scale.
inline EvalReport baseline_persistence(const data::SeriesView& series, std::size_t W,
                                       std::size_t H, std::size_t S, Task task = Task::forecast) {
  return detail::baseline_report(series, task, W, H, S, Variant::persistence);
}

/// Context mean repeated, scored in normalized scale.
inline EvalReport baseline_window_mean(const data::SeriesView& series, std::size_t W,
                                       std::size_t H, std::size_t S, Task task = Task::forecast) {
  return detail::baseline_report(series, task, W, H, S, Variant::window_mean);
}

}  // namespace omega::eval
