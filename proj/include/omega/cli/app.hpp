#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "omega/cli/run_config.hpp"
#include "omega/data/csv.hpp"
#include "omega/data/preprocess.hpp"
#include "omega/error.hpp"
#include "omega/eval/compare.hpp"
#include "omega/eval/evaluate.hpp"
#include "omega/eval/split.hpp"
#include "omega/model/grad_check.hpp"
#include "omega/synth/corpus.hpp"
#include "omega/train/checkpoint.hpp"
#include "omega/train/loop.hpp"

namespace omega::cli {

namespace fs = std::filesystem;

enum class LogLevel { error = 0, info = 1, debug = 2 };

class Log {
 public:
  Log(std::ostream& err, LogLevel level) : err_(err), level_(level) {}

  static LogLevel from_env(std::ostream& err) {
    const char* v = std::getenv("OMEGA_LOG");
    if (!v || !*v) return LogLevel::info;
    const std::string s(v);
    if (s == "error") return LogLevel::error;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    err << "omega: ignoring OMEGA_LOG=" << s << " (expected error, info or debug)\n";
    return LogLevel::info;
  }

  void error(const std::string& m) const { emit(LogLevel::error, "error", m); }
  void info(const std::string& m) const { emit(LogLevel::info, "info", m); }
  void debug(const std::string& m) const { emit(LogLevel::debug, "debug", m); }

 private:
  void emit(LogLevel at, const char* tag, const std::string& m) const {
    if (static_cast<int>(at) <= static_cast<int>(level_)) err_ << "omega [" << tag << "] " << m << '\n';
  }
  std::ostream& err_;
  LogLevel level_;
};

/// Parsed command line: subcommand, flags and the resolved configuration.
struct Invocation {
  std::string command;
  RunConfig config;
  std::string out;
  std::string checkpoint;
  std::string data;
  bool emit_traces = false;
  bool held_out = false;
};

namespace detail {

inline std::string fmt(double v) { return data::detail::format_double(v); }

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_resolved(const fs::path& path, const RunConfig& cfg, const std::string& command) {
  write_text(path, "# resolved configuration for `omega " + command + "`\n" + cfg.to_text());
}

inline fs::path require_out_dir(const Invocation& inv) {
  if (inv.out.empty()) throw ConfigError("--out DIR is required");
  fs::create_directories(inv.out);
  return inv.out;
}

/// Infers a sampling rate from a leading `time_s` column when present.
inline std::optional<double> sniff_rate(const fs::path& path) {
  std::ifstream in(path);
  std::string header, a, b;
  if (!std::getline(in, header) || header.rfind("time_s", 0) != 0) return std::nullopt;
  if (!std::getline(in, a) || !std::getline(in, b)) return std::nullopt;
  const auto ta = data::detail::parse_double(data::detail::split_commas(a)[0]);
  const auto tb = data::detail::parse_double(data::detail::split_commas(b)[0]);
  if (!ta || !tb || !(*tb > *ta)) return std::nullopt;
  return 1.0 / (*tb - *ta);
}

struct Pool {
  std::vector<data::TimeSeries> series;
  std::vector<synth::ManifestRecord> manifest;  // empty for plain CSV input
};

/// A corpus directory (with manifest.txt), a directory of CSVs or one CSV.
inline Pool load_pool(const std::string& path, const RunConfig& cfg) {
  Pool pool;
  const fs::path p(path);
  if (fs::is_directory(p) && fs::exists(p / "manifest.txt")) {
    synth::Corpus c = synth::read_corpus(p);
    pool.series = std::move(c.series);
    pool.manifest = std::move(c.manifest);
    return pool;
  }
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .csv files in " + path);
  } else {
    files.push_back(p);
  }
  for (const auto& f : files) {
    data::TimeSeries s = data::load_csv(f, cfg.column());
    s.sampling_rate_hz = sniff_rate(f);
    pool.series.push_back(std::move(s));
  }
  return pool;
}

inline data::TimeSeries load_single(const std::string& path, const RunConfig& cfg) {
  Pool p = load_pool(path, cfg);
  if (p.series.size() != 1) {
    throw ConfigError("--data must name a single series, " + path + " holds " +
                      std::to_string(p.series.size()));
  }
  return std::move(p.series.front());
}

inline data::TimeSeries prepared(data::TimeSeries s, const RunConfig& cfg) {
  s.validate();
  if (cfg.eval.preprocess == "slow") {
    s = data::preprocess_slow_signal(s, cfg.eval.target_hz, cfg.eval.smooth_width);
  }
  return s;
}

inline std::size_t window_of(const RunConfig& c, const model::ModelConfig& m) {
  return c.eval.window ? c.eval.window : m.context_length();
}
inline std::size_t horizon_of(const RunConfig& c, const model::ModelConfig& m) {
  return c.eval.horizon ? c.eval.horizon : m.l_pred;
}

inline model::ModelParams<float> load_model(const Invocation& inv, RunConfig& cfg) {
  if (inv.checkpoint.empty()) throw ConfigError("--checkpoint PATH is required");
  train::Checkpoint c = train::load_checkpoint(inv.checkpoint);
  cfg.model = c.params.config;
  return std::move(c.params);
}

inline train::TrainOptions progress(const Log& log, const train::TrainConfig& t) {
  train::TrainOptions o;
  o.on_step = [&log, every = t.eval_every, steps = t.steps](const train::LossRecord& r) {
    if (r.step % every == 0 || r.step == 1 || r.step == steps) {
      log.info("step " + std::to_string(r.step) + " total " + fmt(r.total) + " forecast " +
               fmt(r.forecast_mse) + " reconstruct " + fmt(r.reconstruct_mse));
    }
  };
  return o;
}

inline void write_validation(const fs::path& path, const train::TrainReport& r) {
  std::ostringstream os;
  os << "step,mse\n";
  for (const auto& v : r.validation) os << v.step << ',' << fmt(v.mse) << '\n';
  write_text(path, os.str());
}

}  // namespace detail

// ---- subcommands ---------------------------------------------------------

inline int cmd_synth(Invocation& inv, const Log& log, std::ostream& out) {
  const fs::path dir = detail::require_out_dir(inv);
  RunConfig& cfg = inv.config;
  synth::Corpus corpus;
  if (inv.held_out) {
    corpus = synth::held_out_set(cfg.corpus.seed);
  } else {
    synth::Recipe recipe = synth::default_pretraining_recipe();
    if (!cfg.corpus.recipe.empty()) {
      std::ifstream in(cfg.corpus.recipe);
      if (!in) throw ConfigError("cannot read recipe " + cfg.corpus.recipe);
      std::ostringstream ss;
      ss << in.rdbuf();
      recipe = synth::parse_recipe(ss.str());
    }
    corpus = synth::build_corpus(recipe, cfg.corpus.seed);
  }
  synth::write_corpus(dir, corpus);
  detail::write_resolved(dir / "resolved.cfg", cfg, inv.command);
  log.info("wrote " + std::to_string(corpus.series.size()) + " series to " + dir.string());
  out << corpus.series.size() << " series written to " << dir.string() << '\n';
  return 0;
}

inline detail::Pool pretraining_pool(const Invocation& inv) {
  const RunConfig& cfg = inv.config;
  if (!inv.data.empty()) {
    detail::Pool p = detail::load_pool(inv.data, cfg);
    for (const auto& r : p.manifest) {
      if (synth::is_held_out(r.spec.kind)) {
        throw ConfigError("pretraining data contains held-out kind " +
                          std::string(synth::to_string(r.spec.kind)) + " (" + r.id + ")");
      }
    }
    return p;
  }
  synth::Recipe recipe = synth::default_pretraining_recipe();
  if (!cfg.corpus.recipe.empty()) {
    std::ifstream in(cfg.corpus.recipe);
    if (!in) throw ConfigError("cannot read recipe " + cfg.corpus.recipe);
    std::ostringstream ss;
    ss << in.rdbuf();
    recipe = synth::parse_recipe(ss.str());
  }
  synth::require_pretraining_safe(recipe);
  synth::Corpus c = synth::build_corpus(recipe, cfg.corpus.seed);
  return {std::move(c.series), std::move(c.manifest)};
}

inline int cmd_pretrain(Invocation& inv, const Log& log, std::ostream& out) {
  const fs::path dir = detail::require_out_dir(inv);
  RunConfig& cfg = inv.config;
  cfg.train.target_mode = train::TargetMode::pretrain;
  const detail::Pool pool = pretraining_pool(inv);
  const auto views = data::views_of(pool.series);
  detail::write_resolved(dir / "resolved.cfg", cfg, inv.command);
  log.info("pretraining on " + std::to_string(pool.series.size()) + " series, " +
           std::to_string(model::parameter_count(cfg.model)) + " parameters");
  auto r = train::pretrain(views, cfg.model, cfg.train, detail::progress(log, cfg.train));
  train::save_checkpoint(dir / "checkpoint.omg", r.params, r.report.steps_run);
  train::write_loss_curve(dir / "loss_curve.csv", r.report.curve);
  out << "initial_loss " << detail::fmt(r.report.curve.front().total) << "\nfinal_loss "
      << detail::fmt(r.report.curve.back().total) << '\n';
  return 0;
}

/// finetune and target-train: train on the earliest 80% of one series and
/// keep the snapshot with the best validation-segment MSE.
inline int cmd_fit(Invocation& inv, const Log& log, std::ostream& out, bool fresh) {
  const fs::path dir = detail::require_out_dir(inv);
  RunConfig& cfg = inv.config;
  if (inv.data.empty()) throw ConfigError("--data PATH is required");
  std::optional<model::ModelParams<float>> base;
  if (!fresh) base = detail::load_model(inv, cfg);
  const data::TimeSeries series = detail::prepared(detail::load_single(inv.data, cfg), cfg);
  const std::size_t W = cfg.model.context_length(), H = detail::horizon_of(cfg, cfg.model);
  eval::require_geometry(cfg.model, detail::window_of(cfg, cfg.model), H);
  const eval::Split split = eval::split_series(series, W, H);
  const std::vector<data::SeriesView> pool{split.train};
  const eval::EvalOptions eo{cfg.workers, false};
  train::TrainOptions opts = detail::progress(log, cfg.train);
  opts.validator = [&](const model::ModelParams<float>& p) {
    return eval::evaluate(eval::model_predictor(p), split.validation, cfg.eval.task, W, H,
                          cfg.eval.stride, eo).mean_mse;
  };
  train::TrainReport report;
  model::ModelParams<float> params = fresh ? model::init_params<float>(cfg.model) : *base;
  if (fresh) {
    cfg.train.target_mode = train::TargetMode::target_train;
    detail::write_resolved(dir / "resolved.cfg", cfg, inv.command);
    report = train::run_training(params, pool, cfg.train, opts);
  } else {
    cfg.train.target_mode = cfg.eval.task == eval::Task::forecast
                                ? train::TargetMode::finetune_forecast
                                : train::TargetMode::finetune_reconstruct;
    detail::write_resolved(dir / "resolved.cfg", cfg, inv.command);
    report = train::finetune(params, pool, cfg.train, opts);
  }
  train::save_checkpoint(dir / "checkpoint.omg", params, report.selected_step.value_or(report.steps_run));
  train::write_loss_curve(dir / "loss_curve.csv", report.curve);
  detail::write_validation(dir / "validation.csv", report);
  out << "selected_step " << report.selected_step.value_or(report.steps_run) << '\n';
  return 0;
}

inline int cmd_eval(Invocation& inv, const Log& log, std::ostream& out) {
  const fs::path dir = detail::require_out_dir(inv);
  RunConfig& cfg = inv.config;
  const model::ModelParams<float> params = detail::load_model(inv, cfg);
  if (inv.data.empty()) throw ConfigError("--data PATH is required");
  const detail::Pool pool = detail::load_pool(inv.data, cfg);
  const std::size_t W = detail::window_of(cfg, params.config), H = detail::horizon_of(cfg, params.config);
  detail::write_resolved(dir / "resolved.cfg", cfg, inv.command);
  std::ostringstream summary;
  summary << eval::EvalReport::kSummaryHeader << '\n';
  for (const auto& raw : pool.series) {
    const data::TimeSeries s = detail::prepared(raw, cfg);
    const eval::EvalReport r = eval::evaluate_zero_shot(params, s, cfg.eval.task, W, H, cfg.eval.stride,
                                                        {cfg.workers, inv.emit_traces});
    eval::write_report(dir, s.id, r);
    log.info(s.id + ": " + std::to_string(r.windows.size()) + " windows");
    summary << r.summary_line() << '\n';
    out << r.summary_line() << '\n';
  }
  detail::write_text(dir / "summary.csv", summary.str());
  return 0;
}

inline int cmd_compare(Invocation& inv, const Log& log, std::ostream& out) {
  const fs::path dir = detail::require_out_dir(inv);
  RunConfig& cfg = inv.config;
  const model::ModelParams<float> params = detail::load_model(inv, cfg);
  if (inv.data.empty()) throw ConfigError("--data PATH is required");
  const data::TimeSeries target = detail::prepared(detail::load_single(inv.data, cfg), cfg);
  eval::CompareConfig cc;
  cc.task = cfg.eval.task;
  cc.window = detail::window_of(cfg, params.config);
  cc.horizon = detail::horizon_of(cfg, params.config);
  cc.stride = cfg.eval.stride;
  cc.train = cfg.train;
  cc.eval = {cfg.workers, inv.emit_traces};
  cc.on_phase = [&log](std::string_view p) { log.info("phase " + std::string(p)); };
  detail::write_resolved(dir / "resolved.cfg", cfg, inv.command);
  const eval::CompareResult r = eval::three_way_compare(params, target, cc);
  for (const auto* rep : {&r.zero_shot, &r.fine_tuned, &r.target_trained}) {
    if (*rep) eval::write_report(dir, eval::to_string((*rep)->variant), **rep);
  }
  std::string text;
  for (const auto& line : r.summary()) text += line + '\n';
  detail::write_text(dir / "summary.txt", text);
  out << text;
  if (r.partial) std::rethrow_exception(r.error);
  return 0;
}

/// forecast / reconstruct on the latest W samples of one series.
inline int cmd_predict(Invocation& inv, const Log& log, std::ostream& out, eval::Task task) {
  if (inv.out.empty()) throw ConfigError("--out PATH is required");
  RunConfig& cfg = inv.config;
  const model::ModelParams<float> params = detail::load_model(inv, cfg);
  if (inv.data.empty()) throw ConfigError("--data PATH (or --input) is required");
  const data::TimeSeries s = detail::prepared(detail::load_single(inv.data, cfg), cfg);
  const std::size_t W = detail::window_of(cfg, params.config), H = detail::horizon_of(cfg, params.config);
  eval::require_geometry(params.config, W, H);
  if (s.size() < W) {
    throw InsufficientDataError("input has " + std::to_string(s.size()) + " samples, the model needs " +
                                    std::to_string(W),
                                W);
  }
  const std::size_t begin = s.size() - W;
  const data::ContextWindow ctx =
      data::minmax_normalize(std::span<const double>(s.values).subspan(begin, W), begin);
  const data::PatchSequence patches = data::segment_patches(ctx, params.config.l_patch);
  numerics::Tensor input({params.config.n_patches, params.config.l_patch});
  for (std::size_t i = 0; i < W; ++i) input[i] = static_cast<float>(patches.flat()[i]);
  const numerics::Tensor pred = model::predict(params, input, 1,
                                               task == eval::Task::forecast ? model::Head::forecast
                                                                            : model::Head::reconstruct);
  const std::size_t width = task == eval::Task::forecast ? H : W;
  std::vector<double> norm(width);
  for (std::size_t i = 0; i < width; ++i) norm[i] = pred[i];
  const std::vector<double> values = data::denormalize(norm, ctx);
  std::vector<data::TraceRow> rows;
  for (std::size_t i = 0; i < W; ++i) {
    rows.push_back({begin + i, s.values[begin + i],
                    task == eval::Task::reconstruct ? std::optional<double>(values[i]) : std::nullopt});
  }
  if (task == eval::Task::forecast) {
    for (std::size_t h = 0; h < H; ++h) rows.push_back({s.size() + h, std::nullopt, values[h]});
  }
  const fs::path path(inv.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  data::write_trace_csv(path, rows);
  detail::write_resolved(path.parent_path() / (path.stem().string() + ".resolved.cfg"), cfg, inv.command);
  log.info("wrote " + std::to_string(rows.size()) + " trace rows to " + path.string());
  out << rows.size() << " rows written to " << path.string() << '\n';
  return 0;
}

inline int cmd_gradcheck(Invocation& inv, const Log& log, std::ostream& out) {
  constexpr double kTolerance = 1e-3;
  const auto checks = model::check_model_gradients(kTolerance, inv.config.model.seed + 1);
  double worst = 0.0;
  std::ostringstream csv;
  csv << "block,max_rel_error,worst_tensor,passed\n";
  for (const auto& c : checks) {
    worst = std::max(worst, c.report.max_rel_error);
    out << c.block << " max_rel_error " << detail::fmt(c.report.max_rel_error) << '\n';
    log.debug(c.block + ": worst tensor " + std::to_string(c.report.worst_tensor) + " index " +
              std::to_string(c.report.worst_index));
    csv << c.block << ',' << detail::fmt(c.report.max_rel_error) << ',' << c.report.worst_tensor << ','
        << (c.report.passed ? "true" : "false") << '\n';
  }
  out << "max relative error " << detail::fmt(worst) << '\n';
  if (!inv.out.empty()) {
    const fs::path dir = detail::require_out_dir(inv);
    detail::write_text(dir / "gradcheck.csv", csv.str());
    detail::write_resolved(dir / "resolved.cfg", inv.config, inv.command);
  }
  if (worst > kTolerance) {
    throw NumericError("gradient check failed: max relative error " + detail::fmt(worst) +
                       " exceeds " + detail::fmt(kTolerance));
  }
  return 0;
}

// ---- entry point ------------------------------------------------------------

inline int dispatch(Invocation& inv, const Log& log, std::ostream& out) {
  const std::string& c = inv.command;
  if (c == "synth") return cmd_synth(inv, log, out);
  if (c == "pretrain") return cmd_pretrain(inv, log, out);
  if (c == "finetune") return cmd_fit(inv, log, out, false);
  if (c == "target-train") return cmd_fit(inv, log, out, true);
  if (c == "eval") return cmd_eval(inv, log, out);
  if (c == "compare") return cmd_compare(inv, log, out);
  if (c == "forecast") return cmd_predict(inv, log, out, eval::Task::forecast);
  if (c == "reconstruct") return cmd_predict(inv, log, out, eval::Task::reconstruct);
  if (c == "gradcheck") return cmd_gradcheck(inv, log, out);
  throw ConfigError("unknown subcommand " + c);
}

/// Runs one command. Exit codes: 0 success, 1 validation or usage error,
/// 2 runtime or numeric error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  const Log log(err, Log::from_env(err));
  CLI::App app("Patch-transformer foundation model for sensor signals", "omega");
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Invocation inv;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> window, horizon, stride, workers;
  std::optional<std::string> task;
  std::vector<std::string> sets;

  struct Spec {
    const char* name;
    const char* help;
    bool checkpoint;
    bool data;
  };
  const Spec specs[] = {
      {"synth", "Generate a synthetic corpus (use --held-out for the evaluation set)", false, false},
      {"pretrain", "Pretrain a fresh model on a corpus (default: built-in synthetic mixture)", false, true},
      {"finetune", "Fine-tune the task decoder of a checkpoint on one series", true, true},
      {"target-train", "Train a fresh model on one series only", false, true},
      {"eval", "Zero-shot sliding-window evaluation", true, true},
      {"compare", "Zero-shot vs fine-tuned vs target-trained comparison", true, true},
      {"forecast", "Forecast beyond the latest context of a series", true, true},
      {"reconstruct", "Reconstruct the latest context of a series", true, true},
      {"gradcheck", "Finite-difference check of every model block", false, false},
  };
  for (const Spec& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--out", inv.out, "Output directory (trace file for forecast/reconstruct)");
    sub->add_option("--seed", seed, "Seed for model, training and corpus");
    sub->add_option("--set", sets, "Override one config key: --set train.lr=0.0005");
    sub->add_option("--workers", workers, "Evaluation worker threads");
    if (s.checkpoint) {
      auto* o = sub->add_option("--checkpoint", inv.checkpoint, "Model checkpoint (.omg)");
      if (std::string(s.name) != "target-train") o->required();
    }
    if (s.data) {
      auto* d = sub->add_option("--data,--input", inv.data, "Series CSV, CSV directory or corpus directory");
      if (std::string(s.name) != "pretrain") d->required();
      sub->add_option("--task", task, "forecast or reconstruct");
      sub->add_option("--window", window, "Context length W");
      sub->add_option("--horizon", horizon, "Forecast horizon H");
      sub->add_option("--stride", stride, "Sliding-window stride S");
      sub->add_flag("--emit-traces", inv.emit_traces, "Write per-window prediction traces");
    }
    if (std::string(s.name) == "synth") sub->add_flag("--held-out", inv.held_out, "Write the held-out set");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const bool unknown_command =
        argc > 1 && argv[1][0] != '-' &&
        std::none_of(std::begin(specs), std::end(specs),
                     [&](const Spec& s) { return std::string_view(s.name) == argv[1]; });
    if (unknown_command) {
      err << "omega: unknown subcommand '" << argv[1] << "'\n\n";
    } else {
      err << "omega: " << e.what() << "\n\n";
    }
    const CLI::App* shown = &app;
    for (int i = 1; i < argc; ++i) {
      for (const CLI::App* sub : app.get_subcommands(nullptr)) {
        if (sub->get_name() == argv[i]) shown = sub;
      }
      if (shown != &app) break;
    }
    err << shown->help();
    return 1;
  }

  try {
    inv.command = app.get_subcommands().front()->get_name();
    RunConfig& cfg = inv.config;
    if (!config_path.empty()) cfg.merge_file(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      cfg.set(detail::trim(std::string_view(s).substr(0, eq)), std::string_view(s).substr(eq + 1));
    }
    if (seed) cfg.model.seed = cfg.train.seed = cfg.corpus.seed = *seed;
    if (window) cfg.eval.window = *window;
    if (horizon) cfg.eval.horizon = *horizon;
    if (stride) cfg.eval.stride = *stride;
    if (workers) cfg.workers = *workers;
    if (task) cfg.eval.task = eval::parse_task(*task);
    cfg.validate();
    return dispatch(inv, log, out);
  } catch (const ValidationError& e) {
    log.error(e.what());
    return 1;
  } catch (const RuntimeError& e) {
    log.error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log.error(e.what());
    return 2;
  }
}

}  // namespace omega::cli
