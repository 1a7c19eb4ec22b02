#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "omega/data/csv.hpp"
#include "omega/error.hpp"
#include "omega/eval/evaluate.hpp"
#include "omega/model/config.hpp"
#include "omega/train/config.hpp"

namespace omega::cli {

/// Evaluation protocol constants. Zero window or horizon means "take it
/// from the checkpoint" (n_patches * l_patch and l_pred).
struct EvalSettings {
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::size_t stride = 128;
  eval::Task task = eval::Task::forecast;
  std::string preprocess = "none";  // none | slow
  double target_hz = 1.0;
  std::size_t smooth_width = 5;
};

struct CorpusSettings {
  std::uint64_t seed = 0;
  std::string recipe;  // empty: built-in pretraining mixture
};

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  EvalSettings eval;
  CorpusSettings corpus;
  std::string data_column;  // empty: last column
  std::size_t workers = 1;

  void set(std::string_view key, std::string_view value);
  std::string to_text() const;
  void validate() const;

  data::ColumnSelector column() const {
    if (data_column.empty()) return {};
    std::size_t idx = 0;
    const auto [p, ec] = std::from_chars(data_column.data(), data_column.data() + data_column.size(), idx);
    if (ec == std::errc() && p == data_column.data() + data_column.size()) return idx;
    return data_column;
  }

  /// Applies `key = value` lines; `#` starts a comment.
  void merge_text(std::string_view text, const std::string& origin = "config");
  void merge_file(const std::filesystem::path& path);
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class U>
U parse_number(std::string_view v) {
  U out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("invalid value '" + std::string(v) + "'");
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Get>
Field size_field(Get get) {
  return {[get](RunConfig& c, std::string_view v) { get(c) = parse_number<std::size_t>(v); },
          [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Field u64_field(Get get) {
  return {[get](RunConfig& c, std::string_view v) { get(c) = parse_number<std::uint64_t>(v); },
          [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); }};
}

template <class Get>
Field double_field(Get get) {
  return {[get](RunConfig& c, std::string_view v) { get(c) = parse_number<double>(v); },
          [get](const RunConfig& c) {
            return data::detail::format_double(get(const_cast<RunConfig&>(c)));
          }};
}

template <class Get>
Field string_field(Get get) {
  return {[get](RunConfig& c, std::string_view v) { get(c) = std::string(v); },
          [get](const RunConfig& c) { return get(const_cast<RunConfig&>(c)); }};
}

inline const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> t;
    t["model.l_patch"] = size_field([](RunConfig& c) -> auto& { return c.model.l_patch; });
    t["model.n_patches"] = size_field([](RunConfig& c) -> auto& { return c.model.n_patches; });
    t["model.d_model"] = size_field([](RunConfig& c) -> auto& { return c.model.d_model; });
    t["model.n_layers"] = size_field([](RunConfig& c) -> auto& { return c.model.n_layers; });
    t["model.n_heads"] = size_field([](RunConfig& c) -> auto& { return c.model.n_heads; });
    t["model.d_ff"] = size_field([](RunConfig& c) -> auto& { return c.model.d_ff; });
    t["model.l_pred"] = size_field([](RunConfig& c) -> auto& { return c.model.l_pred; });
    t["model.norm_kind"] = {
        [](RunConfig& c, std::string_view v) { c.model.norm_kind = model::parse_norm_kind(v); },
        [](const RunConfig& c) { return std::string(numerics::to_string(c.model.norm_kind)); }};
    t["model.seed"] = u64_field([](RunConfig& c) -> auto& { return c.model.seed; });
    t["train.batch_size"] = size_field([](RunConfig& c) -> auto& { return c.train.batch_size; });
    t["train.lr"] = double_field([](RunConfig& c) -> auto& { return c.train.lr; });
    t["train.steps"] = size_field([](RunConfig& c) -> auto& { return c.train.steps; });
    t["train.loss_weight_forecast"] =
        double_field([](RunConfig& c) -> auto& { return c.train.loss_weight_forecast; });
    t["train.seed"] = u64_field([](RunConfig& c) -> auto& { return c.train.seed; });
    t["train.eval_every"] = size_field([](RunConfig& c) -> auto& { return c.train.eval_every; });
    t["train.beta1"] = double_field([](RunConfig& c) -> auto& { return c.train.beta1; });
    t["train.beta2"] = double_field([](RunConfig& c) -> auto& { return c.train.beta2; });
    t["train.eps"] = double_field([](RunConfig& c) -> auto& { return c.train.eps; });
    t["train.weight_decay"] = double_field([](RunConfig& c) -> auto& { return c.train.weight_decay; });
    t["eval.window"] = size_field([](RunConfig& c) -> auto& { return c.eval.window; });
    t["eval.horizon"] = size_field([](RunConfig& c) -> auto& { return c.eval.horizon; });
    t["eval.stride"] = size_field([](RunConfig& c) -> auto& { return c.eval.stride; });
    t["eval.task"] = {[](RunConfig& c, std::string_view v) { c.eval.task = eval::parse_task(v); },
                      [](const RunConfig& c) { return std::string(eval::to_string(c.eval.task)); }};
    t["eval.preprocess"] = string_field([](RunConfig& c) -> auto& { return c.eval.preprocess; });
    t["eval.target_hz"] = double_field([](RunConfig& c) -> auto& { return c.eval.target_hz; });
    t["eval.smooth_width"] = size_field([](RunConfig& c) -> auto& { return c.eval.smooth_width; });
    t["corpus.seed"] = u64_field([](RunConfig& c) -> auto& { return c.corpus.seed; });
    t["corpus.recipe"] = string_field([](RunConfig& c) -> auto& { return c.corpus.recipe; });
    t["data.column"] = string_field([](RunConfig& c) -> auto& { return c.data_column; });
    t["runtime.workers"] = size_field([](RunConfig& c) -> auto& { return c.workers; });
    return t;
  }();
  return table;
}

}  // namespace detail

inline void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& table = detail::fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  try {
    it->second.set(*this, detail::trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

inline std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [key, field] : detail::fields()) os << key << " = " << field.get(*this) << '\n';
  return os.str();
}

inline void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (eval.stride == 0) throw ConfigError("eval.stride must be positive");
  if (eval.preprocess != "none" && eval.preprocess != "slow") {
    throw ConfigError("eval.preprocess must be 'none' or 'slow', got '" + eval.preprocess + "'");
  }
  if (eval.preprocess == "slow" && (eval.smooth_width == 0 || eval.smooth_width % 2 == 0)) {
    throw ConfigError("eval.smooth_width must be a positive odd number");
  }
  if (workers == 0) throw ConfigError("runtime.workers must be positive");
}

inline void RunConfig::merge_text(std::string_view text, const std::string& origin) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

}  // namespace omega::cli
