#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "omega/error.hpp"
#include "omega/numerics/ops.hpp"

namespace omega::model {

using numerics::NormKind;

inline NormKind parse_norm_kind(std::string_view s) {
  if (s == "batch") return NormKind::batch;
  if (s == "layer") return NormKind::layer;
  throw ConfigError("norm_kind must be 'batch' or 'layer', got '" + std::string(s) + "'");
}

/// Architecture hyperparameters. Context length W = n_patches * l_patch.
struct ModelConfig {
  std::size_t l_patch = 64;
  std::size_t n_patches = 16;
  std::size_t d_model = 128;
  std::size_t n_layers = 6;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t l_pred = 128;
  NormKind norm_kind = NormKind::batch;
  std::uint64_t seed = 0;

  std::size_t context_length() const noexcept { return n_patches * l_patch; }
  std::size_t sequence_length() const noexcept { return n_patches + 1; }
  std::size_t reconstruct_out() const noexcept { return context_length(); }
  std::size_t reconstruct_hidden() const noexcept { return context_length() / 2; }
  std::size_t forecast_hidden() const noexcept { return d_model; }
  std::size_t forecast_out() const noexcept { return l_pred; }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
    };
    positive(l_patch, "l_patch");
    positive(n_patches, "n_patches");
    positive(d_model, "d_model");
    positive(n_layers, "n_layers");
    positive(n_heads, "n_heads");
    positive(d_ff, "d_ff");
    positive(l_pred, "l_pred");
    if (d_model % n_heads != 0) {
      throw ConfigError("model.d_model (" + std::to_string(d_model) +
                        ") must be divisible by model.n_heads (" + std::to_string(n_heads) + ")");
    }
    if (context_length() % 2 != 0) {
      throw ConfigError("context length n_patches*l_patch must be even for the reconstruction "
                        "decoder's hidden width");
    }
  }

  /// Architecture fields that must agree for two parameter sets to be
  /// interchangeable (the seed is excluded).
  bool same_geometry(const ModelConfig& o) const noexcept {
    return l_patch == o.l_patch && n_patches == o.n_patches && d_model == o.d_model &&
           n_layers == o.n_layers && n_heads == o.n_heads && d_ff == o.d_ff &&
           l_pred == o.l_pred && norm_kind == o.norm_kind;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  std::string to_text() const {
    std::ostringstream os;
    os << "l_patch=" << l_patch << '\n'
       << "n_patches=" << n_patches << '\n'
       << "d_model=" << d_model << '\n'
       << "n_layers=" << n_layers << '\n'
       << "n_heads=" << n_heads << '\n'
       << "d_ff=" << d_ff << '\n'
       << "l_pred=" << l_pred << '\n'
       << "norm_kind=" << numerics::to_string(norm_kind) << '\n'
       << "seed=" << seed << '\n';
    return os.str();
  }

  /// Parses the `key=value` block written by to_text; every field required.
  static ModelConfig from_text(std::string_view text) {
    std::map<std::string, std::string> kv;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("malformed config line '" + line + "'");
      if (!kv.emplace(line.substr(0, eq), line.substr(eq + 1)).second) {
        throw ConfigError("duplicate config key '" + line.substr(0, eq) + "'");
      }
    }
    auto take = [&](const char* key) {
      const auto it = kv.find(key);
      if (it == kv.end()) throw ConfigError(std::string("config is missing '") + key + "'");
      std::string v = it->second;
      kv.erase(it);
      return v;
    };
    auto num = [&](const char* key) {
      const std::string v = take(key);
      std::uint64_t out = 0;
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(std::string("config value for '") + key + "' is not an integer");
      }
      return out;
    };
    ModelConfig c;
    c.l_patch = num("l_patch");
    c.n_patches = num("n_patches");
    c.d_model = num("d_model");
    c.n_layers = num("n_layers");
    c.n_heads = num("n_heads");
    c.d_ff = num("d_ff");
    c.l_pred = num("l_pred");
    c.norm_kind = parse_norm_kind(take("norm_kind"));
    c.seed = num("seed");
    if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
    return c;
  }
};

/// Closed-form count of learnable scalars (running statistics excluded).
inline std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t layer = 4 * (d * d + d) + 2 * d + (d * c.d_ff + c.d_ff) +
                            (c.d_ff * d + d) + 2 * d;
  const std::size_t encoder = (c.l_patch * d + d) + (c.n_patches + 1) * d + d + c.n_layers * layer;
  auto decoder = [d](std::size_t hidden, std::size_t out) {
    return 2 * d + (d * hidden + hidden) + (hidden * out + out);
  };
  return encoder + decoder(c.reconstruct_hidden(), c.reconstruct_out()) +
         decoder(c.forecast_hidden(), c.forecast_out());
}

}  // namespace omega::model
