#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "omega/data/series.hpp"
#include "omega/error.hpp"
#include "omega/util/rng.hpp"

namespace omega::synth {

enum class PhenomenonKind {
  sinusoid_mixture,
  sawtooth,
  damped_oscillator,
  elastic_pendulum_proxy,
  exponential_relaxation,
  trended_random_walk,
};

inline constexpr std::string_view to_string(PhenomenonKind kind) {
  switch (kind) {
    case PhenomenonKind::sinusoid_mixture: return "sinusoid_mixture";
    case PhenomenonKind::sawtooth: return "sawtooth";
    case PhenomenonKind::damped_oscillator: return "damped_oscillator";
    case PhenomenonKind::elastic_pendulum_proxy: return "elastic_pendulum_proxy";
    case PhenomenonKind::exponential_relaxation: return "exponential_relaxation";
    case PhenomenonKind::trended_random_walk: return "trended_random_walk";
  }
  return "unknown";
}

inline PhenomenonKind parse_kind(std::string_view name) {
  for (auto k : {PhenomenonKind::sinusoid_mixture, PhenomenonKind::sawtooth,
                 PhenomenonKind::damped_oscillator, PhenomenonKind::elastic_pendulum_proxy,
                 PhenomenonKind::exponential_relaxation, PhenomenonKind::trended_random_walk}) {
    if (to_string(k) == name) return k;
  }
  throw SpecError("kind", "unknown phenomenon kind '" + std::string(name) + "'");
}

/// Kinds reserved for zero-shot evaluation; never part of a pretraining corpus.
inline constexpr bool is_held_out(PhenomenonKind kind) {
  return kind == PhenomenonKind::damped_oscillator ||
         kind == PhenomenonKind::exponential_relaxation;
}

enum class ParamClass {
  free,         // any finite value
  frequency,    // Hz, in [0, rate/2)
  nonnegative,  // damping rates, time constants, noise scales
};

struct ParamSchema {
  std::string_view name;
  double fallback;
  ParamClass cls;
};

/// Parameter table per kind. Every kind also accepts `noise_scale`, the std
/// of i.i.d. Gaussian jitter added to the latent quantity.
inline std::vector<ParamSchema> schema(PhenomenonKind kind) {
  using C = ParamClass;
  std::vector<ParamSchema> s;
  switch (kind) {
    case PhenomenonKind::sinusoid_mixture:
      s = {{"amp1", 1.0, C::free},    {"freq1", 1.0, C::frequency},  {"phase1", 0.0, C::free},
           {"amp2", 0.0, C::free},    {"freq2", 2.0, C::frequency},  {"phase2", 0.0, C::free},
           {"amp3", 0.0, C::free},    {"freq3", 3.0, C::frequency},  {"phase3", 0.0, C::free},
           {"amp4", 0.0, C::free},    {"freq4", 4.0, C::frequency},  {"phase4", 0.0, C::free},
           {"offset", 0.0, C::free}};
      break;
    case PhenomenonKind::sawtooth:
      s = {{"amplitude", 1.0, C::free}, {"freq_hz", 1.0, C::frequency},
           {"phase", 0.0, C::free},     {"offset", 0.0, C::free}};
      break;
    case PhenomenonKind::damped_oscillator:
      s = {{"amplitude", 1.0, C::free}, {"damping", 0.0, C::nonnegative},
           {"freq_hz", 1.0, C::frequency}, {"phase", 0.0, C::free},
           {"offset", 0.0, C::free}};
      break;
    case PhenomenonKind::elastic_pendulum_proxy:
      s = {{"amp1", 1.0, C::free},
           {"freq1", 1.0, C::frequency},
           {"damping1", 0.05, C::nonnegative},
           {"phase1", 0.0, C::free},
           {"amp2", 0.6, C::free},
           {"freq2", 1.0 * std::numbers::phi, C::frequency},
           {"damping2", 0.08, C::nonnegative},
           {"phase2", 0.0, C::free},
           {"perturbation", 0.5, C::nonnegative},
           {"perturbation_decay", 0.2, C::nonnegative},
           {"perturbation_bandwidth", 3.0, C::frequency},
           {"offset", 0.0, C::free}};
      break;
    case PhenomenonKind::exponential_relaxation:
      s = {{"initial", 1.0, C::free}, {"final", 0.0, C::free}, {"tau_s", 1.0, C::nonnegative}};
      break;
    case PhenomenonKind::trended_random_walk:
      s = {{"start", 0.0, C::free}, {"drift", 0.0, C::free}, {"step_std", 1.0, C::nonnegative}};
      break;
  }
  s.push_back({"noise_scale", 0.0, C::nonnegative});
  return s;
}

/// A latent physical quantity q(t) sampled on a uniform grid.
struct PhenomenonSpec {
  PhenomenonKind kind = PhenomenonKind::sinusoid_mixture;
  std::map<std::string, double> params;
  double duration_s = 1.0;
  double rate_hz = 1.0;
  std::uint64_t seed = 0;

  /// Value of a parameter, falling back to its schema default.
  double get(std::string_view name) const {
    if (auto it = params.find(std::string(name)); it != params.end()) return it->second;
    for (const auto& p : schema(kind)) {
      if (p.name == name) return p.fallback;
    }
    throw SpecError(std::string(name), "not a parameter of " + std::string(to_string(kind)));
  }

  std::size_t length() const {
    return static_cast<std::size_t>(std::llround(duration_s * rate_hz));
  }

  void validate() const {
    if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
      throw SpecError("duration_s", "must be positive and finite");
    }
    if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) {
      throw SpecError("rate_hz", "must be positive and finite");
    }
    if (length() == 0) throw SpecError("duration_s", "yields zero samples at this rate");
    const auto table = schema(kind);
    for (const auto& [key, value] : params) {
      const auto it = std::find_if(table.begin(), table.end(),
                                   [&](const ParamSchema& p) { return p.name == key; });
      if (it == table.end()) {
        throw SpecError(key, "not a parameter of " + std::string(to_string(kind)));
      }
    }
    for (const auto& p : table) {
      const double v = get(p.name);
      const std::string field(p.name);
      if (std::isnan(v)) throw SpecError(field, "is NaN");
      if (p.cls == ParamClass::free && !std::isfinite(v)) throw SpecError(field, "must be finite");
      if (p.cls == ParamClass::nonnegative && v < 0.0) {
        throw SpecError(field, "must be non-negative");
      }
      // tau_s may be +inf (no relaxation); every other value must be finite.
      if (p.cls == ParamClass::nonnegative && std::isinf(v) && p.name != "tau_s") {
        throw SpecError(field, "must be finite");
      }
      if (p.cls == ParamClass::frequency && (!(v >= 0.0) || !(v < rate_hz / 2.0))) {
        throw SpecError(field, "frequency " + std::to_string(v) +
                                   " Hz must lie in [0, Nyquist = " +
                                   std::to_string(rate_hz / 2.0) + ")");
      }
    }
  }
};

/// Natural frequency of a spring-mass system in imperial units: spring rate
/// in lbf/in and weight in lbf, with g = 386.09 in/s^2. Returns rad/s.
inline double spring_mass_omega(double spring_rate_lbf_per_in, double weight_lbf) {
  constexpr double kGravityInPerS2 = 386.09;
  return std::sqrt(spring_rate_lbf_per_in * kGravityInPerS2 / weight_lbf);
}

/// Samples q(t_i), t_i = i / rate_hz. Deterministic given the spec.
inline data::TimeSeries generate_quantity(const PhenomenonSpec& spec) {
  spec.validate();
  const std::size_t n = spec.length();
  const double dt = 1.0 / spec.rate_hz;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  util::Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  data::TimeSeries out;
  out.id = std::string(to_string(spec.kind));
  out.sampling_rate_hz = spec.rate_hz;
  out.values.resize(n);
  auto& q = out.values;
  auto p = [&](std::string_view name) { return spec.get(name); };

  switch (spec.kind) {
    case PhenomenonKind::sinusoid_mixture:
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        double v = p("offset");
        for (int c = 1; c <= 4; ++c) {
          const std::string k = std::to_string(c);
          const double a = p("amp" + k);
          if (a != 0.0) v += a * std::sin(kTwoPi * p("freq" + k) * t + p("phase" + k));
        }
        q[i] = v;
      }
      break;
    case PhenomenonKind::sawtooth:
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double cycles = p("freq_hz") * t + p("phase");
        const double frac = cycles - std::floor(cycles);
        q[i] = p("offset") + p("amplitude") * (2.0 * frac - 1.0);
      }
      break;
    case PhenomenonKind::damped_oscillator: {
      const double w = kTwoPi * p("freq_hz");
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        q[i] = p("offset") + p("amplitude") * std::exp(-p("damping") * t) *
                                 std::cos(w * t + p("phase"));
      }
      break;
    }
    case PhenomenonKind::elastic_pendulum_proxy: {
      // Two damped modes at incommensurate frequencies plus a decaying,
      // band-limited perturbation built from random sub-band sinusoids.
      constexpr int kTones = 8;
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::vector<double> tone_freq(kTones), tone_phase(kTones);
      for (int k = 0; k < kTones; ++k) {
        tone_freq[k] = unit(rng) * p("perturbation_bandwidth");
        tone_phase[k] = unit(rng) * kTwoPi;
      }
      const double tone_norm = std::sqrt(2.0 / kTones);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        double v = p("offset");
        v += p("amp1") * std::exp(-p("damping1") * t) * std::cos(kTwoPi * p("freq1") * t + p("phase1"));
        v += p("amp2") * std::exp(-p("damping2") * t) * std::cos(kTwoPi * p("freq2") * t + p("phase2"));
        double band = 0.0;
        for (int k = 0; k < kTones; ++k) band += std::sin(kTwoPi * tone_freq[k] * t + tone_phase[k]);
        v += p("perturbation") * std::exp(-p("perturbation_decay") * t) * tone_norm * band;
        q[i] = v;
      }
      break;
    }
    case PhenomenonKind::exponential_relaxation: {
      const double q0 = p("initial"), qinf = p("final"), tau = p("tau_s");
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        if (tau == 0.0) {
          q[i] = i == 0 ? q0 : qinf;
        } else {
          q[i] = qinf + (q0 - qinf) * std::exp(-t / tau);
        }
      }
      break;
    }
    case PhenomenonKind::trended_random_walk: {
      double level = p("start");
      const double drift = p("drift") * dt;
      const double step = p("step_std");
      for (std::size_t i = 0; i < n; ++i) {
        q[i] = level;
        level += drift + (step > 0.0 ? step * gauss(rng) : 0.0);
      }
      break;
    }
  }
  if (const double jitter = p("noise_scale"); jitter > 0.0) {
    for (auto& v : q) v += jitter * gauss(rng);
  }
  return out;
}

}  // namespace omega::synth
