#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "omega/data/csv.hpp"
#include "omega/data/series.hpp"
#include "omega/error.hpp"
#include "omega/synth/phenomenon.hpp"
#include "omega/synth/sensor.hpp"
#include "omega/util/rng.hpp"

namespace omega::synth {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// One recipe line: `count` variants of `base`, each parameter listed in
/// `jitter` drawn uniformly from its range. Jitter keys are phenomenon
/// parameters, `duration_s`, or `sensor.gain|offset|noise_std`.
struct RecipeEntry {
  PhenomenonSpec base;
  SensorModel sensor;
  std::size_t count = 1;
  std::map<std::string, Range> jitter;
};

using Recipe = std::vector<RecipeEntry>;

/// Fully resolved description of one generated series.
struct ManifestRecord {
  std::string id;
  PhenomenonSpec spec;
  SensorModel sensor;
  std::uint64_t sensor_seed = 0;
};

struct Corpus {
  std::vector<data::TimeSeries> series;
  std::vector<ManifestRecord> manifest;
};

inline data::TimeSeries realize(const ManifestRecord& record) {
  data::TimeSeries s = measure(generate_quantity(record.spec), record.sensor, record.sensor_seed);
  s.id = record.id;
  return s;
}

namespace detail {

inline double parse_number(std::string_view text, std::string_view field) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw SpecError(std::string(field), "cannot parse '" + std::string(text) + "' as a number");
  }
  return v;
}

inline std::uint64_t parse_unsigned(std::string_view text, std::string_view field) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw SpecError(std::string(field), "cannot parse '" + std::string(text) + "' as an integer");
  }
  return v;
}

inline std::vector<std::pair<std::string, std::string>> split_pairs(std::string_view line,
                                                                    std::string& head) {
  std::istringstream in{std::string(line)};
  std::string token;
  std::vector<std::pair<std::string, std::string>> out;
  in >> head;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw SpecError(token, "expected key=value");
    out.emplace_back(token.substr(0, eq), token.substr(eq + 1));
  }
  return out;
}

inline std::string_view strip_comment(std::string_view line) {
  if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
  while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
  return line;
}

}  // namespace detail

inline std::string format_manifest_line(const ManifestRecord& r) {
  using data::detail::format_double;
  std::ostringstream os;
  os << to_string(r.spec.kind) << " id=" << r.id
     << " duration_s=" << format_double(r.spec.duration_s)
     << " rate_hz=" << format_double(r.spec.rate_hz);
  for (const auto& p : schema(r.spec.kind)) {
    os << ' ' << p.name << '=' << format_double(r.spec.get(p.name));
  }
  os << " sensor.gain=" << format_double(r.sensor.gain)
     << " sensor.offset=" << format_double(r.sensor.offset)
     << " sensor.noise_std=" << format_double(r.sensor.noise_std);
  if (r.sensor.quantization_bits) os << " sensor.bits=" << *r.sensor.quantization_bits;
  if (r.sensor.clip_range) {
    os << " sensor.clip_lo=" << format_double(r.sensor.clip_range->first)
       << " sensor.clip_hi=" << format_double(r.sensor.clip_range->second);
  }
  os << " sensor_seed=" << r.sensor_seed << " seed=" << r.spec.seed;
  return os.str();
}

inline ManifestRecord parse_manifest_line(std::string_view line) {
  std::string head;
  const auto pairs = detail::split_pairs(line, head);
  ManifestRecord r;
  r.spec.kind = parse_kind(head);
  std::optional<double> clip_lo, clip_hi;
  bool have_seed = false;
  for (const auto& [key, value] : pairs) {
    if (key == "id") {
      r.id = value;
    } else if (key == "duration_s") {
      r.spec.duration_s = detail::parse_number(value, key);
    } else if (key == "rate_hz") {
      r.spec.rate_hz = detail::parse_number(value, key);
    } else if (key == "seed") {
      r.spec.seed = detail::parse_unsigned(value, key);
      have_seed = true;
    } else if (key == "sensor_seed") {
      r.sensor_seed = detail::parse_unsigned(value, key);
    } else if (key == "sensor.gain") {
      r.sensor.gain = detail::parse_number(value, key);
    } else if (key == "sensor.offset") {
      r.sensor.offset = detail::parse_number(value, key);
    } else if (key == "sensor.noise_std") {
      r.sensor.noise_std = detail::parse_number(value, key);
    } else if (key == "sensor.bits") {
      r.sensor.quantization_bits = static_cast<int>(detail::parse_unsigned(value, key));
    } else if (key == "sensor.clip_lo") {
      clip_lo = detail::parse_number(value, key);
    } else if (key == "sensor.clip_hi") {
      clip_hi = detail::parse_number(value, key);
    } else {
      r.spec.params[key] = detail::parse_number(value, key);
    }
  }
  if (!have_seed) throw SpecError("seed", "manifest record has no seed");
  if (clip_lo.has_value() != clip_hi.has_value()) {
    throw SpecError("sensor.clip_lo", "clip bounds must be given together");
  }
  if (clip_lo) r.sensor.clip_range = std::make_pair(*clip_lo, *clip_hi);
  r.spec.validate();
  r.sensor.validate();
  return r;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestRecord>& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : manifest) out << format_manifest_line(r) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto body = detail::strip_comment(line);
    if (!body.empty()) out.push_back(parse_manifest_line(body));
  }
  return out;
}

/// Recipe text: one entry per line,
/// `kind count=N duration_s=V rate_hz=V key=V|LO:HI sensor.gain=V|LO:HI
///  sensor.offset=.. sensor.noise_std=.. sensor.bits=B sensor.clip=LO:HI`.
inline Recipe parse_recipe(std::string_view text) {
  Recipe recipe;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto body = detail::strip_comment(line);
    if (body.empty()) continue;
    std::string head;
    const auto pairs = detail::split_pairs(body, head);
    RecipeEntry entry;
    entry.base.kind = parse_kind(head);
    for (const auto& [key, value] : pairs) {
      if (key == "count") {
        entry.count = detail::parse_unsigned(value, key);
        continue;
      }
      if (key == "sensor.bits") {
        entry.sensor.quantization_bits = static_cast<int>(detail::parse_unsigned(value, key));
        continue;
      }
      // Ranges are written LO:HI; a colon after the first character separates.
      const auto colon = value.find(':', 1);
      if (key == "sensor.clip") {
        if (colon == std::string::npos) throw SpecError(key, "expected LO:HI");
        entry.sensor.clip_range = std::make_pair(detail::parse_number(value.substr(0, colon), key),
                                                 detail::parse_number(value.substr(colon + 1), key));
        continue;
      }
      double fixed = 0.0;
      if (colon != std::string::npos) {
        Range r{detail::parse_number(value.substr(0, colon), key),
                detail::parse_number(value.substr(colon + 1), key)};
        if (r.hi < r.lo) throw SpecError(key, "range upper bound below lower bound");
        entry.jitter[key] = r;
        fixed = r.lo;
      } else {
        fixed = detail::parse_number(value, key);
      }
      if (key == "duration_s") {
        entry.base.duration_s = fixed;
      } else if (key == "rate_hz") {
        if (colon != std::string::npos) throw SpecError(key, "rate cannot be jittered");
        entry.base.rate_hz = fixed;
      } else if (key == "sensor.gain") {
        entry.sensor.gain = fixed;
      } else if (key == "sensor.offset") {
        entry.sensor.offset = fixed;
      } else if (key == "sensor.noise_std") {
        entry.sensor.noise_std = fixed;
      } else {
        entry.base.params[key] = fixed;
      }
    }
    recipe.push_back(std::move(entry));
  }
  return recipe;
}

/// Seeded corpus generation. Every variant's seeds derive from the master
/// seed and its (entry, variant) position, so entries are independent.
inline Corpus build_corpus(const Recipe& recipe, std::uint64_t seed) {
  if (recipe.empty()) throw ConfigError("corpus recipe is empty");
  Corpus corpus;
  for (std::size_t e = 0; e < recipe.size(); ++e) {
    const RecipeEntry& entry = recipe[e];
    if (entry.count == 0) throw ConfigError("recipe entry " + std::to_string(e) + " has count 0");
    entry.base.validate();
    entry.sensor.validate();
    for (std::size_t v = 0; v < entry.count; ++v) {
      const std::uint64_t variant_seed = util::mix_seed(seed, e, v);
      util::Rng rng(util::mix_seed(variant_seed, 0x6a177e5ULL));
      ManifestRecord record;
      record.id = std::string(to_string(entry.base.kind)) + "_e" + std::to_string(e) + "_v" +
                  std::to_string(v);
      record.spec = entry.base;
      record.sensor = entry.sensor;
      for (const auto& [key, range] : entry.jitter) {
        const double x = std::uniform_real_distribution<double>(range.lo, range.hi)(rng);
        if (key == "duration_s") {
          record.spec.duration_s = x;
        } else if (key == "sensor.gain") {
          record.sensor.gain = x;
        } else if (key == "sensor.offset") {
          record.sensor.offset = x;
        } else if (key == "sensor.noise_std") {
          record.sensor.noise_std = x;
        } else {
          record.spec.params[key] = x;
        }
      }
      // Resolve every schema parameter so the manifest is self-contained.
      for (const auto& p : schema(record.spec.kind)) {
        record.spec.params.emplace(std::string(p.name), p.fallback);
      }
      record.spec.seed = variant_seed;
      record.sensor_seed = util::mix_seed(variant_seed, 0x5e4507ULL);
      record.spec.validate();
      corpus.series.push_back(realize(record));
      corpus.manifest.push_back(std::move(record));
    }
  }
  return corpus;
}

/// Pretraining mixture. Held-out kinds never appear here.
inline constexpr std::string_view kDefaultPretrainingRecipe = R"(# kind count=N fixed=value jittered=lo:hi
sinusoid_mixture count=24 rate_hz=100 duration_s=40.96 amp1=0.5:1.5 freq1=0.1:3 phase1=0:6.2832 amp2=0:0.6 freq2=0.05:6 phase2=0:6.2832 amp3=0:0.3 freq3=0.5:12 phase3=0:6.2832 offset=-2:2 sensor.gain=0.5:2 sensor.noise_std=0:0.05
sinusoid_mixture count=16 rate_hz=100 duration_s=40.96 amp1=0.5:1.5 freq1=0.005:0.1 phase1=0:6.2832 amp2=0:0.3 freq2=0.2:2 phase2=0:6.2832 sensor.noise_std=0:0.02
sawtooth count=16 rate_hz=50 duration_s=81.92 amplitude=0.5:2 freq_hz=0.03:1 phase=0:1 sensor.noise_std=0:0.05
elastic_pendulum_proxy count=24 rate_hz=200 duration_s=20.48 amp1=0.5:1.5 freq1=0.5:3 damping1=0.01:0.15 phase1=0:6.2832 amp2=0.2:0.8 freq2=0.8:5 damping2=0.02:0.2 phase2=0:6.2832 perturbation=0:0.6 perturbation_decay=0.05:0.5 perturbation_bandwidth=1:8 sensor.noise_std=0:0.03 sensor.bits=12 sensor.clip=-4:4
trended_random_walk count=24 rate_hz=1 duration_s=4096 start=-1:1 drift=-0.01:0.01 step_std=0.001:0.05 sensor.noise_std=0:0.02
trended_random_walk count=12 rate_hz=1 duration_s=4096 drift=-0.005:0.005 step_std=0:0.002 sensor.noise_std=0:0.01
)";

inline Recipe default_pretraining_recipe() { return parse_recipe(kDefaultPretrainingRecipe); }

/// Throws if any entry uses a held-out kind.
inline void require_pretraining_safe(const Recipe& recipe) {
  for (const auto& e : recipe) {
    if (is_held_out(e.base.kind)) {
      throw ConfigError("pretraining recipe contains held-out kind " +
                        std::string(to_string(e.base.kind)));
    }
  }
}

/// True when no phenomenon kind appears in both manifests.
inline bool kinds_disjoint(const std::vector<ManifestRecord>& a,
                           const std::vector<ManifestRecord>& b) {
  for (const auto& x : a) {
    for (const auto& y : b) {
      if (x.spec.kind == y.spec.kind) return false;
    }
  }
  return true;
}

/// Held-out phenomena modelled on two bench experiments: a spring-mass
/// oscillator read by a 16-bit accelerometer (z axis, in g) and a
/// thermoelectric current relaxation read by a 12-bit current monitor (uA).
inline Corpus held_out_set(std::uint64_t seed) {
  Recipe recipe(2);
  {
    // 1.9 lbf/in spring, 10 lb mass, released from 2 in.
    const double omega = spring_mass_omega(1.9, 10.0);
    const double accel_amplitude_g = omega * omega * 2.0 * 0.0254 / 9.80665;
    RecipeEntry& e = recipe[0];
    e.base.kind = PhenomenonKind::damped_oscillator;
    e.base.rate_hz = 208.0;
    e.base.duration_s = 19360.0 / 208.0;
    e.base.params = {{"amplitude", accel_amplitude_g},
                     {"damping", 0.02},
                     {"freq_hz", omega / (2.0 * std::numbers::pi)},
                     {"phase", 0.0},
                     {"offset", 1.0}};
    e.sensor.noise_std = 0.004;
    e.sensor.quantization_bits = 16;
    e.sensor.clip_range = std::make_pair(-2.0, 2.0);
  }
  {
    RecipeEntry& e = recipe[1];
    e.base.kind = PhenomenonKind::exponential_relaxation;
    e.base.rate_hz = 10.0;
    e.base.duration_s = 2400.0;
    e.base.params = {{"initial", 120.0}, {"final", 5.0}, {"tau_s", 900.0}};
    e.sensor.noise_std = 0.5;
    e.sensor.quantization_bits = 12;
    e.sensor.clip_range = std::make_pair(0.0, 400.0);
  }
  return build_corpus(recipe, seed);
}

/// Writes `<id>.csv` per series plus `manifest.txt` into `dir`.
inline void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  for (const auto& s : corpus.series) data::write_series_csv(dir / (s.id + ".csv"), s);
  write_manifest(dir / "manifest.txt", corpus.manifest);
}

/// Loads a corpus directory written by write_corpus.
inline Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  corpus.manifest = read_manifest(dir / "manifest.txt");
  for (const auto& r : corpus.manifest) {
    data::TimeSeries s = data::load_csv(dir / (r.id + ".csv"));
    s.id = r.id;
    s.sampling_rate_hz = r.spec.rate_hz;
    corpus.series.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace omega::synth
