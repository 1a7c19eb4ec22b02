#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>

#include "omega/synth/corpus.hpp"
#include "omega/synth/phenomenon.hpp"
#include "omega/synth/sensor.hpp"

using namespace omega;
using namespace omega::synth;

namespace {

PhenomenonSpec damped(double gamma, double rate, double duration) {
  PhenomenonSpec s;
  s.kind = PhenomenonKind::damped_oscillator;
  s.params = {{"amplitude", 1.0}, {"damping", gamma}, {"freq_hz", 1.0}, {"phase", 0.0}};
  s.rate_hz = rate;
  s.duration_s = duration;
  return s;
}

data::TimeSeries series_of(std::vector<double> v) {
  data::TimeSeries s;
  s.id = "q";
  s.values = std::move(v);
  return s;
}

}  // namespace

TEST(Generate, PureCosine) {
  const auto q = generate_quantity(damped(0.0, 8.0, 1.0));
  ASSERT_EQ(q.values.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(q.values[i], std::cos(2.0 * std::numbers::pi * i / 8.0), 1e-12);
  }
  EXPECT_NEAR(q.values[1], std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(q.values[4], -1.0, 1e-12);
}

TEST(Generate, RelaxationWithInfiniteTauIsConstant) {
  PhenomenonSpec s;
  s.kind = PhenomenonKind::exponential_relaxation;
  s.params = {{"initial", 1.0}, {"final", 0.0}, {"tau_s", INFINITY}};
  s.rate_hz = 10.0;
  s.duration_s = 5.0;
  for (double v : generate_quantity(s).values) EXPECT_EQ(v, 1.0);
}

TEST(Generate, RelaxationClosedForm) {
  PhenomenonSpec s;
  s.kind = PhenomenonKind::exponential_relaxation;
  s.params = {{"initial", 10.0}, {"final", 2.0}, {"tau_s", 3.0}};
  s.rate_hz = 2.0;
  s.duration_s = 10.0;
  const auto q = generate_quantity(s);
  for (std::size_t i = 0; i < q.values.size(); ++i) {
    EXPECT_NEAR(q.values[i], 2.0 + 8.0 * std::exp(-(i / 2.0) / 3.0), 1e-12);
  }
}

TEST(Generate, SpringMassAnalogue) {
  // Independent scalar computation: w = sqrt(k g / W) in imperial units.
  const double omega = spring_mass_omega(1.9, 10.0);
  EXPECT_NEAR(omega, std::sqrt(1.9 * 386.09 / 10.0), 1e-12);
  EXPECT_NEAR(omega, 8.564875947729774, 1e-9);
  EXPECT_NEAR(omega / (2.0 * std::numbers::pi), 1.3631423440500754, 1e-9);
}

TEST(Generate, LengthRoundsDurationTimesRate) {
  auto s = damped(0.0, 208.0, 19360.0 / 208.0);
  EXPECT_EQ(s.length(), 19360u);
  s.duration_s = 0.26;
  s.rate_hz = 10.0;
  EXPECT_EQ(s.length(), 3u);
}

TEST(Generate, DeterministicGivenSeed) {
  PhenomenonSpec s;
  s.kind = PhenomenonKind::elastic_pendulum_proxy;
  s.rate_hz = 50.0;
  s.duration_s = 10.0;
  s.seed = 42;
  EXPECT_EQ(generate_quantity(s).values, generate_quantity(s).values);
  auto t = s;
  t.seed = 43;
  EXPECT_NE(generate_quantity(s).values, generate_quantity(t).values);
}

TEST(Generate, ValidationNamesTheField) {
  auto s = damped(0.0, 8.0, 1.0);
  s.params["freq_hz"] = 4.0;  // at Nyquist
  try {
    generate_quantity(s);
    FAIL();
  } catch (const SpecError& e) {
    EXPECT_EQ(e.field(), "freq_hz");
  }
  s = damped(-1.0, 8.0, 1.0);
  try {
    generate_quantity(s);
    FAIL();
  } catch (const SpecError& e) {
    EXPECT_EQ(e.field(), "damping");
  }
  s = damped(0.0, 8.0, 1.0);
  s.params["bogus"] = 1.0;
  EXPECT_THROW(generate_quantity(s), SpecError);
  s = damped(0.0, 8.0, -1.0);
  EXPECT_THROW(generate_quantity(s), SpecError);
}

TEST(Generate, DampedEnvelopeIsNonIncreasing) {
  const auto q = generate_quantity(damped(0.3, 100.0, 20.0));
  const std::size_t period = 100;
  double prev = INFINITY;
  for (std::size_t start = 0; start + period <= q.values.size(); start += period) {
    double peak = 0;
    for (std::size_t i = start; i < start + period; ++i) peak = std::max(peak, std::abs(q.values[i]));
    EXPECT_LE(peak, prev);
    prev = peak;
  }
}

TEST(Measure, IdentityIsBitwise) {
  PhenomenonSpec s;
  s.kind = PhenomenonKind::trended_random_walk;
  s.rate_hz = 1.0;
  s.duration_s = 500.0;
  s.seed = 3;
  const auto q = generate_quantity(s);
  EXPECT_EQ(measure(q, SensorModel{}, 99).values, q.values);
}

TEST(Measure, GainAndOffset) {
  SensorModel m;
  m.gain = 2.0;
  m.offset = 1.0;
  EXPECT_EQ(measure(series_of({0, 1, 2}), m, 0).values, (std::vector<double>{1, 3, 5}));
}

TEST(Measure, NoiseMoments) {
  SensorModel m;
  m.noise_std = 0.1;
  m.offset = 0.25;
  const auto out = measure(series_of(std::vector<double>(10000, 0.0)), m, 7).values;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / out.size();
  double var = 0;
  for (double v : out) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (out.size() - 1));
  EXPECT_NEAR(mean, 0.25, 0.01);
  EXPECT_NEAR(sd, 0.1, 0.01);
}

TEST(Measure, QuantizationLevels) {
  SensorModel m;
  m.quantization_bits = 4;
  m.clip_range = std::make_pair(0.0, 15.0);
  const auto out = measure(series_of({-3.0, 0.4, 7.6, 14.9, 20.0}), m, 0).values;
  EXPECT_EQ(out, (std::vector<double>{0, 0, 8, 15, 15}));
  SensorModel bad;
  bad.quantization_bits = 8;
  EXPECT_THROW(measure(series_of({1.0}), bad, 0), ConfigError);
  bad.clip_range = std::make_pair(0.0, 1.0);
  bad.quantization_bits = 30;
  EXPECT_THROW(measure(series_of({1.0}), bad, 0), ConfigError);
}

TEST(Corpus, CountAndDeterminism) {
  const Recipe r = parse_recipe("sawtooth count=3 rate_hz=10 duration_s=10 freq_hz=0.1:1\n");
  const Corpus a = build_corpus(r, 5);
  const Corpus b = build_corpus(r, 5);
  ASSERT_EQ(a.series.size(), 3u);
  ASSERT_EQ(a.manifest.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.series[i].values, b.series[i].values);
    EXPECT_EQ(format_manifest_line(a.manifest[i]), format_manifest_line(b.manifest[i]));
  }
  EXPECT_NE(a.manifest[0].spec.get("freq_hz"), a.manifest[1].spec.get("freq_hz"));
  EXPECT_THROW(build_corpus(Recipe{}, 0), ConfigError);
}

TEST(Corpus, ManifestRoundTripReproducesSeries) {
  const Corpus c = build_corpus(default_pretraining_recipe(), 11);
  for (std::size_t i = 0; i < c.manifest.size(); i += 17) {
    const ManifestRecord back = parse_manifest_line(format_manifest_line(c.manifest[i]));
    EXPECT_EQ(format_manifest_line(back), format_manifest_line(c.manifest[i]));
    EXPECT_EQ(realize(back).values, c.series[i].values);
  }
}

TEST(Corpus, DefaultRecipeExcludesHeldOutKinds) {
  const Recipe r = default_pretraining_recipe();
  EXPECT_NO_THROW(require_pretraining_safe(r));
  const Corpus pre = build_corpus(r, 1);
  for (const auto& m : pre.manifest) EXPECT_FALSE(is_held_out(m.spec.kind));
  const Corpus held = held_out_set(1);
  EXPECT_TRUE(kinds_disjoint(pre.manifest, held.manifest));
  EXPECT_THROW(require_pretraining_safe(parse_recipe("damped_oscillator count=1\n")), ConfigError);
}

TEST(Corpus, HeldOutSetGeometry) {
  const Corpus held = held_out_set(0);
  ASSERT_EQ(held.series.size(), 2u);
  EXPECT_EQ(held.series[0].values.size(), 19360u);
  EXPECT_EQ(held.series[1].values.size(), 24000u);
  EXPECT_EQ(held.series[1].sampling_rate_hz, 10.0);
}

TEST(Corpus, DirectoryRoundTrip) {
  const Recipe r = parse_recipe("sinusoid_mixture count=2 rate_hz=20 duration_s=5 amp1=0.5:1\n");
  const Corpus c = build_corpus(r, 3);
  const auto dir = std::filesystem::temp_directory_path() / "omega_corpus_rt";
  std::filesystem::remove_all(dir);
  write_corpus(dir, c);
  const Corpus back = read_corpus(dir);
  ASSERT_EQ(back.series.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(back.series[i].values, c.series[i].values);
}
