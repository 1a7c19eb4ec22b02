#include <gtest/gtest.h>

#include <random>
#include <set>

#include "omega/model/config.hpp"
#include "omega/model/forward.hpp"
#include "omega/model/params.hpp"
#include "omega/model/grad_check.hpp"

using namespace omega;
using namespace omega::model;
using numerics::Tensor;

namespace {

ModelConfig tiny(NormKind kind = NormKind::layer) {
  ModelConfig c;
  c.l_patch = 4;
  c.n_patches = 3;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.l_pred = 5;
  c.norm_kind = kind;
  c.seed = 17;
  return c;
}

template <class T>
BasicTensor<T> random_patches(const ModelConfig& c, std::size_t batch, std::uint64_t seed) {
  BasicTensor<T> x({batch * c.n_patches, c.l_patch});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : x.data()) v = static_cast<T>(u(rng));
  return x;
}

data::PatchSequence patch_sequence(const Tensor& x, std::size_t l_patch) {
  return data::PatchSequence(std::vector<double>(x.data().begin(), x.data().end()), l_patch);
}

}  // namespace

TEST(Config, Validation) {
  ModelConfig c;
  c.n_heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(init_params<float>(c), ValidationError);
  c = ModelConfig{};
  c.d_ff = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(ModelConfig{}.validate());
}

TEST(Config, TextRoundTrip) {
  ModelConfig c = tiny(NormKind::batch);
  c.seed = 123456789012345ULL;
  EXPECT_EQ(ModelConfig::from_text(c.to_text()), c);
  EXPECT_THROW(ModelConfig::from_text("l_patch=4\n"), ConfigError);
  EXPECT_THROW(ModelConfig::from_text(c.to_text() + "extra=1\n"), ConfigError);
}

TEST(Params, InitIsDeterministic) {
  const auto a = init_params<float>(ModelConfig{});
  const auto b = init_params<float>(ModelConfig{});
  std::vector<const Tensor*> ta, tb;
  visit_model(a, [&](const std::string&, const Tensor& t, TensorRole) { ta.push_back(&t); });
  visit_model(b, [&](const std::string&, const Tensor& t, TensorRole) { tb.push_back(&t); });
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_TRUE(*ta[i] == *tb[i]);
}

TEST(Params, InitDistribution) {
  const auto p = init_params<float>(ModelConfig{});
  double s = 0, s2 = 0;
  std::size_t n = 0;
  for (float v : p.encoder.layers[0].wq.data()) {
    s += v;
    s2 += double(v) * v;
    ++n;
  }
  EXPECT_NEAR(s / n, 0.0, 2e-3);
  EXPECT_NEAR(std::sqrt(s2 / n), 0.02, 1e-3);
  for (float v : p.encoder.layers[0].bq.data()) EXPECT_EQ(v, 0.0f);
  for (float v : p.encoder.layers[0].attn_norm.gain.data()) EXPECT_EQ(v, 1.0f);
}

TEST(Params, ReconstructionDecoderDims) {
  const auto p = init_params<float>(ModelConfig{});
  EXPECT_EQ(p.reconstruct.w2.shape(), (numerics::Shape{512, 1024}));
  EXPECT_EQ(p.reconstruct.w1.shape(), (numerics::Shape{128, 512}));
  EXPECT_EQ(p.forecast.w1.shape(), (numerics::Shape{128, 128}));
  EXPECT_EQ(p.forecast.w2.shape(), (numerics::Shape{128, 128}));
}

TEST(Params, NamesAreUniqueAndCountMatchesClosedForm) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig c;
    std::uniform_int_distribution<std::size_t> d(1, 6);
    c.n_heads = d(rng);
    c.d_model = c.n_heads * d(rng);
    c.l_patch = 2 * d(rng);
    c.n_patches = d(rng);
    c.n_layers = d(rng);
    c.d_ff = d(rng) * 3;
    c.l_pred = d(rng);
    c.norm_kind = trial % 2 ? NormKind::batch : NormKind::layer;
    auto p = make_params<float>(c);
    std::set<std::string> names;
    std::size_t learnable = 0;
    visit_model(p, [&](const std::string& name, Tensor& t, TensorRole role) {
      EXPECT_TRUE(names.insert(name).second) << name;
      if (role != TensorRole::running_stat) learnable += t.numel();
    });
    EXPECT_EQ(learnable, parameter_count(c));
  }
}

TEST(Encode, ShapesAndSeqRow) {
  const ModelConfig c = ModelConfig{};
  const auto p = init_params<float>(c);
  const Tensor x = random_patches<float>(c, 1, 3);
  const auto e = encode(p, patch_sequence(x, c.l_patch));
  EXPECT_EQ(e.tokens.shape(), (numerics::Shape{17, 128}));
  for (std::size_t j = 0; j < 128; ++j) EXPECT_EQ(e.summary[j], e.tokens.at(16, j));
}

TEST(Encode, SingleSampleBatchNormTrainIsDegenerate) {
  const ModelConfig c = tiny(NormKind::batch);
  auto p = init_params<float>(c);
  const Tensor x = random_patches<float>(c, 1, 3);
  EXPECT_THROW(encode(p, patch_sequence(x, c.l_patch), Mode::train), DegenerateBatchError);
  numerics::Tape tape;
  EXPECT_THROW(encode(tape, p.encoder, c, tape.constant_ref(x), 1, Mode::train, true),
               DegenerateBatchError);
  EXPECT_NO_THROW(encode(p, patch_sequence(x, c.l_patch), Mode::infer));
}

TEST(Encode, ShapeMismatch) {
  const ModelConfig c = tiny();
  const auto p = init_params<float>(c);
  EXPECT_THROW(encode(p, data::PatchSequence(std::vector<double>(10, 0.0), 5)), ShapeError);
}

TEST(Encode, CausalPrefixIsBitwiseStable) {
  const ModelConfig c = tiny();
  const auto p = init_params<float>(c);
  Tensor x = random_patches<float>(c, 1, 8);
  const auto before = encode(p, patch_sequence(x, c.l_patch));
  for (std::size_t i = 0; i < c.l_patch; ++i) x.at(2, i) += 0.25f;
  const auto after = encode(p, patch_sequence(x, c.l_patch));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < c.d_model; ++j) EXPECT_EQ(before.tokens.at(r, j), after.tokens.at(r, j));
  EXPECT_NE(before.summary, after.summary);
}

TEST(Encode, DistinctInputsGiveDistinctSummaries) {
  const ModelConfig c = tiny();
  const auto p = init_params<float>(c);
  for (int i = 0; i < 100; ++i) {
    const auto a = encode(p, patch_sequence(random_patches<float>(c, 1, 2 * i), c.l_patch));
    const auto b = encode(p, patch_sequence(random_patches<float>(c, 1, 2 * i + 1), c.l_patch));
    EXPECT_NE(a.summary, b.summary);
  }
}

TEST(Encode, BatchItemsAreIndependentWithLayerNorm) {
  const ModelConfig c = tiny();
  const auto p = init_params<float>(c);
  const Tensor x = random_patches<float>(c, 3, 5);
  const Tensor batched = predict(p, x, 3, Head::forecast);
  Tensor row({c.n_patches, c.l_patch});
  for (std::size_t i = 0; i < row.numel(); ++i) row[i] = x[c.n_patches * c.l_patch + i];
  const Tensor single = predict(p, row, 1, Head::forecast);
  for (std::size_t j = 0; j < c.l_pred; ++j) EXPECT_EQ(single[j], batched.at(1, j));
}

TEST(Decode, RoleMismatchAndZeroWeights) {
  const ModelConfig c = tiny();
  auto p = init_params<float>(c);
  numerics::Tape tape(false);
  const auto z = tape.constant(Tensor({2, c.d_model}, 0.3f));
  EXPECT_THROW(decode_forecast(tape, p.reconstruct, z, false), ContractError);
  EXPECT_THROW(decode_reconstruct(tape, p.forecast, z, false), ContractError);
  p.forecast.w2 = Tensor(p.forecast.w2.shape(), 0.0f);
  const auto& out = tape.value(decode_forecast(tape, p.forecast, z, false));
  EXPECT_EQ(out.shape(), (numerics::Shape{2, c.l_pred}));
  for (float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Decode, ScalarHorizon) {
  ModelConfig c = tiny();
  c.l_pred = 1;
  const auto p = init_params<float>(c);
  const Tensor out = predict(p, random_patches<float>(c, 2, 1), 2, Head::forecast);
  EXPECT_EQ(out.shape(), (numerics::Shape{2, 1}));
}

TEST(Forward, EveryParameterGetsFiniteGradient) {
  for (NormKind kind : {NormKind::layer, NormKind::batch}) {
    ModelConfig c = tiny(kind);
    auto p = init_params<float>(c);
    const Tensor x = random_patches<float>(c, 4, 2);
    numerics::Tape tape;
    const auto e = encode(tape, p.encoder, c, tape.constant_ref(x), 4, Mode::train, true);
    const auto f = decode_forecast(tape, p.forecast, e.summary, true);
    const auto r = decode_reconstruct(tape, p.reconstruct, e.summary, true);
    const Tensor tf({4, c.l_pred}, 0.7f);
    Tensor tr = x;
    tr.reshape({4, c.context_length()});
    const auto loss = numerics::weighted_sum(tape, numerics::mse(tape, f, tape.constant(tf)), 0.6,
                                             numerics::mse(tape, r, tape.constant_ref(tr)), 0.4);
    tape.backward(loss);
    visit_model(p, [&](const std::string& name, Tensor& t, TensorRole role) {
      if (role == TensorRole::running_stat) return;
      ASSERT_TRUE(t.has_grad()) << name;
      double mag = 0;
      for (float g : t.grad()) {
        ASSERT_TRUE(std::isfinite(g)) << name;
        mag += std::abs(g);
      }
      EXPECT_GT(mag, 0.0) << name;
    });
  }
}

TEST(Forward, BlockGradientsMatchFiniteDifferences) {
  const auto checks = check_model_gradients(1e-3);
  EXPECT_EQ(checks.size(), 10u);
  for (const auto& c : checks) {
    EXPECT_TRUE(c.report.passed) << c.block << " " << c.report.max_rel_error << " tensor "
                                 << c.report.worst_tensor << " idx " << c.report.worst_index;
    EXPECT_GT(c.report.coordinates, 0u);
  }
}

TEST(Forward, InferenceIsDeterministicAndConst) {
  const ModelConfig c = tiny(NormKind::batch);
  const auto p = init_params<float>(c);
  const Tensor x = random_patches<float>(c, 2, 4);
  const Tensor a = predict(p, x, 2, Head::reconstruct);
  const Tensor b = predict(p, x, 2, Head::reconstruct);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.shape(), (numerics::Shape{2, c.context_length()}));
}
