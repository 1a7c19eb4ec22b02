#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "omega/synth/corpus.hpp"
#include "omega/train/checkpoint.hpp"
#include "omega/train/loop.hpp"

using namespace omega;
using namespace omega::train;
using numerics::NormKind;
using numerics::Tensor;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(NormKind kind = NormKind::batch) {
  ModelConfig c;
  c.l_patch = 8;
  c.n_patches = 4;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 32;
  c.l_pred = 8;
  c.norm_kind = kind;
  c.seed = 3;
  return c;
}

TrainConfig small_train(std::size_t steps = 20) {
  TrainConfig t;
  t.batch_size = 8;
  t.steps = steps;
  t.seed = 5;
  t.eval_every = 5;
  return t;
}

const std::vector<data::TimeSeries>& pool() {
  static const auto corpus = synth::build_corpus(
      synth::parse_recipe("sinusoid_mixture count=4 rate_hz=20 duration_s=20 amp1=0.5:1.5 "
                          "freq1=0.2:2 phase1=0:6.28\n"),
      1);
  return corpus.series;
}

std::vector<data::SeriesView> views() { return data::views_of(pool()); }

std::vector<char> bytes_of(const model::ModelParams<float>& p) { return serialize_checkpoint(p, 0); }

template <class Part>
std::vector<Tensor> copy_part(Part& part) {
  std::vector<Tensor> out;
  auto fn = [&](const std::string&, const Tensor& t, model::TensorRole) { out.push_back(t); };
  if constexpr (requires { part.role; }) {
    model::visit_decoder(part, fn);
  } else {
    model::visit_encoder(part, fn);
  }
  return out;
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "omega_train_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Train, TotalIsWeightedSumOfParts) {
  const auto v = views();
  const auto r = pretrain(v, small_config(), small_train());
  ASSERT_EQ(r.report.curve.size(), 20u);
  for (const auto& rec : r.report.curve) {
    EXPECT_NEAR(rec.total, 0.6 * rec.forecast_mse + 0.4 * rec.reconstruct_mse, 1e-6);
  }
  const LossRecord example{1, 0.6 * 1.0 + 0.4 * 2.0, 1.0, 2.0};
  EXPECT_DOUBLE_EQ(example.total, 1.4);
}

TEST(Train, LossDecreasesOnSmallRun) {
  const auto v = views();
  const auto r = pretrain(v, small_config(NormKind::layer), small_train(150));
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 10; ++i) first += r.report.curve[i].total;
  for (std::size_t i = 140; i < 150; ++i) last += r.report.curve[i].total;
  EXPECT_LT(last, first);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto v = views();
  TrainConfig t = small_train(7);
  t.lr = 0.0;
  const auto init = model::init_params<float>(small_config());
  auto trained = init;
  run_training(trained, v, t);
  auto a = init;
  auto b = trained;
  const auto pa = model::trainable_tensors(a);
  const auto pb = model::trainable_tensors(b);
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(*pa[i] == *pb[i]);
}

TEST(Train, RunsAreBitwiseDeterministic) {
  const auto v = views();
  const auto a = pretrain(v, small_config(), small_train(10));
  const auto b = pretrain(v, small_config(), small_train(10));
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.report.curve[i].total, b.report.curve[i].total);
    EXPECT_EQ(a.report.curve[i].forecast_mse, b.report.curve[i].forecast_mse);
  }
  EXPECT_EQ(bytes_of(a.params), bytes_of(b.params));
  TrainConfig other = small_train(10);
  other.seed = 6;
  EXPECT_NE(bytes_of(pretrain(v, small_config(), other).params), bytes_of(a.params));
}

TEST(Train, BatchNormUpdatesRunningStatsDuringPretraining) {
  const auto v = views();
  const auto init = model::init_params<float>(small_config());
  const auto r = pretrain(v, small_config(), small_train(3));
  EXPECT_FALSE(r.params.encoder.layers[0].attn_norm.stats->mean ==
               init.encoder.layers[0].attn_norm.stats->mean);
}

TEST(Finetune, FreezeContract) {
  const auto v = views();
  for (TargetMode mode : {TargetMode::finetune_forecast, TargetMode::finetune_reconstruct}) {
    auto params = pretrain(v, small_config(), small_train(5)).params;
    const auto enc = copy_part(params.encoder);
    const auto rec = copy_part(params.reconstruct);
    const auto fc = copy_part(params.forecast);
    TrainConfig t = small_train(10);
    t.target_mode = mode;
    t.seed = 77;
    finetune(params, v, t);
    const auto enc2 = copy_part(params.encoder);
    ASSERT_EQ(enc.size(), enc2.size());
    for (std::size_t i = 0; i < enc.size(); ++i) EXPECT_TRUE(enc[i] == enc2[i]) << i;
    const auto& frozen = mode == TargetMode::finetune_forecast ? rec : fc;
    const auto frozen_after = mode == TargetMode::finetune_forecast ? copy_part(params.reconstruct)
                                                                    : copy_part(params.forecast);
    for (std::size_t i = 0; i < frozen.size(); ++i) EXPECT_TRUE(frozen[i] == frozen_after[i]);
    const auto& trained = mode == TargetMode::finetune_forecast ? fc : rec;
    const auto trained_after = mode == TargetMode::finetune_forecast ? copy_part(params.forecast)
                                                                     : copy_part(params.reconstruct);
    EXPECT_FALSE(trained[2] == trained_after[2]);
  }
}

TEST(Finetune, ModeWeightsSelectOneLoss) {
  const auto v = views();
  auto params = model::init_params<float>(small_config());
  TrainConfig t = small_train(3);
  t.target_mode = TargetMode::finetune_forecast;
  const auto r = finetune(params, v, t);
  for (const auto& rec : r.curve) EXPECT_EQ(rec.total, static_cast<float>(rec.forecast_mse));
  t.target_mode = TargetMode::pretrain;
  EXPECT_THROW(finetune(params, v, t), ConfigError);
}

TEST(Finetune, ValidationSelectsBestSnapshot) {
  const auto v = views();
  auto params = model::init_params<float>(small_config());
  TrainConfig t = small_train(12);
  t.target_mode = TargetMode::finetune_forecast;
  t.eval_every = 4;
  // A validator that prefers the untouched parameters keeps step 0.
  const auto start = params.forecast.w2;
  TrainOptions opts;
  opts.validator = [&](const model::ModelParams<float>& p) { return p.forecast.w2 == start ? 0.0 : 1.0;
  };
  const auto r = finetune(params, v, t, opts);
  ASSERT_EQ(r.validation.size(), 4u);
  EXPECT_EQ(r.validation[0].step, 0u);
  EXPECT_EQ(r.validation[3].step, 12u);
  EXPECT_EQ(r.selected_step, 0u);
  EXPECT_TRUE(params.forecast.w2 == start);
}

TEST(Train, DivergenceRestoresLastFiniteParameters) {
  const auto v = views();
  auto params = model::init_params<float>(small_config(NormKind::layer));
  TrainConfig t = small_train(50);
  t.lr = 1e36;
  t.weight_decay = 0.0;
  try {
    run_training(params, v, t);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step(), 2u);
  }
  for (auto* p : model::trainable_tensors(params)) EXPECT_TRUE(p->all_finite());
}

TEST(Train, ConfigValidation) {
  TrainConfig t;
  t.loss_weight_forecast = 1.5;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_EQ(parse_target_mode("target_train"), TargetMode::target_train);
  EXPECT_THROW(parse_target_mode("bogus"), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitwiseIncludingRunningStats) {
  const auto v = views();
  const auto trained = pretrain(v, small_config(), small_train(4)).params;
  const fs::path p = temp_path("rt.omg");
  save_checkpoint(p, trained, 4);
  const Checkpoint back = load_checkpoint(p);
  EXPECT_EQ(back.step, 4u);
  EXPECT_EQ(back.params.config, trained.config);
  EXPECT_EQ(bytes_of(back.params), bytes_of(trained));
  const data::Batch b = data::make_batch(v, 3, 32, 8, 8, 2);
  EXPECT_TRUE(model::predict(back.params, b.inputs, 3, model::Head::forecast) ==
              model::predict(trained, b.inputs, 3, model::Head::forecast));
}

TEST(Checkpoint, RejectsDamagedFiles) {
  const auto params = model::init_params<float>(small_config());
  const std::vector<char> good = serialize_checkpoint(params, 1);
  for (std::size_t cut : {std::size_t{0}, std::size_t{2}, std::size_t{10}, good.size() / 2,
                          good.size() - 1}) {
    std::vector<char> bad(good.begin(), good.begin() + static_cast<long>(cut));
    EXPECT_THROW(deserialize_checkpoint(bad), CorruptionError) << cut;
  }
  auto magic = good;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), FormatError);
  auto version = good;
  version[4] = 9;
  EXPECT_THROW(deserialize_checkpoint(version), VersionError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(trailing), CorruptionError);
  for (std::size_t at : {good.size() / 3, good.size() / 2, good.size() - 13}) {
    auto flipped = good;
    flipped[at] ^= 0x10;  // inside a float payload
    EXPECT_THROW(deserialize_checkpoint(flipped), CorruptionError) << at;
  }
}

TEST(Checkpoint, ShapeInconsistencyNamesTensor) {
  const auto params = model::init_params<float>(small_config());
  std::vector<char> bytes = serialize_checkpoint(params, 1);
  // First tensor record follows magic, version, config and count.
  const std::string cfg = params.config.to_text();
  const std::size_t first = 4 + 4 + 4 + cfg.size() + 4;
  const std::string name = "encoder.patch.weight";
  const std::size_t dim0 = first + 2 + name.size() + 1;
  bytes[dim0] = 9;
  try {
    deserialize_checkpoint(bytes);
    FAIL();
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find(name), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, IncompatibleConfigRequest) {
  const auto params = model::init_params<float>(small_config());
  const fs::path p = temp_path("cfg.omg");
  save_checkpoint(p, params);
  ModelConfig other = small_config();
  other.d_model = 32;
  EXPECT_THROW(load_checkpoint(p, other), ConfigMismatchError);
  other = small_config();
  other.seed = 999;
  EXPECT_NO_THROW(load_checkpoint(p, other));
  EXPECT_THROW(load_checkpoint(temp_path("missing.omg")), IoError);
}

TEST(LossCurve, CsvLayout) {
  const fs::path p = temp_path("curve.csv");
  const std::vector<LossRecord> curve{{1, 1.4, 1.0, 2.0}};
  write_loss_curve(p, curve);
  std::ifstream in(p);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "step,total,forecast_mse,reconstruct_mse");
  EXPECT_EQ(row, "1,1.4,1,2");
}
