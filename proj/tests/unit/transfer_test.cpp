#include <gtest/gtest.h>

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "bt/core/errors.hpp"
#include "bt/core/rng.hpp"
#include "bt/genesis/backend.hpp"
#include "bt/transfer/pipeline.hpp"
#include "temp_dir.hpp"

namespace bt::transfer {
namespace {

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

// Loss = <r, layer(x)>; its input/parameter gradients come from backward(r).
void check_layer_gradients(Layer& layer, std::vector<float> x, std::size_t batch, double tol) {
  std::mt19937_64 rng(11);
  layer.reset(rng);
  const auto r = random_vector(layer.out_size() * batch, 12);
  for (Param* p : layer.params()) p->zero_grad();
  layer.forward(x, batch);
  const auto gx = layer.backward(r, true);
  auto loss = [&] { return dot(r, layer.forward(x, batch)); };
  const double h = 1e-2;
  for (std::size_t i = 0; i < x.size(); i += 3) {
    const float orig = x[i];
    x[i] = orig + float(h);
    const double lp = loss();
    x[i] = orig - float(h);
    const double lm = loss();
    x[i] = orig;
    EXPECT_NEAR((lp - lm) / (2 * h), gx[i], tol) << layer.describe() << " input " << i;
  }
  for (Param* p : layer.params())
    for (std::size_t i = 0; i < p->value.size(); i += 5) {
      const float orig = p->value[i];
      p->value[i] = orig + float(h);
      const double lp = loss();
      p->value[i] = orig - float(h);
      const double lm = loss();
      p->value[i] = orig;
      EXPECT_NEAR((lp - lm) / (2 * h), p->grad[i], tol) << layer.describe() << " param " << i;
    }
}

TEST(Layers, LinearOpsMatchFiniteDifferences) {
  Conv3x3 conv(2, 3, 5, 4);
  check_layer_gradients(conv, random_vector(conv.in_size() * 2, 1), 2, 2e-3);
  Linear lin(7, 4);
  check_layer_gradients(lin, random_vector(7 * 3, 2), 3, 2e-3);
  GlobalAvgPool gap(3, 4, 4);
  check_layer_gradients(gap, random_vector(gap.in_size() * 2, 3), 2, 2e-3);
}

TEST(Layers, PiecewiseOpsMatchAwayFromKinks) {
  // Values on a coarse lattice keep every +-h probe on one side of a kink.
  std::vector<float> x(2 * 3 * 4 * 4);
  std::mt19937_64 rng(5);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = float(int(i % 17) - 8) * 0.25f + 0.1f;
  std::shuffle(x.begin(), x.end(), rng);
  Relu relu(x.size() / 2);
  check_layer_gradients(relu, x, 2, 1e-3);
  MaxPool2 pool(3, 4, 4);
  std::iota(x.begin(), x.end(), 0.0f);
  std::shuffle(x.begin(), x.end(), rng);
  check_layer_gradients(pool, x, 2, 1e-3);
}

TEST(Layers, SoftmaxCrossEntropyGradient) {
  auto z = random_vector(3 * 4, 9);
  std::vector<float> t{0.2f, 0.8f, 0, 0, 0, 0, 1, 0, 0.5f, 0, 0, 0.5f};
  std::vector<float> g, scratch;
  softmax_cross_entropy(z, t, 3, 4, g);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const float orig = z[i];
    z[i] = orig + 1e-2f;
    const double lp = softmax_cross_entropy(z, t, 3, 4, scratch);
    z[i] = orig - 1e-2f;
    const double lm = softmax_cross_entropy(z, t, 3, 4, scratch);
    z[i] = orig;
    EXPECT_NEAR((lp - lm) / 2e-2, g[i], 1e-4);
  }
  const auto p = softmax(z, 3, 4);
  for (int b = 0; b < 3; ++b) EXPECT_NEAR(p[b * 4] + p[b * 4 + 1] + p[b * 4 + 2] + p[b * 4 + 3], 1.0, 1e-6);
}

TEST(Layers, SequentialCopiesAreDeep) {
  auto m = BackboneRegistry::builtin().build("tiny_cnn", 4, 8, 1);
  Sequential copy = m.extractor;
  copy.params().front()->value[0] += 1.0f;
  EXPECT_NE(copy.params().front()->value[0], m.extractor.params().front()->value[0]);
  EXPECT_THROW(m.extractor.add(std::make_unique<Linear>(5, 2)), ValidationError);
}

TEST(Cosine, MatchesClosedFormAndDecaysBelowOnePermille) {
  for (int epochs : {50, 100, 150}) {
    for (int e = 0; e < epochs; ++e) {
      const double expected = 0.1 * 0.5 * (1 + std::cos(std::numbers::pi * e / epochs));
      EXPECT_NEAR(cosine_lr(0.1, e, epochs), expected, 1e-12);
    }
    EXPECT_EQ(cosine_lr(0.1, 0, epochs), 0.1);
    EXPECT_LE(cosine_lr(0.1, epochs - 1, epochs), 1e-3 * 0.1);
  }
  EXPECT_THROW(cosine_lr(0.1, 10, 10), ValidationError);
  EXPECT_THROW(cosine_lr(0.1, -1, 10), ValidationError);
}

TEST(Mixup, Endpoints) {
  const auto xa = random_vector(24, 1), xb = random_vector(24, 2);
  const std::vector<float> ya{1, 0, 0, 1}, yb{0, 1, 1, 0};
  auto one = mixup_batch(xa, xb, ya, yb, 1.0);
  EXPECT_EQ(one.inputs, xa);
  EXPECT_EQ(one.labels, ya);
  auto zero = mixup_batch(xa, xb, ya, yb, 0.0);
  EXPECT_EQ(zero.inputs, xb);
  EXPECT_EQ(zero.labels, yb);
}

TEST(Mixup, Midpoint) {
  auto m = mixup_batch(std::vector<float>(6, 0.0f), std::vector<float>(6, 2.0f), {1, 0}, {0, 1}, 0.5);
  EXPECT_EQ(m.inputs, std::vector<float>(6, 1.0f));
  EXPECT_EQ(m.labels, (std::vector<float>{0.5f, 0.5f}));
}

TEST(Mixup, RejectsBadLambdaAndShapes) {
  EXPECT_THROW(mixup_batch({1}, {2}, {1}, {0}, 1.5), ValidationError);
  EXPECT_THROW(mixup_batch({1}, {2}, {1}, {0}, -0.1), ValidationError);
  EXPECT_THROW(mixup_batch({1}, {2}, {1}, {0}, std::nan("")), ValidationError);
  EXPECT_THROW(mixup_batch({1, 2}, {2}, {1}, {0}, 0.5), ValidationError);
}

TEST(Mixup, AlwaysConvex) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto xa = random_vector(32, 2 * trial), xb = random_vector(32, 2 * trial + 1);
    const auto m = mixup_batch(xa, xb, {1, 0}, {0, 1}, u(rng));
    for (std::size_t i = 0; i < xa.size(); ++i) {
      ASSERT_GE(m.inputs[i], std::min(xa[i], xb[i]));
      ASSERT_LE(m.inputs[i], std::max(xa[i], xb[i]));
    }
  }
}

// Asymptotic Kolmogorov distribution with Stephens' small-sample correction.
double ks_p_value(double d, std::size_t n) {
  const double sn = std::sqrt(double(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0;
  for (int k = 1; k <= 100; ++k) p += 2 * ((k % 2) ? 1 : -1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

TEST(Mixup, LambdaFollowsSymmetricBeta) {
  std::mt19937_64 rng(17);
  std::vector<double> draws(10000);
  for (auto& l : draws) {
    l = sample_mixup_lambda(0.2, rng);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
  }
  std::sort(draws.begin(), draws.end());
  double d = 0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = boost::math::ibeta(0.2, 0.2, draws[i]);
    d = std::max({d, f - double(i) / draws.size(), double(i + 1) / draws.size() - f});
  }
  EXPECT_GT(ks_p_value(d, draws.size()), 0.01) << "D = " << d;
}

TEST(Backbone, ReinitClassifier) {
  const auto m = BackboneRegistry::builtin().build("tiny_cnn", 10, 8, 3);
  const auto r = reinit_classifier(m, 10, 99);
  EXPECT_EQ(r.extractor_digest(), m.extractor_digest());
  EXPECT_NE(r.head_digest(), m.head_digest());
  double diff = 0;
  for (std::size_t i = 0; i < m.head.weight().value.size(); ++i)
    diff += std::abs(r.head.weight().value[i] - m.head.weight().value[i]);
  EXPECT_GT(diff, 0);
  EXPECT_EQ(reinit_classifier(m, 100, 1).n_classes(), 100u);
  EXPECT_EQ(reinit_classifier(m, 10, 5).head_digest(), reinit_classifier(m, 10, 5).head_digest());
  const float bound = 1.0f / std::sqrt(float(m.feature_dim()));
  for (float w : r.head.weight().value) EXPECT_LE(std::abs(w), bound);
}

TEST(Backbone, RegistryContracts) {
  const auto& reg = BackboneRegistry::builtin();
  for (const char* name : {"resnet18", "resnet50", "vit_b16", "vit_l16", "tiny_cnn", "mlp"})
    EXPECT_TRUE(reg.contains(name)) << name;
  EXPECT_THROW(reg.build("resnet18", 10, 224, 0), ConfigError);
  EXPECT_THROW(reg.lookup("alexnet"), LookupError);
  EXPECT_EQ(reg.lookup("vit_b16").defaults.weight_decay, 0.0);
  EXPECT_EQ(reg.lookup("vit_l16").defaults.batch_size, 128u);
  EXPECT_EQ(reg.lookup("resnet50").defaults.weight_decay, 5e-4);
  const auto mlp = reg.build("mlp", 3, 6, 0);
  EXPECT_EQ(mlp.head.in_size(), mlp.extractor.out_size());
}

TEST(Backbone, CheckpointRoundTrip) {
  testing::TempDir tmp;
  auto m = BackboneRegistry::builtin().build("tiny_cnn", 5, 8, 4);
  m.pretrained_source = "unit";
  save_checkpoint(m, tmp / "m.btm");
  auto back = load_checkpoint(tmp / "m.btm");
  EXPECT_EQ(back.extractor_digest(), m.extractor_digest());
  EXPECT_EQ(back.head_digest(), m.head_digest());
  EXPECT_EQ(back.pretrained_source, "unit");
  const auto x = random_vector(m.extractor.in_size() * 2, 1);
  EXPECT_EQ(back.logits(x, 2), m.logits(x, 2));
  std::ofstream(tmp / "bad.btm") << "garbage";
  EXPECT_THROW(load_checkpoint(tmp / "bad.btm"), ParseError);
}

TEST(StageDefaults, MatchHyperparameterTables) {
  const auto full = StageConfig::defaults();
  EXPECT_EQ(full.epochs, 150);
  EXPECT_EQ(StageConfig::defaults(true).epochs, 100);
  EXPECT_EQ(full.weight_decay, 5e-4);
  EXPECT_EQ(full.batch_size, 64u);
  EXPECT_EQ(full.momentum, 0.9);
  const auto vit = StageConfig::defaults_for(BackboneRegistry::builtin().lookup("vit_b16"), true);
  EXPECT_EQ(vit.weight_decay, 0.0);
  EXPECT_EQ(vit.batch_size, 128u);
  EXPECT_EQ(vit.epochs, 100);
  EXPECT_EQ(default_lr_grid(), (std::vector<double>{0.1, 0.03, 0.01, 0.003, 0.001}));
  EXPECT_EQ(reference_learning_rate("aircraft"), 0.1);
  EXPECT_EQ(reference_learning_rate("pets"), 0.003);
  EXPECT_EQ(reference_learning_rate("nope"), std::nullopt);
  StageConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

LabeledImages stub_images(std::size_t classes, std::size_t per_class, std::uint64_t seed) {
  genesis::StubBackend stub;
  LabeledImages d;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      d.images.push_back(stub.render(c, derive_seed(seed, {c, i}), 3.5, 10));
      d.labels.push_back(int(c));
      ++d.real_count;
    }
  return d;
}

StageConfig quick_stage(std::uint64_t seed) {
  StageConfig c;
  c.learning_rate = 0.01;
  c.epochs = 3;
  c.batch_size = 8;
  c.augment_min_scale = 0.5;
  c.seed = seed;
  return c;
}

TEST(FineTune, FixedFeatureFreezesExtractor) {
  auto m = BackboneRegistry::builtin().build("tiny_cnn", 3, 8, 1);
  const auto ext = m.extractor_digest(), head = m.head_digest();
  auto cfg = quick_stage(1);
  cfg.fixed_feature = true;
  fine_tune_stage(m, stub_images(3, 6, 1), std::nullopt, cfg);
  EXPECT_EQ(m.extractor_digest(), ext);
  EXPECT_NE(m.head_digest(), head);
}

TEST(FineTune, TraceAndEvalFields) {
  auto m = BackboneRegistry::builtin().build("tiny_cnn", 3, 8, 1);
  const auto train = stub_images(3, 6, 1);
  auto res = fine_tune_stage(m, train, std::nullopt, quick_stage(2));
  ASSERT_EQ(res.trace.size(), 3u);
  EXPECT_EQ(res.optimizer_steps, 3u * 3u);  // 18 images, batch 8
  for (const auto& r : res.trace.records()) EXPECT_FALSE(r.eval_accuracy.has_value());
  EXPECT_EQ(res.trace.records()[0].learning_rate, 0.01);

  const auto eval = stub_images(3, 4, 9);
  res = fine_tune_stage(m, train, EvalSet{&eval, AccuracyMetric::mean_per_class, 3}, quick_stage(3));
  for (const auto& r : res.trace.records()) {
    ASSERT_TRUE(r.eval_accuracy.has_value());
    EXPECT_GE(*r.eval_accuracy, 0.0);
    EXPECT_LE(*r.eval_accuracy, 1.0);
  }
  const LabeledImages empty;
  res = fine_tune_stage(m, train, EvalSet{&empty, AccuracyMetric::top1, 3}, quick_stage(3));
  EXPECT_FALSE(res.trace.back().eval_accuracy.has_value());
}

TEST(FineTune, DeterministicUnderSeed) {
  const auto base = BackboneRegistry::builtin().build("tiny_cnn", 3, 8, 1);
  const auto train = stub_images(3, 5, 4);
  auto cfg = quick_stage(6);
  cfg.mixup = MixupConfig{};
  auto a = base, b = base;
  fine_tune_stage(a, train, std::nullopt, cfg);
  fine_tune_stage(b, train, std::nullopt, cfg);
  EXPECT_EQ(a.extractor_digest(), b.extractor_digest());
  EXPECT_EQ(a.head_digest(), b.head_digest());
}

TEST(FineTune, NonFiniteLossAborts) {
  auto m = BackboneRegistry::builtin().build("mlp", 3, 8, 1);
  auto cfg = quick_stage(1);
  cfg.learning_rate = 1e30;
  cfg.epochs = 5;
  try {
    fine_tune_stage(m, stub_images(3, 6, 1), std::nullopt, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(FineTune, RejectsBadInput) {
  auto m = BackboneRegistry::builtin().build("tiny_cnn", 2, 8, 1);
  EXPECT_THROW(fine_tune_stage(m, LabeledImages{}, std::nullopt, quick_stage(1)), ValidationError);
  EXPECT_THROW(fine_tune_stage(m, stub_images(3, 2, 1), std::nullopt, quick_stage(1)), ValidationError);
}

TEST(FineTune, LearnsSeparableStubClasses) {
  auto m = BackboneRegistry::builtin().build("tiny_cnn", 4, 8, 2);
  auto cfg = quick_stage(3);
  cfg.epochs = 25;
  const auto train = stub_images(4, 10, 1);
  const auto eval = stub_images(4, 10, 2);
  auto res = fine_tune_stage(m, train, EvalSet{&eval, AccuracyMetric::top1, 4}, cfg);
  EXPECT_GT(*res.trace.back().eval_accuracy, 0.8);
  EXPECT_LT(res.trace.back().train_loss, res.trace.records().front().train_loss);
}

// ---------------------------------------------------------------------------

struct PipelineFixture : ::testing::Test {
  testing::TempDir tmp;
  DatasetSpec ds = DatasetSpec::custom("unit", {"a", "b", "c"});

  ImageSource write(const std::string& split, std::size_t per_class, ImageOrigin origin,
                    std::uint64_t seed, ManifestRole role) {
    genesis::StubStyle style;
    if (origin == ImageOrigin::synthetic) style.offset_x = 0.1;
    genesis::StubBackend stub(style);
    std::vector<ImageRecord> recs;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < per_class; ++i) {
        const std::string rel = split + "/" + std::to_string(c) + "_" + std::to_string(i) + ".png";
        write_file(tmp / rel, encode_png(stub.render(c, derive_seed(seed, {c, i}), 3.5, 10)));
        std::optional<Provenance> prov;
        if (origin == ImageOrigin::synthetic) prov = Provenance{"p", 1, seed, 3.5, "stub", "x"};
        recs.push_back({rel, c, origin, prov});
      }
    return {SplitManifest(ds, role, recs), tmp.path()};
  }

  ImageSource real() { return write("real", 4, ImageOrigin::real, 1, ManifestRole::train); }
  ImageSource synthetic() { return write("syn", 6, ImageOrigin::synthetic, 2, ManifestRole::synthetic); }
  ImageSource val() { return write("val", 3, ImageOrigin::real, 3, ManifestRole::val); }
  BackboneHandle backbone() { return BackboneRegistry::builtin().build("tiny_cnn", 7, 8, 5); }
};

TEST_F(PipelineFixture, ConfigInvariants) {
  const auto s = quick_stage(1);
  for (auto kind : {PipelineKind::vanilla, PipelineKind::mixed, PipelineKind::bridged, PipelineKind::bridged_pp})
    EXPECT_NO_THROW(PipelineConfig::make(kind, s, real(), synthetic(), val()).validate());

  auto v = PipelineConfig::make(PipelineKind::vanilla, s, real());
  v.stage1 = s;
  EXPECT_THROW(v.validate(), ConfigError);
  v = PipelineConfig::make(PipelineKind::vanilla, s, real());
  v.synthetic = synthetic();
  EXPECT_THROW(v.validate(), ConfigError);

  EXPECT_THROW(PipelineConfig::make(PipelineKind::mixed, s, real()).validate(), ConfigError);
  EXPECT_THROW(PipelineConfig::make(PipelineKind::bridged, s, real()).validate(), ConfigError);

  auto pp = PipelineConfig::make(PipelineKind::bridged_pp, s, real(), synthetic());
  EXPECT_TRUE(pp.stage1->mixup.has_value());
  EXPECT_TRUE(pp.stage2.fc_reinit_before);
  pp.stage1->mixup.reset();
  EXPECT_THROW(pp.validate(), ConfigError);
  pp = PipelineConfig::make(PipelineKind::bridged_pp, s, real(), synthetic());
  pp.stage2.fc_reinit_before = false;
  EXPECT_THROW(pp.validate(), ConfigError);

  EXPECT_EQ(parse_pipeline_kind("bridged++"), PipelineKind::bridged_pp);
  EXPECT_EQ(to_string(PipelineKind::bridged_pp), "bridged++");
  EXPECT_THROW(parse_pipeline_kind("hybrid"), ConfigError);
}

TEST_F(PipelineFixture, StageDataComposition) {
  const auto s = quick_stage(1);
  auto bridged = run_pipeline(PipelineConfig::make(PipelineKind::bridged, s, real(), synthetic(), val()), backbone());
  ASSERT_EQ(bridged.stages.size(), 2u);
  EXPECT_EQ(bridged.stages[0].synthetic_images, bridged.stages[0].train_size);
  EXPECT_EQ(bridged.stages[0].real_images, 0u);
  EXPECT_EQ(bridged.stages[1].real_images, bridged.stages[1].train_size);
  EXPECT_EQ(bridged.stages[1].synthetic_images, 0u);
  EXPECT_FALSE(bridged.stages[1].head_reinitialized);
  EXPECT_EQ(bridged.stages[1].head_digest_before, bridged.stages[0].head_digest_after);
  EXPECT_TRUE(bridged.final_accuracy.has_value());

  auto mixed = run_pipeline(PipelineConfig::make(PipelineKind::mixed, s, real(), synthetic()), backbone());
  ASSERT_EQ(mixed.stages.size(), 1u);
  EXPECT_EQ(mixed.stages[0].train_size, 12u + 18u);
  EXPECT_FALSE(mixed.final_accuracy.has_value());

  auto vanilla = run_pipeline(PipelineConfig::make(PipelineKind::vanilla, s, real(), std::nullopt, val()), backbone());
  ASSERT_EQ(vanilla.stages.size(), 1u);
  EXPECT_EQ(vanilla.stages[0].train_size, 12u);
  EXPECT_EQ(vanilla.model.n_classes(), 3u);
  EXPECT_EQ(vanilla.stages[0].extractor_digest_before, backbone().extractor_digest());
}

TEST_F(PipelineFixture, BridgedPlusPlusReinitialisesOnlyTheHead) {
  auto run = run_pipeline(PipelineConfig::make(PipelineKind::bridged_pp, quick_stage(4), real(), synthetic()), backbone());
  ASSERT_EQ(run.stages.size(), 2u);
  EXPECT_EQ(run.stages[1].extractor_digest_before, run.stages[0].extractor_digest_after);
  EXPECT_NE(run.stages[1].head_digest_before, run.stages[0].head_digest_after);
  EXPECT_TRUE(run.stages[1].head_reinitialized);
}

TEST_F(PipelineFixture, MixedFractionSubsamplesSynthetic) {
  auto cfg = PipelineConfig::make(PipelineKind::mixed, quick_stage(1), real(), synthetic());
  cfg.mixed_synthetic_fraction = 0.5;
  auto run = run_pipeline(cfg, backbone());
  EXPECT_EQ(run.stages[0].real_images, 12u);
  EXPECT_EQ(run.stages[0].synthetic_images, 12u);
}

TEST_F(PipelineFixture, ReproducibleRuns) {
  auto cfg = PipelineConfig::make(PipelineKind::bridged_pp, quick_stage(9), real(), synthetic(), val());
  auto a = run_pipeline(cfg, backbone());
  auto b = run_pipeline(cfg, backbone());
  EXPECT_EQ(a.model.extractor_digest(), b.model.extractor_digest());
  EXPECT_EQ(a.model.head_digest(), b.model.head_digest());
  EXPECT_EQ(a.final_accuracy, b.final_accuracy);
}

TEST_F(PipelineFixture, RunDirectoryLayout) {
  auto run = run_pipeline(PipelineConfig::make(PipelineKind::bridged, quick_stage(1), real(), synthetic()), backbone());
  const auto dir = tmp / "run";
  write_run_dir(dir, run, "{\"pipeline\": \"bridged\"}\n");
  for (const char* f : {"config.json", "stage1_metrics.csv", "stage2_metrics.csv", "final.json", "model.btm"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream csv(dir / "stage2_metrics.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header, "epoch,lr,train_loss,train_acc,eval_acc");
  EXPECT_EQ(row.back(), ',');  // no eval set: the field is empty, not zero
  std::ifstream fj(dir / "final.json");
  auto j = nlohmann::json::parse(fj);
  EXPECT_TRUE(j["final_accuracy"].is_null());
  EXPECT_EQ(j["pipeline"], "bridged");
  EXPECT_EQ(load_checkpoint(dir / "model.btm").head_digest(), run.model.head_digest());
}

TEST_F(PipelineFixture, LrRunnerOnTrainHoldout) {
  auto cfg = PipelineConfig::make(PipelineKind::vanilla, quick_stage(1), write("big", 10, ImageOrigin::real, 4, ManifestRole::train));
  EXPECT_THROW(pipeline_lr_runner(cfg, backbone(), LrSelectOn::val), ConfigError);
  auto runner = pipeline_lr_runner(cfg, backbone(), LrSelectOn::train_holdout);
  const double acc = runner(0.01, 3);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST(SelectLr, SingletonGridRunsNothing) {
  int calls = 0;
  auto sel = select_lr({0.03}, {1, 2, 3}, [&](double, std::uint64_t) { return ++calls, 0.5; });
  EXPECT_EQ(sel.learning_rate, 0.03);
  EXPECT_EQ(calls, 0);
  EXPECT_TRUE(sel.trials.empty());
}

TEST(SelectLr, MonotoneDecreasingPicksSmallest) {
  int calls = 0;
  auto sel = select_lr(default_lr_grid(), {1, 2}, [&](double lr, std::uint64_t) {
    ++calls;
    return 1.0 - lr;
  });
  EXPECT_EQ(sel.learning_rate, 0.001);
  EXPECT_EQ(calls, 10);
  EXPECT_EQ(sel.trials.size(), 5u);
}

TEST(SelectLr, TiesGoToLargerLr) {
  auto sel = select_lr({0.001, 0.1, 0.01}, {1}, [](double lr, std::uint64_t) { return lr == 0.01 ? 0.2 : 0.7; });
  EXPECT_EQ(sel.learning_rate, 0.1);
}

TEST(SelectLr, DivergedLrsAreSkippedAndAllDivergedIsAnError) {
  auto sel = select_lr({0.1, 0.01}, {1}, [](double lr, std::uint64_t) -> double {
    if (lr == 0.1) throw DivergenceError("nan at epoch 3");
    return 0.4;
  });
  EXPECT_EQ(sel.learning_rate, 0.01);
  EXPECT_FALSE(sel.trials[0].score.has_value());
  try {
    select_lr({0.1, 0.01}, {1}, [](double lr, std::uint64_t) -> double {
      throw DivergenceError("boom " + std::to_string(lr));
    });
    FAIL();
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("0.100000"), std::string::npos) << msg;
    EXPECT_NE(msg.find("0.010000"), std::string::npos) << msg;
  }
  EXPECT_THROW(select_lr({}, {1}, [](double, std::uint64_t) { return 0.0; }), ConfigError);
}

}  // namespace
}  // namespace bt::transfer
