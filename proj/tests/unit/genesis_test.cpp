#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <json.hpp>

#include "bt/core/errors.hpp"
#include "bt/core/hash.hpp"
#include "bt/dsi/style_inversion.hpp"
#include "bt/genesis/backend.hpp"
#include "bt/genesis/ddpm.hpp"
#include "bt/genesis/generate.hpp"
#include "bt/genesis/guidance.hpp"
#include "../support/temp_dir.hpp"

namespace bt::genesis {
namespace {

Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

TEST(CombineGuidance, Endpoints) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    ScorePair p{random_tensor(rng, {3, 8, 8}), random_tensor(rng, {3, 8, 8})};
    EXPECT_EQ(combine_guidance(p, 1.0), p.conditional);
    EXPECT_EQ(combine_guidance(p, 0.0), p.unconditional);
  }
}

TEST(CombineGuidance, ScalarSubstitution) {
  ScorePair p{Tensor({1}, 1.0), Tensor({1}, 0.0)};
  EXPECT_DOUBLE_EQ(combine_guidance(p, 3.5)[0], 3.5);
  ScorePair q{Tensor({1}, 2.0), Tensor({1}, 1.0)};
  // 3.5 * 2 + (1 - 3.5) * 1 = 4.5; differs from the additive u + w (c - u) only by parameterization.
  EXPECT_DOUBLE_EQ(combine_guidance(q, 3.5)[0], 4.5);
}

TEST(CombineGuidance, ShapeMismatchAndNonFinite) {
  ScorePair p{Tensor({2, 2}), Tensor({4})};
  EXPECT_THROW(combine_guidance(p, 1.0), ValidationError);
  ScorePair q{Tensor({2}), Tensor({2})};
  EXPECT_THROW(combine_guidance(q, std::nan("")), ValidationError);
}

TEST(CombineGuidance, LinearInInputs) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    ScorePair p{random_tensor(rng, {16}), random_tensor(rng, {16})};
    const double a = u(rng), w = u(rng) + 4.0;
    ScorePair scaled = p;
    for (std::size_t i = 0; i < 16; ++i) {
      scaled.conditional[i] *= a;
      scaled.unconditional[i] *= a;
    }
    auto lhs = combine_guidance(scaled, w);
    auto rhs = combine_guidance(p, w);
    for (std::size_t i = 0; i < 16; ++i) {
      const double r = a * rhs[i];
      EXPECT_NEAR(lhs[i], r, 8 * std::numeric_limits<double>::epsilon() *
                                 (std::abs(a * w * p.conditional[i]) +
                                  std::abs(a * (1 - w) * p.unconditional[i]) + std::abs(r)));
    }
  }
}

TEST(GuidanceConfig, Defaults) {
  GuidanceConfig g;
  EXPECT_EQ(g.scale, 3.5);
  EXPECT_EQ(g.resolution, 512);
  EXPECT_EQ(g.steps, 50u);
  EXPECT_EQ(g.sampler, Sampler::ddpm);
  g.scale = 0;
  EXPECT_THROW(g.validate(), ValidationError);
}

TEST(Ddpm, TimestepsDescendToPositive) {
  auto ts = ddpm_timesteps(1000, 50);
  ASSERT_EQ(ts.size(), 50u);
  EXPECT_EQ(ts.front(), 1000u);
  EXPECT_EQ(ts.back(), 20u);
  EXPECT_TRUE(std::is_sorted(ts.rbegin(), ts.rend()));
  EXPECT_THROW(ddpm_timesteps(10, 11), ValidationError);
}

TEST(Ddpm, GuidanceEndpointsSelectOneEstimate) {
  dsi::ToyDenoiser d;
  auto cond = d.embed_prompt("a photo of a cat.", "", nullptr);
  auto other = d.embed_prompt("a rendering of a dog.", "", nullptr);
  auto uncond = d.embed_prompt("", "", nullptr);
  // w = 1 ignores the unconditional branch; w = 0 ignores the conditional one.
  EXPECT_EQ(ddpm_sample(d, cond, uncond, 1.0, 20, 5), ddpm_sample(d, cond, other, 1.0, 20, 5));
  EXPECT_EQ(ddpm_sample(d, cond, uncond, 0.0, 20, 5), ddpm_sample(d, other, uncond, 0.0, 20, 5));
  EXPECT_NE(ddpm_sample(d, cond, uncond, 3.5, 20, 5), ddpm_sample(d, cond, uncond, 1.0, 20, 5));
  EXPECT_EQ(ddpm_sample(d, cond, uncond, 3.5, 20, 5), ddpm_sample(d, cond, uncond, 3.5, 20, 5));
}

TEST(StubBackend, DeterministicPerSeed) {
  StubBackend stub;
  GenerationRequest r{"a photo of a cat.", 3, "cat", {}, 77};
  r.guidance.resolution = 32;
  auto a = stub.generate(r);
  auto b = stub.generate(r);
  EXPECT_EQ(sha256_hex(a), sha256_hex(b));
  r.seed = 78;
  EXPECT_NE(sha256_hex(stub.generate(r)), sha256_hex(a));
  auto img = decode_png(a);
  EXPECT_EQ(img.width, 32);
}

TEST(StubBackend, ShiftedStyleChangesPixelsNotLabel) {
  StubBackend real;
  StubBackend shifted(StubStyle{.offset_x = 0.15, .tint_r = 40});
  auto a = real.render(1, 5, 3.5, 32);
  auto b = shifted.render(1, 5, 3.5, 32);
  EXPECT_NE(a, b);
}

DatasetSpec toy_spec(std::size_t classes) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
  return DatasetSpec("toy", names, 0, 0, AccuracyMetric::top1);
}

GenerationJob small_job(const std::filesystem::path& out, std::size_t classes, std::size_t per) {
  GenerationJob job{toy_spec(classes)};
  job.images_per_class = per;
  job.guidance.resolution = 8;
  job.seed = 123;
  job.out_dir = out;
  return job;
}

TEST(GenerateImages, ThousandPerClassOverTenClasses) {
  testing::TempDir tmp;
  StubBackend stub;
  auto res = generate_images(small_job(tmp.path(), 10, 1000), stub);
  EXPECT_EQ(res.manifest.size(), 10000u);
  EXPECT_EQ(res.generated, 10000u);
  for (auto n : res.manifest.class_counts()) EXPECT_EQ(n, 1000u);
  auto reloaded = load_manifest(tmp / kGenerationLog);
  EXPECT_EQ(reloaded.size(), 10000u);
}

TEST(GenerateImages, ProvenanceAndLayout) {
  testing::TempDir tmp;
  StubBackend stub;
  auto job = small_job(tmp.path(), 2, 3);
  auto res = generate_images(job, stub);
  const auto& r = res.manifest.records()[4];
  EXPECT_EQ(r.path.generic_string(), "toy/1_c1/000001.png");
  ASSERT_TRUE(r.provenance);
  EXPECT_EQ(r.provenance->seed, image_seed(123, {1, 1}));
  EXPECT_EQ(r.provenance->guidance_scale, 3.5);
  EXPECT_EQ(r.provenance->backend_id, "stub-v1");
  EXPECT_GE(r.provenance->template_id, 1);
  EXPECT_NE(r.provenance->prompt.find("c1"), std::string::npos);
  EXPECT_EQ(r.provenance->sha256, sha256_file(tmp / r.path.string()));
  EXPECT_NO_THROW(load_manifest(tmp / kGenerationLog, {.verify_hashes = true}));
}

TEST(GenerateImages, RegenerationIsByteIdentical) {
  testing::TempDir a, b;
  StubBackend stub;
  auto ra = generate_images(small_job(a.path(), 3, 4), stub);
  auto rb = generate_images(small_job(b.path(), 3, 4), stub);
  EXPECT_EQ(ra.manifest.records(), rb.manifest.records());
}

TEST(GenerateImages, ResumeAfterInterruption) {
  testing::TempDir tmp;
  StubBackend stub;
  auto job = small_job(tmp.path(), 4, 25);
  std::size_t calls = 0;
  job.should_stop = [&] { return calls++ >= 50; };
  auto first = generate_images(job, stub);
  EXPECT_TRUE(first.interrupted);
  EXPECT_EQ(first.manifest.size(), 50u);

  // Simulate a torn append from the killed process.
  {
    std::ofstream out(tmp / kGenerationLog, std::ios::app | std::ios::binary);
    out << "[\"toy/3_c3/000099.png\",3,\"synth";
  }
  job.should_stop = nullptr;
  auto second = generate_images(job, stub);
  EXPECT_FALSE(second.interrupted);
  EXPECT_EQ(second.resumed, 50u);
  EXPECT_EQ(second.generated, 50u);

  auto log = load_manifest(tmp / kGenerationLog);
  std::set<std::pair<std::size_t, std::size_t>> keys;
  for (const auto& r : log.records()) {
    auto k = key_from_path(r.path);
    ASSERT_TRUE(k);
    EXPECT_TRUE(keys.insert({k->class_index, k->image_index}).second) << "duplicate key";
  }
  EXPECT_EQ(keys.size(), 100u);

  // Idempotent: a completed job generates nothing.
  auto third = generate_images(job, stub);
  EXPECT_EQ(third.generated, 0u);
  EXPECT_EQ(third.manifest, second.manifest);
}

TEST(GenerateImages, SmallerTargetReusesPrefix) {
  testing::TempDir tmp;
  StubBackend stub;
  generate_images(small_job(tmp.path(), 2, 10), stub);
  auto res = generate_images(small_job(tmp.path(), 2, 4), stub);
  EXPECT_EQ(res.generated, 0u);
  EXPECT_EQ(res.manifest.size(), 8u);
}

class FlakyBackend : public GeneratorBackend {
 public:
  std::string id() const override { return "flaky"; }
  bool deterministic() const override { return true; }
  std::vector<std::uint8_t> generate(const GenerationRequest& r) override {
    if (r.class_index == 1 && r.seed % 2 == 0) throw BackendError("permanent");
    if (attempts_[r.seed]++ == 0) throw BackendError("transient");
    return stub_.generate(r);
  }

 private:
  std::map<std::uint64_t, int> attempts_;
  StubBackend stub_;
};

TEST(GenerateImages, RetriesThenReportsFailedKeys) {
  testing::TempDir tmp;
  FlakyBackend flaky;
  auto job = small_job(tmp.path(), 2, 6);
  std::vector<ImageKey> expected;
  for (std::size_t i = 0; i < 6; ++i)
    if (image_seed(job.seed, {1, i}) % 2 == 0) expected.push_back({1, i});
  ASSERT_FALSE(expected.empty());
  try {
    generate_images(job, flaky);
    FAIL() << "expected GenerationFailed";
  } catch (const GenerationFailed& e) {
    EXPECT_EQ(e.keys(), expected);
  }
  EXPECT_EQ(load_manifest(tmp / kGenerationLog).size(), 12u - expected.size());
}

TEST(GenerateImages, WriteFailureAbortsWithLogIntact) {
  testing::TempDir tmp;
  StubBackend stub;
  auto job = small_job(tmp.path(), 2, 3);
  // A regular file where class 1's directory should go makes every write there fail.
  std::filesystem::create_directories(tmp / "toy");
  std::ofstream(tmp / "toy" / "1_c1") << "x";
  EXPECT_THROW(generate_images(job, stub), IoError);
  auto log = load_manifest(tmp / kGenerationLog);
  EXPECT_EQ(log.size(), 3u);
}

TEST(GenerateImages, StylePromptMode) {
  testing::TempDir tmp;
  StubBackend stub;
  auto job = small_job(tmp.path(), 2, 2);
  job.prompt_mode = StylePrompts{"<toy-style>"};
  auto res = generate_images(job, stub);
  for (const auto& r : res.manifest.records()) {
    EXPECT_EQ(r.provenance->template_id, kStylePromptTemplateId);
    EXPECT_EQ(r.provenance->prompt,
              "A c" + std::to_string(r.class_index) + " photo in the style of <toy-style>");
  }
}

TEST(GenerateImages, ParallelWorkersMatchSerialOutput) {
  testing::TempDir a, b;
  StubBackend stub;
  auto serial = small_job(a.path(), 3, 8);
  auto parallel = small_job(b.path(), 3, 8);
  parallel.parallelism = 4;
  EXPECT_EQ(generate_images(serial, stub).manifest.records(),
            generate_images(parallel, stub).manifest.records());
}

TEST(ToyDiffusionBackend, DeterministicAndUsesToken) {
  auto d = std::make_shared<dsi::ToyDenoiser>();
  StubBackend stub;
  std::vector<dsi::ToyDenoiser::TrainingPair> pairs;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::uint64_t i = 0; i < 10; ++i)
      pairs.push_back({d->encode(stub.render(c, i, 3.5, 16)),
                       d->embed_prompt("a photo of a c" + std::to_string(c) + ".", "", nullptr)});
  auto losses = d->fit(pairs, {.steps = 300});
  EXPECT_LT(losses.back(), losses.front());
  auto tok = std::make_shared<dsi::StyleToken>();
  tok->embedding.assign(d->conditioning_width(), 0.3);
  ToyDiffusionBackend plain(d), styled(d, tok);
  GenerationRequest r{"A c0 photo in the style of S*", 0, "c0", {}, 9};
  r.guidance.resolution = 16;
  r.guidance.steps = 10;
  EXPECT_EQ(plain.generate(r), plain.generate(r));
  EXPECT_NE(plain.generate(r), styled.generate(r));
}

class RemoteServer {
 public:
  RemoteServer() {
    server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      last_auth = req.get_header_value("Authorization");
      last_body = req.body;
      if (fail_first && calls == 1) {
        res.status = 503;
        res.set_content("busy", "text/plain");
        return;
      }
      auto j = nlohmann::json::parse(req.body);
      Image img(j["width"].get<int>(), j["height"].get<int>());
      auto png = encode_png(img);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~RemoteServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/generate"; }

  std::atomic<int> calls{0};
  bool fail_first = false;
  std::string last_auth;
  std::string last_body;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(RemoteBackend, SendsContractFieldsAndAuth) {
  RemoteServer server;
  ::setenv("BT_TEST_TOKEN", "sekret", 1);
  RemoteBackend remote({.endpoint = server.endpoint(), .token_env = "BT_TEST_TOKEN",
                        .timeout = std::chrono::milliseconds(5000)});
  EXPECT_FALSE(remote.deterministic());
  GenerationRequest r{"a photo of a cat.", 0, "cat", {}, 42};
  r.guidance.resolution = 24;
  auto bytes = remote.generate(r);
  EXPECT_EQ(decode_png(bytes).width, 24);
  EXPECT_EQ(server.last_auth, "Bearer sekret");
  auto body = nlohmann::json::parse(server.last_body);
  EXPECT_EQ(body["prompt"], "a photo of a cat.");
  EXPECT_EQ(body["guidance_scale"], 3.5);
  EXPECT_EQ(body["steps"], 50);
  EXPECT_EQ(body["width"], 24);
  EXPECT_EQ(body["height"], 24);
  EXPECT_EQ(body["seed"], 42);
  EXPECT_FALSE(body.contains("negative_prompt"));
}

TEST(RemoteBackend, JobRetriesTransientHttpErrors) {
  RemoteServer server;
  server.fail_first = true;
  testing::TempDir tmp;
  RemoteBackend remote({.endpoint = server.endpoint(), .token_env = "BT_UNSET_TOKEN_VAR"});
  auto res = generate_images(small_job(tmp.path(), 1, 2), remote);
  EXPECT_EQ(res.manifest.size(), 2u);
  EXPECT_EQ(server.calls.load(), 3);
  EXPECT_EQ(res.manifest.records()[0].provenance->backend_id, "remote");
  EXPECT_TRUE(server.last_auth.empty());
}

TEST(RemoteBackend, UnreachableIsBackendError) {
  RemoteBackend remote({.endpoint = "http://127.0.0.1:1/generate",
                        .timeout = std::chrono::milliseconds(500)});
  GenerationRequest r{"x", 0, "x", {}, 1};
  EXPECT_THROW(remote.generate(r), BackendError);
  EXPECT_THROW(RemoteBackend({.endpoint = "not a url"}), ValidationError);
}

}  // namespace
}  // namespace bt::genesis
