#include "toy_task.hpp"

#include "bt/core/rng.hpp"
#include "bt/genesis/generate.hpp"

namespace bt::testing {

namespace {

std::vector<std::string> names(std::size_t n, const std::string& prefix) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(10 + i));
  return out;
}

transfer::ImageSource render_split(const std::filesystem::path& dir, const std::string& split,
                                   const DatasetSpec& dataset, std::size_t per_class,
                                   std::size_t class_offset, double guidance, int resolution,
                                   std::uint64_t seed, ManifestRole role) {
  const genesis::StubBackend stub;
  std::vector<ImageRecord> records;
  for (std::size_t c = 0; c < dataset.n_classes(); ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::string rel = split + "/" + std::to_string(c) + "_" + std::to_string(i) + ".png";
      const auto img = stub.render(c + class_offset, derive_seed(seed, {c, i}), guidance, resolution);
      write_file(dir / rel, encode_png(img));
      records.push_back({rel, c, ImageOrigin::real, std::nullopt});
    }
  return {SplitManifest(dataset, role, std::move(records)), dir};
}

}  // namespace

transfer::StageConfig toy_stage_config(std::uint64_t seed) {
  transfer::StageConfig c;
  c.learning_rate = 0.01;
  c.epochs = 30;
  c.batch_size = 16;
  c.augment_min_scale = 0.5;
  c.seed = seed;
  return c;
}

ToyTask make_toy_task(const std::filesystem::path& dir, const ToyTaskOptions& o) {
  const auto dataset = DatasetSpec::custom("toy", names(o.n_classes, "c"));
  auto test = render_split(dir, "test", dataset, o.test_per_class, 0, o.real_guidance,
                           o.resolution, 0x7E57, ManifestRole::val);

  genesis::StubBackend shifted(o.synthetic_style, "stub-shifted");
  genesis::GenerationJob job{dataset, o.synthetic_per_class, {}, genesis::StylePrompts{}, 0x5A,
                             dir / "synthetic"};
  job.guidance.scale = o.synthetic_guidance;
  job.guidance.resolution = o.resolution;
  auto gen = genesis::generate_images(job, shifted);

  // Source task: disjoint stub classes, used only to fit the extractor.
  const auto source_ds = DatasetSpec::custom("toy_source", names(o.source_classes, "s"));
  auto source = render_split(dir, "source", source_ds, o.source_per_class, o.n_classes,
                             o.real_guidance, o.resolution, 0x5C, ManifestRole::train);
  auto backbone = transfer::BackboneRegistry::builtin().build("tiny_cnn", o.source_classes,
                                                              o.input_size, 0xB0);
  auto cfg = toy_stage_config(0xB1);
  cfg.epochs = o.source_epochs;
  cfg.learning_rate = 0.01;
  transfer::fine_tune_stage(backbone, transfer::load_images(source.manifest, dir), std::nullopt, cfg);
  backbone.pretrained_source = "toy_source";

  return {dataset, std::move(test), {gen.manifest, dir / "synthetic"}, std::move(backbone)};
}

transfer::ImageSource toy_real_split(const std::filesystem::path& dir, const ToyTask& task,
                                     const ToyTaskOptions& o, std::uint64_t seed) {
  return render_split(dir, "real_" + std::to_string(seed), task.dataset, o.real_per_class, 0,
                      o.real_guidance, o.resolution, derive_seed(seed, {1}), ManifestRole::train);
}

}  // namespace bt::testing
