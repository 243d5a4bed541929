#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "bt/genesis/backend.hpp"
#include "bt/transfer/pipeline.hpp"

namespace bt::testing {

/// A small image-classification task built from the stub backend: real
/// images use the default look, synthetic ones a shifted and tinted look
/// with the same class geometry, and the "pretrained" backbone is fitted on
/// a disjoint set of stub classes.
struct ToyTaskOptions {
  std::size_t n_classes = 6;
  std::size_t real_per_class = 5;
  std::size_t test_per_class = 30;
  std::size_t synthetic_per_class = 40;
  int resolution = 20;
  int input_size = 16;
  double real_guidance = 1.0;
  double synthetic_guidance = 3.5;
  genesis::StubStyle synthetic_style{0.08, -0.06, 12, -8, 4, 40.0, 0.30, 0.12};
  std::size_t source_classes = 8;
  std::size_t source_per_class = 40;
  int source_epochs = 15;
};

struct ToyTask {
  DatasetSpec dataset;
  transfer::ImageSource test;
  transfer::ImageSource synthetic;
  transfer::BackboneHandle pretrained;
};

/// Writes the test and synthetic images under `dir` and fits the backbone.
ToyTask make_toy_task(const std::filesystem::path& dir, const ToyTaskOptions& options);

/// A real few-shot train split; `seed` varies the draw.
transfer::ImageSource toy_real_split(const std::filesystem::path& dir, const ToyTask& task,
                                     const ToyTaskOptions& options, std::uint64_t seed);

/// Stage settings used for every pipeline of the toy experiment.
transfer::StageConfig toy_stage_config(std::uint64_t seed);

}  // namespace bt::testing
