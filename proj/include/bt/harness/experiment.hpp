#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bt/dsi/denoiser.hpp"
#include "bt/genesis/backend.hpp"
#include "bt/harness/sweep.hpp"
#include "bt/transfer/pipeline.hpp"

namespace bt::harness {

/// How synthetic images are produced when a run has no pre-built pool.
struct BackendSpec {
  std::string kind = "stub";  // "stub", "toy" or "remote"
  std::string endpoint;       // remote only
  std::string token_env = "BT_GENERATOR_TOKEN";
  /// toy only: style token file (optional) and the manifest the toy
  /// denoiser is fitted on.
  std::optional<std::filesystem::path> style_token;
  std::optional<std::filesystem::path> fit_manifest;
  std::uint64_t denoiser_seed = 0;
  std::size_t fit_steps = 3000;

  static BackendSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

/// Fits a ToyDenoiser on a manifest's images paired with "a photo of a {class}."
/// prompts. Deterministic in (manifest, seed, steps).
std::shared_ptr<dsi::ToyDenoiser> fitted_toy_denoiser(const transfer::ImageSource& source,
                                                      std::uint64_t seed, std::size_t steps);

std::unique_ptr<genesis::GeneratorBackend> make_backend(const BackendSpec& spec);

/// One pipeline run as a declarative key-value tree. Relative paths are
/// resolved against the directory of the file the tree came from.
///
///   pipeline, architecture, checkpoint, input_size,
///   real_manifest, eval_manifest, synthetic_manifest,
///   generator {backend..., prompt_mode, token_name, resolution, seed, cache},
///   shots, images_per_class, guidance_scale,
///   learning_rate, lr_grid, lr_select_on, lr_select_seeds,
///   epochs, batch_size, weight_decay, momentum, mixup_alpha,
///   augment_min_scale, mixed_synthetic_fraction
struct ExperimentConfig {
  transfer::PipelineKind pipeline = transfer::PipelineKind::vanilla;
  std::string architecture = "tiny_cnn";
  std::optional<std::filesystem::path> checkpoint;
  int input_size = 16;

  std::filesystem::path real_manifest;
  std::optional<std::filesystem::path> eval_manifest;
  std::optional<std::filesystem::path> synthetic_manifest;

  std::optional<BackendSpec> generator;
  std::string prompt_mode = "template";  // or "style"
  std::string token_name = "S*";
  int resolution = 32;
  std::uint64_t generation_seed = 0;
  std::filesystem::path generation_cache;

  std::optional<std::size_t> shots;
  std::optional<std::size_t> images_per_class;
  double guidance_scale = 2.0;

  std::optional<double> learning_rate;
  std::vector<double> lr_grid;
  transfer::LrSelectOn lr_select_on = transfer::LrSelectOn::val;
  std::vector<std::uint64_t> lr_select_seeds;

  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> weight_decay;
  std::optional<double> momentum;
  std::optional<double> mixup_alpha;
  std::optional<double> augment_min_scale;
  std::optional<double> mixed_synthetic_fraction;

  /// Throws ConfigError on unknown keys or ill-typed values.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

struct ExperimentResult {
  transfer::PipelineRun run;
  std::optional<transfer::LrSelection> lr_selection;
  double learning_rate = 0;
};

/// Loads the data, builds the backbone, optionally selects the LR, runs the
/// pipeline with `seed` and writes the run directory.
ExperimentResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                                const std::filesystem::path& run_dir,
                                const nlohmann::json& config_snapshot);

/// Sweep runner over experiment trees; cells without an eval set fail.
CellRunner experiment_cell_runner(std::filesystem::path base_dir);

}  // namespace bt::harness
