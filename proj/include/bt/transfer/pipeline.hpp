#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bt/core/manifest.hpp"
#include "bt/transfer/train.hpp"

namespace bt::transfer {

enum class PipelineKind { vanilla, mixed, bridged, bridged_pp };

std::string_view to_string(PipelineKind kind);
/// Accepts "vanilla", "mixed", "bridged", "bridged++" and "bridged_pp".
PipelineKind parse_pipeline_kind(std::string_view s);

/// A manifest plus the directory its relative paths resolve against.
struct ImageSource {
  SplitManifest manifest;
  std::filesystem::path root;
};

struct PipelineConfig {
  PipelineKind kind = PipelineKind::vanilla;
  std::optional<StageConfig> stage1;  // synthetic stage
  StageConfig stage2;                 // real stage (the only stage for vanilla / mixed)
  std::optional<ImageSource> synthetic;
  ImageSource real;
  std::optional<ImageSource> eval;
  /// Mixed transfer only: if set, the synthetic share of the union is
  /// subsampled to this fraction. Off by default (plain union).
  std::optional<double> mixed_synthetic_fraction;

  /// Throws ConfigError when the kind's structural requirements fail.
  void validate() const;

  /// Stock config for a kind: bridged/bridged++ get a stage-1 copy of stage2;
  /// bridged++ adds stage-1 Mixup (alpha 0.2) and stage-2 head reinit.
  static PipelineConfig make(PipelineKind kind, StageConfig stage, ImageSource real,
                             std::optional<ImageSource> synthetic = std::nullopt,
                             std::optional<ImageSource> eval = std::nullopt);
};

struct StageRecord {
  std::string name;  // "stage1" / "stage2"
  std::size_t train_size = 0;
  std::size_t real_images = 0;
  std::size_t synthetic_images = 0;
  bool head_reinitialized = false;
  std::string extractor_digest_before, extractor_digest_after;
  std::string head_digest_before, head_digest_after;
  metrics::ConvergenceTrace trace;
};

struct PipelineRun {
  PipelineKind kind = PipelineKind::vanilla;
  BackboneHandle model;
  std::vector<StageRecord> stages;
  std::optional<double> final_accuracy;  // absent without an eval set
  AccuracyMetric metric = AccuracyMetric::top1;
};

/// Runs the pipeline starting from `pretrained` (copied, not modified).
/// The first stage always gets a fresh head sized for the target dataset.
PipelineRun run_pipeline(const PipelineConfig& config, const BackboneHandle& pretrained);

struct LrTrial {
  double learning_rate = 0;
  std::optional<double> score;  // mean over seeds; absent if every seed diverged
  std::string diagnostics;
};

struct LrSelection {
  double learning_rate = 0;
  std::vector<LrTrial> trials;  // empty for a one-element grid
};

/// Returns the grid value with the best mean score over `seeds`, ties to the
/// larger LR. A singleton grid performs no runs. Throws DivergenceError with
/// per-LR diagnostics when every run diverges.
LrSelection select_lr(const std::vector<double>& grid, const std::vector<std::uint64_t>& seeds,
                      const std::function<double(double lr, std::uint64_t seed)>& run);

enum class LrSelectOn { val, train_holdout };

/// Scores one pipeline config for select_lr: final eval accuracy on the val
/// set, or on a class-stratified 20% holdout of the real train manifest.
std::function<double(double, std::uint64_t)> pipeline_lr_runner(const PipelineConfig& config,
                                                                const BackboneHandle& pretrained,
                                                                LrSelectOn on);

/// Writes config.json, stageN_metrics.csv, final.json and model.btm.
void write_run_dir(const std::filesystem::path& dir, const PipelineRun& run,
                   const std::string& config_json);

}  // namespace bt::transfer
