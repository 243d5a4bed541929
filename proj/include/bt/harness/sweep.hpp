#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>
#include <json.hpp>

#include "bt/core/dataset.hpp"

namespace bt::harness {

inline constexpr const char* kVolumeAxis = "images_per_class";
inline constexpr const char* kGuidanceAxis = "guidance_scale";
inline constexpr const char* kShotsAxis = "shots";
inline constexpr const char* kArchitectureAxis = "architecture";

/// Paper defaults for the standard axes.
std::vector<nlohmann::json> default_axis_values(const std::string& axis);

/// A base config plus named axes; every point of the cross product is run
/// once per seed. Axis values override same-named keys of the base.
struct SweepSpec {
  std::string name = "sweep";
  nlohmann::json base = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  /// Throws ConfigError on empty axes/seeds or duplicate axis names.
  void validate() const;
  std::size_t cell_count() const;

  /// {"name", "base", "axes": [{"name", "values"}], "seeds"}. An axis given
  /// without "values" takes default_axis_values().
  static SweepSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Cell {
  nlohmann::json coordinates;  // axis -> value, in axis order
  nlohmann::json config;       // base with coordinates applied
  std::string config_hash;     // SHA-256 of the canonical config
  std::uint64_t seed = 0;

  /// "<hash prefix>_s<seed>"; the cell's run directory name.
  std::string id() const;
};

/// Cross product in axis order (last axis fastest), seeds innermost.
std::vector<Cell> expand_cells(const SweepSpec& spec);

struct CellOutcome {
  double final_accuracy = 0;
  AccuracyMetric metric = AccuracyMetric::top1;
  std::string traces;  // run directory, relative to the store
};

struct RunRecord {
  std::string config_hash;
  nlohmann::json coordinates;  // axes plus dataset / pipeline / architecture labels
  std::uint64_t seed = 0;
  std::optional<double> final_accuracy;
  std::string metric;
  std::string traces;
  double wall_clock_seconds = 0;
  std::string status = "ok";  // "ok" or "failed"
  std::string error;

  bool ok() const { return status == "ok"; }
  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

inline constexpr const char* kRecordsFile = "records.jsonl";
inline constexpr const char* kSummaryFile = "summary.txt";
inline constexpr const char* kSpecFile = "sweep.json";

/// Records in file order; a torn final line is ignored.
std::vector<RunRecord> load_records(const std::filesystem::path& store_dir);

using CellRunner = std::function<CellOutcome(const Cell& cell, const std::filesystem::path& cell_dir)>;

struct SweepOptions {
  std::size_t parallelism = 1;
};

struct SweepResult {
  std::vector<RunRecord> records;  // latest record per (hash, seed), cell order
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::vector<RunRecord> failures;
};

/// Runs every cell not already recorded as ok in `store_dir`, appending one
/// record per finished cell (serialized, flushed). A throwing cell is
/// recorded as failed and the sweep continues. Writes the spec snapshot and
/// a plain-text summary.
SweepResult run_sweep(const SweepSpec& spec, const std::filesystem::path& store_dir,
                      const CellRunner& runner, const SweepOptions& options = {});

}  // namespace bt::harness
