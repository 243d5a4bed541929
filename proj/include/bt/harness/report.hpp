#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bt/harness/sweep.hpp"
#include "bt/transfer/pipeline.hpp"

namespace bt::harness {

enum class ReportKind { table, line, bar, radar, contact_sheet };

std::string_view to_string(ReportKind kind);
ReportKind parse_report_kind(std::string_view s);

/// One column of a contact sheet: a labelled image set (e.g. a prompt mode).
struct ContactColumn {
  std::string label;
  transfer::ImageSource source;
};

struct ReportOptions {
  ReportKind kind = ReportKind::table;
  /// Table rows.
  std::string row_key = "pipeline";
  /// Table columns, bar groups, radar spokes; line charts get one panel each.
  std::string column_key = "dataset";
  /// Line-chart x axis (numeric coordinate).
  std::string x_key = kVolumeAxis;
  /// Line / bar / radar series.
  std::string series_key = "pipeline";
  /// Allow different metric kinds across columns (each column must still be
  /// homogeneous); columns are then labelled with their metric.
  bool per_column_metrics = false;
  std::string title;
  /// Keep only records whose coordinate `key` renders as the value.
  std::map<std::string, std::string> where;
  /// Explicit value order per key; unlisted values follow in default order.
  std::map<std::string, std::vector<std::string>> order;

  std::vector<ContactColumn> contact_columns;
  std::size_t contact_max_classes = 10;
  std::size_t contact_per_cell = 4;
  int contact_thumb = 64;
};

/// Mean and population std (in accuracy percent) over seeds.
struct CellStats {
  double mean = 0;
  double std = 0;
  std::size_t n = 0;
  std::string metric;
};

/// "85.2±0.0".
std::string format_cell(const CellStats& stats);

/// Groups ok records by the values of `keys`; the map key joins the
/// rendered values with '\x1f'. A group must hold seed replicates of one
/// configuration: differing config hashes raise ValidationError.
std::map<std::string, CellStats> aggregate(const std::vector<RunRecord>& records,
                                           const std::vector<std::string>& keys);

/// Renders a coordinate value for labels ("3.5", "vanilla").
std::string coordinate_label(const nlohmann::json& value);

/// Writes the report files into `out_dir` and returns their paths:
/// table -> table.md + table.csv; line/bar/radar -> <kind>.svg + <kind>.png
/// (line: one pair per column value) + <kind>.csv; contact_sheet ->
/// contact_sheet.png. Output is a pure function of the inputs.
/// Throws ValidationError on mixed metric kinds or missing inputs.
std::vector<std::filesystem::path> emit_report(const std::vector<RunRecord>& records,
                                               const ReportOptions& options,
                                               const std::filesystem::path& out_dir);

}  // namespace bt::harness
