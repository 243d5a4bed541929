#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bt/core/dataset.hpp"

namespace bt {

enum class ImageOrigin { real, synthetic };
enum class ManifestRole { train, val, synthetic };

std::string_view to_string(ImageOrigin o);
std::string_view to_string(ManifestRole r);
ImageOrigin parse_origin(std::string_view s);
ManifestRole parse_role(std::string_view s);

/// Template id recorded for images generated from the style-token prompt.
inline constexpr int kStylePromptTemplateId = 0;

/// Where a synthetic image came from.
struct Provenance {
  std::string prompt;
  int template_id = 0;
  std::uint64_t seed = 0;
  double guidance_scale = 0.0;
  std::string backend_id;
  std::string sha256;

  bool operator==(const Provenance&) const = default;
};

struct ImageRecord {
  std::filesystem::path path;
  std::size_t class_index = 0;
  ImageOrigin origin = ImageOrigin::real;
  std::optional<Provenance> provenance;

  bool operator==(const ImageRecord&) const = default;
};

/// A list of image records belonging to one dataset and one role.
///
/// Construction validates that class indices are in range, paths are unique
/// and synthetic records carry complete provenance.
class SplitManifest {
 public:
  SplitManifest(DatasetSpec dataset, ManifestRole role, std::vector<ImageRecord> records = {});

  const DatasetSpec& dataset() const noexcept { return dataset_; }
  ManifestRole role() const noexcept { return role_; }
  const std::vector<ImageRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  /// Per-class record counts, indexed by class.
  std::vector<std::size_t> class_counts() const;

  /// Records of `other` appended after ours; both must share a dataset.
  SplitManifest merged_with(const SplitManifest& other, ManifestRole role) const;

  bool operator==(const SplitManifest&) const = default;

 private:
  DatasetSpec dataset_;
  ManifestRole role_;
  std::vector<ImageRecord> records_;
};

inline constexpr std::string_view kManifestSchema = "bt-manifest/1";

/// Header line of a manifest file.
std::string manifest_header_line(const DatasetSpec& dataset, ManifestRole role);
/// One record line (no trailing newline).
std::string manifest_record_line(const ImageRecord& record);
/// Parses a record line; `line_no` is used for error reporting.
ImageRecord parse_manifest_record(std::string_view line, const std::string& file,
                                  std::size_t line_no);

/// Writes header + one line per record. Throws IoError on write failure.
void persist_manifest(const SplitManifest& manifest, const std::filesystem::path& path);

struct LoadOptions {
  /// Re-hash every record that carries a sha256 and compare.
  bool verify_hashes = false;
  /// Drop a final line lacking its newline terminator (torn append).
  bool tolerate_torn_tail = false;
};

/// Relative record paths are resolved against the manifest's directory when
/// verifying hashes. Throws ParseError with the 1-based line number.
SplitManifest load_manifest(const std::filesystem::path& path, const LoadOptions& options = {});

struct FewShotOptions {
  bool allow_truncation = false;
};

/// Exactly k records per class drawn uniformly without replacement.
/// Deterministic in (manifest, k, seed); output keeps class-major order.
SplitManifest sample_few_shot(const SplitManifest& manifest, std::size_t k, std::uint64_t seed,
                              const FewShotOptions& options = {});

/// Class-stratified split: the first returned manifest keeps
/// `1 - holdout_fraction` of every class, the second the rest.
std::pair<SplitManifest, SplitManifest> stratified_holdout(const SplitManifest& manifest,
                                                           double holdout_fraction,
                                                           std::uint64_t seed);

}  // namespace bt
