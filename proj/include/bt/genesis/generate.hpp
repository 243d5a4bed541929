#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <string>
#include <vector>

#include "bt/core/dataset.hpp"
#include "bt/core/manifest.hpp"
#include "bt/genesis/backend.hpp"
#include "bt/prompts/prompts.hpp"

namespace bt::genesis {

/// Identifies one image slot of a job.
struct ImageKey {
  std::size_t class_index = 0;
  std::size_t image_index = 0;

  auto operator<=>(const ImageKey&) const = default;
};

/// Per-image seed, a pure function of (job seed, class, index).
std::uint64_t image_seed(std::uint64_t job_seed, ImageKey key);

/// "<dataset>/<class_index>_<class_name>/NNNNNN.png" relative to the run dir.
std::filesystem::path image_relative_path(const DatasetSpec& dataset, ImageKey key);

/// Parses the key back out of a relative path; nullopt if not one of ours.
std::optional<ImageKey> key_from_path(const std::filesystem::path& rel);

struct TemplatePrompts {
  const prompts::TemplateBank* bank = &prompts::TemplateBank::imagenet();
};

struct StylePrompts {
  /// Name spliced into "A {class} photo in the style of {token}".
  std::string token_name = std::string(prompts::kDefaultStyleToken);
};

struct GenerationJob {
  DatasetSpec dataset;
  std::size_t images_per_class = 1000;
  GuidanceConfig guidance = {};
  std::variant<TemplatePrompts, StylePrompts> prompt_mode = TemplatePrompts{};
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = {};
  /// Attempts per image before it is reported as failed.
  std::size_t max_attempts = 3;
  /// Worker threads; clamped to the backend's max_parallelism().
  std::size_t parallelism = 1;
  /// Polled before each image; returning true stops the job (simulated kill).
  std::function<bool()> should_stop = {};
};

struct GenerationResult {
  SplitManifest manifest;
  std::size_t generated = 0;
  std::size_t resumed = 0;
  bool interrupted = false;
};

/// Raised after the job drained: lists every key that exhausted its retries.
class GenerationFailed : public BackendError {
 public:
  GenerationFailed(std::vector<ImageKey> keys, const std::string& last_error);
  const std::vector<ImageKey>& keys() const noexcept { return keys_; }

 private:
  std::vector<ImageKey> keys_;
};

/// Name of the append-only manifest log inside `out_dir`.
inline constexpr const char* kGenerationLog = "manifest.jsonl";

/// Generates images_per_class x n_classes images into `job.out_dir`.
///
/// The manifest log is appended (and flushed) after each image lands on
/// disk. Re-running with the same out_dir skips keys already logged. Write
/// failures abort immediately with the log intact.
GenerationResult generate_images(const GenerationJob& job, GeneratorBackend& backend);

/// The (prompt, template id) used for one slot.
prompts::SampledPrompt prompt_for(const GenerationJob& job, ImageKey key);

}  // namespace bt::genesis
