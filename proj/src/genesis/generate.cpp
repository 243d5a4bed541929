#include "bt/genesis/generate.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "bt/core/errors.hpp"
#include "bt/core/hash.hpp"
#include "bt/core/rng.hpp"

namespace bt::genesis {

std::uint64_t image_seed(std::uint64_t job_seed, ImageKey key) {
  return derive_seed(job_seed, {key.class_index, key.image_index});
}

namespace {

std::string sanitize(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    out.push_back(std::isalnum(u) || c == '-' || c == '_' || c == '.' ? c : '_');
  }
  return out;
}

std::optional<std::size_t> leading_number(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr == s.data()) return std::nullopt;
  return v;
}

}  // namespace

std::filesystem::path image_relative_path(const DatasetSpec& dataset, ImageKey key) {
  char file[32];
  std::snprintf(file, sizeof file, "%06zu.png", key.image_index);
  return std::filesystem::path(sanitize(dataset.name())) /
         (std::to_string(key.class_index) + "_" + sanitize(dataset.class_name(key.class_index))) /
         file;
}

std::optional<ImageKey> key_from_path(const std::filesystem::path& rel) {
  const auto stem = rel.stem().string();
  const auto dir = rel.parent_path().filename().string();
  auto idx = leading_number(stem);
  auto cls = leading_number(dir);
  if (!idx || !cls || dir.find('_') == std::string::npos) return std::nullopt;
  return ImageKey{*cls, *idx};
}

GenerationFailed::GenerationFailed(std::vector<ImageKey> keys, const std::string& last_error)
    : BackendError([&] {
        std::string msg = std::to_string(keys.size()) + " image(s) failed after retries:";
        for (std::size_t i = 0; i < keys.size() && i < 20; ++i) {
          msg += " (" + std::to_string(keys[i].class_index) + "," +
                 std::to_string(keys[i].image_index) + ")";
        }
        if (keys.size() > 20) msg += " ...";
        return msg + "; last error: " + last_error;
      }()),
      keys_(std::move(keys)) {}

prompts::SampledPrompt prompt_for(const GenerationJob& job, ImageKey key) {
  const auto& name = job.dataset.class_name(key.class_index);
  if (const auto* style = std::get_if<StylePrompts>(&job.prompt_mode)) {
    return {prompts::render_style_prompt(name, style->token_name), kStylePromptTemplateId};
  }
  const auto& tmpl = std::get<TemplatePrompts>(job.prompt_mode);
  return prompts::sample_prompt(name, derive_seed(job.seed, {key.class_index, key.image_index, 0x9e}),
                                *tmpl.bank);
}

GenerationResult generate_images(const GenerationJob& job, GeneratorBackend& backend) {
  if (job.images_per_class < 1) throw ValidationError("images_per_class must be >= 1");
  if (job.out_dir.empty()) throw ValidationError("generation needs an output directory");
  if (job.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
  job.guidance.validate();

  std::filesystem::create_directories(job.out_dir);
  const auto log_path = job.out_dir / kGenerationLog;

  // Resume: scan the log once; rewrite it cleanly so appends never follow a torn line.
  std::map<ImageKey, ImageRecord> done;
  if (std::filesystem::exists(log_path)) {
    auto prior = load_manifest(log_path, {.tolerate_torn_tail = true});
    if (!(prior.dataset() == job.dataset)) {
      throw ConfigError("existing log in " + job.out_dir.string() + " belongs to dataset '" +
                        prior.dataset().name() + "'");
    }
    for (const auto& r : prior.records()) {
      if (auto key = key_from_path(r.path)) done.emplace(*key, r);
    }
    persist_manifest(prior, log_path);
  } else {
    persist_manifest(SplitManifest(job.dataset, ManifestRole::synthetic), log_path);
  }

  std::vector<ImageKey> pending;
  std::size_t resumed = 0;
  for (std::size_t c = 0; c < job.dataset.n_classes(); ++c) {
    for (std::size_t i = 0; i < job.images_per_class; ++i) {
      ImageKey key{c, i};
      if (done.contains(key)) {
        ++resumed;
      } else {
        pending.push_back(key);
      }
    }
  }

  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  if (!log) throw IoError("cannot append to " + log_path.string());

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  bool interrupted = false;
  std::size_t generated = 0;
  std::exception_ptr fatal;
  std::vector<ImageKey> failed;
  std::string last_error;

  auto worker = [&] {
    while (!stop.load()) {
      {
        std::lock_guard lock(mu);
        if (job.should_stop && job.should_stop()) {
          interrupted = true;
          stop = true;
          return;
        }
      }
      const auto slot = next.fetch_add(1);
      if (slot >= pending.size()) return;
      const auto key = pending[slot];
      const auto sampled = prompt_for(job, key);
      GenerationRequest request{sampled.prompt, key.class_index,
                                job.dataset.class_name(key.class_index), job.guidance,
                                image_seed(job.seed, key)};
      try {
        std::vector<std::uint8_t> bytes;
        for (std::size_t attempt = 1;; ++attempt) {
          try {
            bytes = backend.generate(request);
            break;
          } catch (const BackendError& e) {
            if (attempt >= job.max_attempts) {
              std::lock_guard lock(mu);
              failed.push_back(key);
              last_error = e.what();
              break;
            }
          }
        }
        if (bytes.empty()) continue;
        const auto rel = image_relative_path(job.dataset, key);
        write_file(job.out_dir / rel, bytes);
        ImageRecord record{rel, key.class_index, ImageOrigin::synthetic,
                           Provenance{sampled.prompt, sampled.template_id, request.seed,
                                      job.guidance.scale, backend.id(), sha256_hex(bytes)}};
        std::lock_guard lock(mu);
        log << manifest_record_line(record) << '\n';
        log.flush();
        if (!log) throw IoError("append to " + log_path.string() + " failed");
        done.emplace(key, std::move(record));
        ++generated;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        stop = true;
        return;
      }
    }
  };

  const auto threads = std::max<std::size_t>(
      1, std::min({job.parallelism, backend.max_parallelism(), pending.size()}));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  std::vector<ImageRecord> records;
  for (const auto& [key, record] : done) {
    if (key.image_index < job.images_per_class) records.push_back(record);
  }
  GenerationResult result{SplitManifest(job.dataset, ManifestRole::synthetic, std::move(records)),
                          generated, resumed, interrupted};
  if (!failed.empty()) {
    std::sort(failed.begin(), failed.end());
    throw GenerationFailed(std::move(failed), last_error);
  }
  return result;
}

}  // namespace bt::genesis
