#include "bt/core/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bt/core/errors.hpp"
#include "bt/core/hash.hpp"
#include "bt/core/rng.hpp"

namespace bt {

using nlohmann::json;

std::string_view to_string(ImageOrigin o) { return o == ImageOrigin::real ? "real" : "synthetic"; }

std::string_view to_string(ManifestRole r) {
  switch (r) {
    case ManifestRole::train: return "train";
    case ManifestRole::val: return "val";
    case ManifestRole::synthetic: return "synthetic";
  }
  return "?";
}

ImageOrigin parse_origin(std::string_view s) {
  if (s == "real") return ImageOrigin::real;
  if (s == "synthetic") return ImageOrigin::synthetic;
  throw ValidationError("unknown image origin '" + std::string(s) + "'");
}

ManifestRole parse_role(std::string_view s) {
  if (s == "train") return ManifestRole::train;
  if (s == "val") return ManifestRole::val;
  if (s == "synthetic") return ManifestRole::synthetic;
  throw ValidationError("unknown manifest role '" + std::string(s) + "'");
}

SplitManifest::SplitManifest(DatasetSpec dataset, ManifestRole role,
                             std::vector<ImageRecord> records)
    : dataset_(std::move(dataset)), role_(role), records_(std::move(records)) {
  std::set<std::string> paths;
  for (const auto& r : records_) {
    if (r.class_index >= dataset_.n_classes()) {
      throw ValidationError("record " + r.path.string() + " has class index " +
                            std::to_string(r.class_index) + " outside [0, " +
                            std::to_string(dataset_.n_classes()) + ")");
    }
    if (r.origin == ImageOrigin::synthetic) {
      const auto& p = r.provenance;
      if (!p || p->prompt.empty() || p->backend_id.empty() || p->sha256.empty()) {
        throw ValidationError("synthetic record " + r.path.string() +
                              " lacks complete provenance");
      }
    }
    if (!paths.insert(r.path.generic_string()).second) {
      throw ValidationError("duplicate path in manifest: " + r.path.string());
    }
  }
}

std::vector<std::size_t> SplitManifest::class_counts() const {
  std::vector<std::size_t> counts(dataset_.n_classes(), 0);
  for (const auto& r : records_) ++counts[r.class_index];
  return counts;
}

SplitManifest SplitManifest::merged_with(const SplitManifest& other, ManifestRole role) const {
  if (!(other.dataset_ == dataset_)) {
    throw ValidationError("cannot merge manifests of datasets '" + dataset_.name() + "' and '" +
                          other.dataset_.name() + "'");
  }
  auto records = records_;
  records.insert(records.end(), other.records_.begin(), other.records_.end());
  return SplitManifest(dataset_, role, std::move(records));
}

namespace {

json dataset_to_json(const DatasetSpec& d) {
  return json{{"name", d.name()},
              {"class_names", d.class_names()},
              {"train_size", d.train_size()},
              {"val_size", d.val_size()},
              {"metric", std::string(to_string(d.metric()))}};
}

DatasetSpec dataset_from_json(const json& j) {
  return DatasetSpec(j.at("name").get<std::string>(),
                     j.at("class_names").get<std::vector<std::string>>(),
                     j.at("train_size").get<std::size_t>(), j.at("val_size").get<std::size_t>(),
                     parse_metric(j.at("metric").get<std::string>()));
}

constexpr std::size_t kRecordFields = 9;

}  // namespace

std::string manifest_header_line(const DatasetSpec& dataset, ManifestRole role) {
  json h{{"schema", std::string(kManifestSchema)},
         {"dataset", dataset_to_json(dataset)},
         {"role", std::string(to_string(role))}};
  return h.dump();
}

std::string manifest_record_line(const ImageRecord& r) {
  json row = json::array();
  row.push_back(r.path.generic_string());
  row.push_back(r.class_index);
  row.push_back(std::string(to_string(r.origin)));
  if (r.provenance) {
    const auto& p = *r.provenance;
    row.push_back(p.prompt);
    row.push_back(p.template_id);
    row.push_back(p.seed);
    row.push_back(p.guidance_scale);
    row.push_back(p.backend_id);
    row.push_back(p.sha256);
  } else {
    for (int i = 0; i < 6; ++i) row.push_back(nullptr);
  }
  return row.dump();
}

ImageRecord parse_manifest_record(std::string_view line, const std::string& file,
                                  std::size_t line_no) {
  json row;
  try {
    row = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(file, line_no, std::string("invalid record: ") + e.what());
  }
  if (!row.is_array() || row.size() != kRecordFields) {
    throw ParseError(file, line_no,
                     "record must be an array of " + std::to_string(kRecordFields) + " fields");
  }
  try {
    ImageRecord r;
    r.path = row[0].get<std::string>();
    if (!row[1].is_number_unsigned()) throw ParseError(file, line_no, "class_index must be unsigned");
    r.class_index = row[1].get<std::size_t>();
    r.origin = parse_origin(row[2].get<std::string>());
    std::size_t nulls = 0;
    for (std::size_t i = 3; i < kRecordFields; ++i) nulls += row[i].is_null() ? 1 : 0;
    if (nulls == 0) {
      Provenance p;
      p.prompt = row[3].get<std::string>();
      p.template_id = row[4].get<int>();
      p.seed = row[5].get<std::uint64_t>();
      p.guidance_scale = row[6].get<double>();
      p.backend_id = row[7].get<std::string>();
      p.sha256 = row[8].get<std::string>();
      r.provenance = std::move(p);
    } else if (nulls != kRecordFields - 3) {
      throw ParseError(file, line_no, "provenance fields must be all set or all null");
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(file, line_no, std::string("bad field type: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(file, line_no, e.what());
  }
}

void persist_manifest(const SplitManifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << manifest_header_line(manifest.dataset(), manifest.role()) << '\n';
  for (const auto& r : manifest.records()) out << manifest_record_line(r) << '\n';
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

SplitManifest load_manifest(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const std::string file = path.string();

  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      if (!options.tolerate_torn_tail) lines.emplace_back(text.data() + start, text.size() - start);
      break;
    }
    lines.emplace_back(text.data() + start, nl - start);
    start = nl + 1;
  }
  if (lines.empty()) throw ParseError(file, 1, "missing header line");

  json header;
  try {
    header = json::parse(lines[0]);
  } catch (const json::parse_error& e) {
    throw ParseError(file, 1, std::string("invalid header: ") + e.what());
  }
  if (!header.is_object() || header.value("schema", "") != kManifestSchema) {
    throw ParseError(file, 1, "expected schema " + std::string(kManifestSchema));
  }
  DatasetSpec dataset = [&] {
    try {
      return dataset_from_json(header.at("dataset"));
    } catch (const std::exception& e) {
      throw ParseError(file, 1, std::string("bad dataset header: ") + e.what());
    }
  }();
  ManifestRole role = [&] {
    try {
      return parse_role(header.at("role").get<std::string>());
    } catch (const std::exception& e) {
      throw ParseError(file, 1, std::string("bad role: ") + e.what());
    }
  }();

  std::vector<ImageRecord> records;
  records.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto line = lines[i];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    records.push_back(parse_manifest_record(line, file, i + 1));
  }

  if (options.verify_hashes) {
    const auto base = path.parent_path();
    for (const auto& r : records) {
      if (!r.provenance) continue;
      auto p = r.path.is_absolute() ? r.path : base / r.path;
      auto actual = sha256_file(p);
      if (actual != r.provenance->sha256) {
        throw IntegrityError("hash mismatch for " + p.string() + ": recorded " +
                             r.provenance->sha256 + ", actual " + actual);
      }
    }
  }
  return SplitManifest(std::move(dataset), role, std::move(records));
}

SplitManifest sample_few_shot(const SplitManifest& manifest, std::size_t k, std::uint64_t seed,
                              const FewShotOptions& options) {
  if (k == 0) throw ValidationError("few-shot k must be positive");
  if (manifest.role() != ManifestRole::train) {
    throw ValidationError("few-shot sampling requires a train manifest");
  }
  const auto& ds = manifest.dataset();
  std::vector<std::vector<std::size_t>> by_class(ds.n_classes());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    by_class[manifest.records()[i].class_index].push_back(i);
  }
  std::vector<ImageRecord> out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < k && !options.allow_truncation) {
      throw InsufficientDataError(ds.class_name(c), idx.size(), k);
    }
    std::mt19937_64 rng(derive_seed(seed, {c}));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.push_back(manifest.records()[i]);
  }
  return SplitManifest(ds, ManifestRole::train, std::move(out));
}

std::pair<SplitManifest, SplitManifest> stratified_holdout(const SplitManifest& manifest,
                                                           double holdout_fraction,
                                                           std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ValidationError("holdout fraction must be in (0, 1)");
  }
  const auto& ds = manifest.dataset();
  std::vector<std::vector<std::size_t>> by_class(ds.n_classes());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    by_class[manifest.records()[i].class_index].push_back(i);
  }
  std::vector<bool> held(manifest.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 2) continue;
    std::mt19937_64 rng(derive_seed(seed, {c, 0x401du}));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * idx.size()));
    n_hold = std::clamp<std::size_t>(n_hold, 1, idx.size() - 1);
    for (std::size_t j = 0; j < n_hold; ++j) held[idx[j]] = true;
  }
  std::vector<ImageRecord> keep, hold;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    (held[i] ? hold : keep).push_back(manifest.records()[i]);
  }
  return {SplitManifest(ds, manifest.role(), std::move(keep)),
          SplitManifest(ds, ManifestRole::val, std::move(hold))};
}

}  // namespace bt
