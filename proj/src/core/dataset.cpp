#include "bt/core/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "bt/core/errors.hpp"

namespace bt {

std::string_view to_string(AccuracyMetric m) {
  return m == AccuracyMetric::top1 ? "top1" : "mean_per_class";
}

AccuracyMetric parse_metric(std::string_view s) {
  if (s == "top1") return AccuracyMetric::top1;
  if (s == "mean_per_class") return AccuracyMetric::mean_per_class;
  throw ValidationError("unknown accuracy metric '" + std::string(s) + "'");
}

DatasetSpec::DatasetSpec(std::string name, std::vector<std::string> class_names,
                         std::size_t train_size, std::size_t val_size, AccuracyMetric metric)
    : name_(std::move(name)),
      class_names_(std::move(class_names)),
      train_size_(train_size),
      val_size_(val_size),
      metric_(metric) {
  if (name_.empty()) throw ValidationError("dataset name must be non-empty");
  if (class_names_.empty()) throw ValidationError("dataset '" + name_ + "' has no classes");
  std::set<std::string_view> seen;
  for (const auto& c : class_names_) {
    if (c.empty()) throw ValidationError("dataset '" + name_ + "' has an empty class name");
    if (!seen.insert(c).second) {
      throw ValidationError("dataset '" + name_ + "' has duplicate class name '" + c + "'");
    }
  }
}

DatasetSpec DatasetSpec::custom(std::string name, std::vector<std::string> class_names,
                                AccuracyMetric metric, std::size_t train_size,
                                std::size_t val_size) {
  std::sort(class_names.begin(), class_names.end());
  return DatasetSpec(std::move(name), std::move(class_names), train_size, val_size, metric);
}

const std::string& DatasetSpec::class_name(std::size_t index) const {
  if (index >= class_names_.size()) {
    throw ValidationError("class index " + std::to_string(index) + " out of range for '" + name_ +
                          "'");
  }
  return class_names_[index];
}

DatasetSpec DatasetSpec::with_class_names(std::vector<std::string> names) const {
  if (names.size() != class_names_.size()) {
    throw ValidationError("dataset '" + name_ + "' expects " + std::to_string(class_names_.size()) +
                          " class names, got " + std::to_string(names.size()));
  }
  return DatasetSpec(name_, std::move(names), train_size_, val_size_, metric_);
}

namespace {

std::vector<std::string> placeholder_names(std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "class_%03zu", i);
    out.emplace_back(buf);
  }
  return out;
}

struct Builtin {
  const char* name;
  std::size_t classes;
  std::size_t train;
  std::size_t val;
  AccuracyMetric metric;
};

// Class counts, split sizes and evaluation metric of the benchmark suite.
constexpr Builtin kBuiltins[] = {
    {"aircraft", 100, 6667, 3333, AccuracyMetric::mean_per_class},
    {"caltech101", 101, 3030, 5647, AccuracyMetric::mean_per_class},
    {"cars", 120, 8144, 8041, AccuracyMetric::top1},
    {"cub200", 200, 5994, 5794, AccuracyMetric::top1},
    {"dtd", 47, 3760, 1880, AccuracyMetric::top1},
    {"dogs", 120, 12000, 8580, AccuracyMetric::top1},
    {"flowers", 102, 2040, 6149, AccuracyMetric::mean_per_class},
    {"food", 101, 75750, 25250, AccuracyMetric::top1},
    {"pets", 37, 3680, 3669, AccuracyMetric::mean_per_class},
    {"sun397", 397, 19850, 19850, AccuracyMetric::top1},
};

}  // namespace

DatasetRegistry::DatasetRegistry() {
  for (const auto& b : kBuiltins) {
    specs_.emplace(b.name,
                   DatasetSpec(b.name, placeholder_names(b.classes), b.train, b.val, b.metric));
  }
}

void DatasetRegistry::add(DatasetSpec spec) {
  auto key = spec.name();
  specs_.insert_or_assign(std::move(key), std::move(spec));
}

const DatasetSpec& DatasetRegistry::lookup(std::string_view name) const {
  auto it = specs_.find(name);
  if (it == specs_.end()) throw LookupError("unknown dataset '" + std::string(name) + "'");
  return it->second;
}

bool DatasetRegistry::contains(std::string_view name) const { return specs_.contains(name); }

std::vector<std::string> DatasetRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : specs_) out.push_back(k);
  return out;
}

DatasetSpec register_dataset(std::string_view name) {
  static const DatasetRegistry builtin;
  return builtin.lookup(name);
}

DatasetSpec register_dataset(std::string_view name, const DatasetRegistry& registry) {
  return registry.lookup(name);
}

std::vector<std::string> read_class_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open class-name file " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

}  // namespace bt
