#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bt {

enum class AccuracyMetric { top1, mean_per_class };

std::string_view to_string(AccuracyMetric m);
AccuracyMetric parse_metric(std::string_view s);

/// Registry entry for a downstream classification dataset.
///
/// Immutable once built. `n_classes()` is always `class_names().size()` and
/// class names are unique.
class DatasetSpec {
 public:
  DatasetSpec(std::string name, std::vector<std::string> class_names, std::size_t train_size,
              std::size_t val_size, AccuracyMetric metric);

  /// Custom dataset whose label indices follow sorted class-name order.
  static DatasetSpec custom(std::string name, std::vector<std::string> class_names,
                            AccuracyMetric metric = AccuracyMetric::top1,
                            std::size_t train_size = 0, std::size_t val_size = 0);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  std::size_t n_classes() const noexcept { return class_names_.size(); }
  std::size_t train_size() const noexcept { return train_size_; }
  std::size_t val_size() const noexcept { return val_size_; }
  AccuracyMetric metric() const noexcept { return metric_; }

  const std::string& class_name(std::size_t index) const;

  /// Same counts and metric, different class names (e.g. loaded from a file).
  DatasetSpec with_class_names(std::vector<std::string> names) const;

  bool operator==(const DatasetSpec&) const = default;

 private:
  std::string name_;
  std::vector<std::string> class_names_;
  std::size_t train_size_;
  std::size_t val_size_;
  AccuracyMetric metric_;
};

/// Name -> DatasetSpec lookup. Starts with the ten built-in benchmarks.
class DatasetRegistry {
 public:
  DatasetRegistry();

  /// Adds or replaces a custom entry; returned verbatim by `lookup`.
  void add(DatasetSpec spec);

  /// Throws LookupError for unknown names.
  const DatasetSpec& lookup(std::string_view name) const;

  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, DatasetSpec, std::less<>> specs_;
};

/// Lookup against `registry` (the built-in registry by default).
DatasetSpec register_dataset(std::string_view name);
DatasetSpec register_dataset(std::string_view name, const DatasetRegistry& registry);

/// One class name per line; blank lines ignored.
std::vector<std::string> read_class_names(const std::string& path);

}  // namespace bt
