#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "bt/core/dataset.hpp"

namespace bt::metrics {

/// Source-model outputs on target data: an n x |Z| row-stochastic matrix
/// (row-major) plus one target label per row.
struct PredictionSet {
  std::size_t n = 0;
  std::size_t source_classes = 0;
  std::vector<double> source_distributions;
  std::vector<int> target_labels;

  /// Throws ValidationError unless rows are distributions (sum 1 within
  /// 1e-6, no negatives) and labels are non-negative.
  void validate() const;
  double theta(std::size_t i, std::size_t z) const { return source_distributions[i * source_classes + z]; }
};

/// Log Expected Empirical Prediction (natural log). Always <= 0; less
/// negative means more transferable. Throws ValidationError when some
/// sample's expected empirical prediction is zero.
double leep_score(const PredictionSet& preds);

double top1_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

/// Every class in [0, n_classes) must occur in `truth`; an absent class is
/// reported by index in the ValidationError message.
double mean_per_class_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth,
                               std::size_t n_classes);

double accuracy(AccuracyMetric metric, const std::vector<int>& predicted,
                const std::vector<int>& truth, std::size_t n_classes);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double learning_rate = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  std::optional<double> eval_accuracy;  // absent when there is no eval set
};

class ConvergenceTrace {
 public:
  /// Epochs must be strictly increasing.
  void push(const EpochRecord& record);
  const std::vector<EpochRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }
  const EpochRecord& back() const { return records_.back(); }

 private:
  std::vector<EpochRecord> records_;
};

/// First epoch whose train accuracy reaches `threshold`, or nullopt.
std::optional<int> convergence_epochs(const ConvergenceTrace& trace, double threshold);

}  // namespace bt::metrics
