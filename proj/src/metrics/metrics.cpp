#include "bt/metrics/metrics.hpp"

#include <cmath>
#include <string>

#include "bt/core/errors.hpp"

namespace bt::metrics {

void PredictionSet::validate() const {
  if (n == 0) throw ValidationError("prediction set is empty");
  if (source_classes == 0) throw ValidationError("prediction set has no source classes");
  if (source_distributions.size() != n * source_classes) {
    throw ValidationError("source distribution matrix is not n x |Z|");
  }
  if (target_labels.size() != n) throw ValidationError("need one target label per prediction");
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t z = 0; z < source_classes; ++z) {
      const double p = theta(i, z);
      if (!(p >= 0.0)) throw ValidationError("row " + std::to_string(i) + " has a negative entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw ValidationError("row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
    if (target_labels[i] < 0) throw ValidationError("negative target label at row " + std::to_string(i));
  }
}

double leep_score(const PredictionSet& preds) {
  preds.validate();
  const std::size_t n = preds.n;
  const std::size_t nz = preds.source_classes;
  std::size_t ny = 0;
  for (int y : preds.target_labels) ny = std::max(ny, static_cast<std::size_t>(y) + 1);

  // Joint P(y, z) accumulated as one pass over rows, then normalised per z.
  std::vector<double> joint(ny * nz, 0.0);
  std::vector<double> marginal(nz, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = joint.data() + std::size_t(preds.target_labels[i]) * nz;
    for (std::size_t z = 0; z < nz; ++z) row[z] += preds.theta(i, z);
  }
  for (auto& v : joint) v /= double(n);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t z = 0; z < nz; ++z) marginal[z] += joint[y * nz + z];
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t z = 0; z < nz; ++z)
      joint[y * nz + z] = marginal[z] > 0 ? joint[y * nz + z] / marginal[z] : 0.0;

  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* cond = joint.data() + std::size_t(preds.target_labels[i]) * nz;
    double eep = 0;
    for (std::size_t z = 0; z < nz; ++z) eep += cond[z] * preds.theta(i, z);
    if (!(eep > 0)) {
      throw ValidationError("degenerate predictions: expected empirical prediction is zero for row " +
                            std::to_string(i));
    }
    total += std::log(eep);
  }
  return std::min(0.0, total / double(n));
}

namespace {

void check_labels(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (truth.empty()) throw ValidationError("accuracy of an empty label set is undefined");
  if (predicted.size() != truth.size()) {
    throw ValidationError("predicted and true labels differ in length");
  }
}

}  // namespace

double top1_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  check_labels(predicted, truth);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return double(hits) / double(truth.size());
}

double mean_per_class_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth,
                               std::size_t n_classes) {
  check_labels(predicted, truth);
  std::vector<std::size_t> support(n_classes, 0), hits(n_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || std::size_t(truth[i]) >= n_classes) {
      throw ValidationError("label " + std::to_string(truth[i]) + " outside [0, " +
                            std::to_string(n_classes) + ")");
    }
    ++support[truth[i]];
    hits[truth[i]] += predicted[i] == truth[i];
  }
  double sum = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (support[c] == 0) {
      throw ValidationError("class " + std::to_string(c) + " is absent from the true labels");
    }
    sum += double(hits[c]) / double(support[c]);
  }
  return sum / double(n_classes);
}

double accuracy(AccuracyMetric metric, const std::vector<int>& predicted,
                const std::vector<int>& truth, std::size_t n_classes) {
  return metric == AccuracyMetric::top1 ? top1_accuracy(predicted, truth)
                                        : mean_per_class_accuracy(predicted, truth, n_classes);
}

void ConvergenceTrace::push(const EpochRecord& record) {
  if (!records_.empty() && record.epoch <= records_.back().epoch) {
    throw ValidationError("trace epochs must be strictly increasing");
  }
  records_.push_back(record);
}

std::optional<int> convergence_epochs(const ConvergenceTrace& trace, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("threshold must lie in (0, 1]");
  if (trace.empty()) throw ValidationError("convergence of an empty trace is undefined");
  for (const auto& r : trace.records())
    if (r.train_accuracy >= threshold) return r.epoch;
  return std::nullopt;
}

}  // namespace bt::metrics
