#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bt/core/errors.hpp"
#include "bt/metrics/metrics.hpp"

namespace bt::metrics {
namespace {

// Direct transcription of the three empirical sums, one loop nest each.
double leep_oracle(const PredictionSet& p) {
  std::size_t ny = 0;
  for (int y : p.target_labels) ny = std::max<std::size_t>(ny, std::size_t(y) + 1);
  double total = 0;
  for (std::size_t i = 0; i < p.n; ++i) {
    double eep = 0;
    for (std::size_t z = 0; z < p.source_classes; ++z) {
      double joint = 0, marginal = 0;
      for (std::size_t j = 0; j < p.n; ++j) {
        marginal += p.theta(j, z) / double(p.n);
        if (p.target_labels[j] == p.target_labels[i]) joint += p.theta(j, z) / double(p.n);
      }
      if (marginal > 0) eep += joint / marginal * p.theta(i, z);
    }
    total += std::log(eep);
  }
  (void)ny;
  return total / double(p.n);
}

PredictionSet random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> n_d(1, 50), z_d(1, 10), y_d(1, 5);
  PredictionSet p;
  p.n = n_d(rng);
  p.source_classes = z_d(rng);
  const std::size_t ny = y_d(rng);
  std::gamma_distribution<double> g(0.5, 1.0);
  std::uniform_int_distribution<int> lab(0, int(ny) - 1);
  for (std::size_t i = 0; i < p.n; ++i) {
    std::vector<double> row(p.source_classes);
    double s = 0;
    for (auto& v : row) s += (v = g(rng) + 1e-12);
    for (auto v : row) p.source_distributions.push_back(v / s);
    p.target_labels.push_back(lab(rng));
  }
  return p;
}

TEST(Leep, MatchesTripleLoopOracleOnRandomInstances) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_instance(rng);
    const double got = leep_score(p);
    EXPECT_NEAR(got, leep_oracle(p), 1e-9) << "trial " << trial;
    EXPECT_LE(got, 0.0);
  }
}

TEST(Leep, BijectiveOneHotIsExactlyZero) {
  PredictionSet p{4, 3, {0, 1, 0, /**/ 1, 0, 0, /**/ 0, 0, 1, /**/ 0, 1, 0}, {2, 0, 1, 2}};
  EXPECT_EQ(leep_score(p), 0.0);
}

TEST(Leep, HandWorkedTwoSampleCase) {
  PredictionSet p{2, 2, {0.8, 0.2, 0.3, 0.7}, {0, 1}};
  // P(z) = (0.55, 0.45); P(y=0|z) = (0.4/0.55, 0.1/0.45); P(y=1|z) = (0.15/0.55, 0.35/0.45).
  const double e1 = 0.8 * (0.4 / 0.55) + 0.2 * (0.1 / 0.45);
  const double e2 = 0.3 * (0.15 / 0.55) + 0.7 * (0.35 / 0.45);
  const double expected = (std::log(e1) + std::log(e2)) / 2;
  EXPECT_NEAR(leep_score(p), expected, 1e-12);
  EXPECT_NEAR(leep_score(p), -0.468, 1e-3);
}

TEST(Leep, InvariantUnderSourceColumnPermutation) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_instance(rng);
    std::vector<std::size_t> perm(p.source_classes);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    PredictionSet q = p;
    for (std::size_t i = 0; i < p.n; ++i)
      for (std::size_t z = 0; z < p.source_classes; ++z)
        q.source_distributions[i * p.source_classes + perm[z]] = p.theta(i, z);
    EXPECT_NEAR(leep_score(p), leep_score(q), 1e-12);
  }
}

TEST(Leep, ZeroColumnsContributeNothing) {
  PredictionSet p{2, 3, {0.8, 0.0, 0.2, 0.3, 0.0, 0.7}, {0, 1}};
  PredictionSet q{2, 2, {0.8, 0.2, 0.3, 0.7}, {0, 1}};
  EXPECT_NEAR(leep_score(p), leep_score(q), 1e-15);
}

TEST(Leep, RejectsMalformedInput) {
  EXPECT_THROW(leep_score(PredictionSet{}), ValidationError);
  EXPECT_THROW(leep_score(PredictionSet{1, 2, {0.6, 0.6}, {0}}), ValidationError);
  EXPECT_THROW(leep_score(PredictionSet{1, 2, {1.2, -0.2}, {0}}), ValidationError);
  EXPECT_THROW(leep_score(PredictionSet{1, 2, {0.5, 0.5}, {-1}}), ValidationError);
  EXPECT_THROW(leep_score(PredictionSet{2, 2, {0.5, 0.5}, {0, 1}}), ValidationError);
}

TEST(Accuracy, TopOne) {
  EXPECT_EQ(top1_accuracy({0, 1, 2}, {0, 1, 2}), 1.0);
  EXPECT_NEAR(top1_accuracy({0, 0, 1}, {0, 0, 0}), 0.6667, 1e-4);
  EXPECT_NEAR(top1_accuracy({0, 0, 1}, {0, 0, 0}), 2.0 / 3.0, 1e-9);
  EXPECT_THROW(top1_accuracy({}, {}), ValidationError);
  EXPECT_THROW(top1_accuracy({0}, {0, 1}), ValidationError);
}

TEST(Accuracy, MeanPerClass) {
  // Class A: 2/2 correct, class B: 0/1.
  const std::vector<int> truth{0, 0, 1}, pred{0, 0, 0};
  EXPECT_EQ(mean_per_class_accuracy(pred, truth, 2), 0.5);
  EXPECT_NEAR(top1_accuracy(pred, truth), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(accuracy(AccuracyMetric::mean_per_class, pred, truth, 2), 0.5);
}

TEST(Accuracy, MetricsAgreeOnBalancedSupport) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> lab(0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> truth, pred;
    for (int c = 0; c < 5; ++c)
      for (int i = 0; i < 6; ++i) {
        truth.push_back(c);
        pred.push_back(lab(rng));
      }
    EXPECT_NEAR(mean_per_class_accuracy(pred, truth, 5), top1_accuracy(pred, truth), 1e-12);
  }
}

TEST(Accuracy, AbsentClassIsNamed) {
  try {
    mean_per_class_accuracy({0, 1}, {0, 1}, 3);
    FAIL() << "expected a ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("class 2"), std::string::npos) << e.what();
  }
}

ConvergenceTrace trace_of(const std::vector<double>& train_acc) {
  ConvergenceTrace t;
  for (std::size_t i = 0; i < train_acc.size(); ++i) t.push({int(i) + 1, 0.1, 1.0, train_acc[i], {}});
  return t;
}

TEST(Convergence, FirstCrossing) {
  std::vector<double> acc(20);
  for (int i = 0; i < 20; ++i) acc[i] = i < 11 ? 0.05 * i : 0.95;
  EXPECT_EQ(convergence_epochs(trace_of(acc), 0.9), 12);
  EXPECT_EQ(convergence_epochs(trace_of(acc), 0.99), std::nullopt);
  EXPECT_EQ(convergence_epochs(trace_of({0.2, 0.9, 0.5}), 0.9), 2);
}

TEST(Convergence, Errors) {
  EXPECT_THROW(convergence_epochs(ConvergenceTrace{}, 0.9), ValidationError);
  EXPECT_THROW(convergence_epochs(trace_of({0.5}), 0.0), ValidationError);
  EXPECT_THROW(convergence_epochs(trace_of({0.5}), 1.5), ValidationError);
  ConvergenceTrace t = trace_of({0.5, 0.6});
  EXPECT_THROW(t.push({2, 0.1, 1.0, 0.7, {}}), ValidationError);
}

}  // namespace
}  // namespace bt::metrics
