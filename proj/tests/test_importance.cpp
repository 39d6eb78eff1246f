#include "aip/errors.hpp"
#include "aip/importance.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace aip;
using namespace aip::testing;

namespace {

// A 1x1 feature map per sample whose channel c holds values[c] for sample 0.
FeatureMap<double> single_position(const std::vector<double>& values) {
  FeatureMap<double> m(static_cast<int>(values.size()), 1, 1, 1);
  for (std::size_t c = 0; c < values.size(); ++c) m.data(static_cast<Eigen::Index>(c), 0) = values[c];
  return m;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Importance, AccumulatesPerChannelSums) {
  ImportanceState s;
  accumulate(s, 4, single_position({1, 3}));
  accumulate(s, 4, single_position({3, -1}));
  EXPECT_EQ(s.layers[4].raw_l1_sums, vec({4, 4}));
  EXPECT_EQ(s.layers[4].batches_seen, 2);
}

TEST(Importance, AccumulationMatchesBruteForceOracle) {
  std::mt19937_64 rng(5);
  ImportanceState s;
  std::vector<FeatureMap<float>> batches;
  for (int b = 0; b < 3; ++b) batches.push_back(random_input<float>({64, 5, 5}, 4, rng));
  for (const auto& m : batches) accumulate(s, 0, m);
  for (int c = 0; c < 64; ++c) {
    double oracle = 0.0;
    for (const auto& m : batches)
      for (int n = 0; n < m.batch; ++n)
        for (int y = 0; y < 5; ++y)
          for (int x = 0; x < 5; ++x) oracle += std::abs(static_cast<double>(m.at(c, n, y, x)));
    EXPECT_NEAR(s.layers[0].raw_l1_sums[c], oracle, 1e-6 * oracle);
  }
  // Batch order does not matter.
  ImportanceState r;
  for (auto it = batches.rbegin(); it != batches.rend(); ++it) accumulate(r, 0, *it);
  EXPECT_LT((r.layers[0].raw_l1_sums - s.layers[0].raw_l1_sums).cwiseAbs().maxCoeff(),
            1e-9 * s.layers[0].raw_l1_sums.maxCoeff());
}

TEST(Importance, AccumulateRejectsBadInput) {
  ImportanceState s;
  FeatureMap<double> empty(3, 0, 2, 2);
  EXPECT_THROW(accumulate(s, 0, empty), std::invalid_argument);
  accumulate(s, 0, single_position({1, 2}));
  EXPECT_THROW(accumulate(s, 0, single_position({1, 2, 3})), std::invalid_argument);
}

TEST(Importance, FinalizeMaxNormalises) {
  ImportanceState s;
  accumulate(s, 1, single_position({2, 4, 8}));
  accumulate(s, 2, single_position({3, 3}));
  EXPECT_EQ(finalize_scores(s, 1).values, vec({0.25, 0.5, 1.0}));
  EXPECT_EQ(finalize_scores(s, 2).values, vec({1.0, 1.0}));
  EXPECT_THROW(finalize_scores(s, 3), std::logic_error);
}

TEST(Importance, DegenerateLayerScoresZero) {
  ImportanceState s;
  accumulate(s, 0, single_position({0, 0, 0}));
  const Scores sc = finalize_scores(s, 0);
  EXPECT_TRUE(sc.degenerate);
  EXPECT_EQ(sc.values, vec({0, 0, 0}));
  // Every channel sits at the zero threshold, so all are kept.
  EXPECT_EQ(select(sc.values, threshold(sc.values, 0.5)), (std::vector<bool>{true, true, true}));
}

TEST(Importance, ThresholdIsScaledMean) {
  EXPECT_DOUBLE_EQ(threshold(vec({0.25, 0.5, 1.0}), 0.6), 0.35);
  EXPECT_DOUBLE_EQ(threshold(vec({0.25, 0.5, 1.0}), 0.5), 1.75 / 6.0);
  EXPECT_DOUBLE_EQ(threshold(vec({1, 1, 1, 1}), 0.37), 0.37);
  for (double k : {0.0, 1.0, -0.2, 1.5}) EXPECT_THROW(threshold(vec({1.0}), k), ConfigError);
}

TEST(Importance, SelectKeepsAtOrAboveCutoff) {
  EXPECT_EQ(select(vec({0.25, 0.5, 1.0}), 0.35), (std::vector<bool>{false, true, true}));
  EXPECT_EQ(select(vec({0.25, 0.5, 1.0}), 0.0), (std::vector<bool>{true, true, true}));
  EXPECT_EQ(select(vec({0.25, 0.35, 1.0}), 0.35), (std::vector<bool>{false, true, true}));
}

TEST(Importance, SelectFallsBackToFirstArgmax) {
  EXPECT_EQ(select(vec({0.2, 0.7, 0.7}), 0.9), (std::vector<bool>{false, true, false}));
}

TEST(Importance, MaxChannelNeverPruned) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    ImportanceState s;
    FeatureMap<double> m(1 + trial % 20, 1, 1, 1);
    for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = u(rng);
    accumulate(s, 0, m);
    const Scores sc = finalize_scores(s, 0);
    Eigen::Index best = 0;
    EXPECT_EQ(sc.values.maxCoeff(&best), 1.0);
    EXPECT_TRUE(sc.values.minCoeff() >= 0.0);
    const double k = 0.01 + 0.98 * u(rng);
    EXPECT_TRUE(select(sc.values, threshold(sc.values, k))[best]);
  }
}

TEST(Importance, ScaleInvariance) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    FeatureMap<double> m(12, 1, 1, 1);
    for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = u(rng);
    FeatureMap<double> scaled = m;
    scaled.data *= 4.0;  // power of two keeps the division exact
    ImportanceState a, b;
    accumulate(a, 0, m);
    accumulate(b, 0, scaled);
    EXPECT_EQ(select_all(a, 0.5), select_all(b, 0.5));
  }
}

TEST(Importance, SelectAllCoversTrackedLayers) {
  ImportanceState s;
  accumulate(s, 3, single_position({2, 4, 8}));
  accumulate(s, 9, single_position({1, 1}));
  std::map<int, Scores> scores;
  const KeepMask mask = select_all(s, 0.6, &scores);
  ASSERT_EQ(mask.size(), 2u);
  EXPECT_EQ(mask.at(3), (std::vector<bool>{false, true, true}));
  EXPECT_EQ(mask.at(9), (std::vector<bool>{true, true}));
  EXPECT_EQ(scores.at(3).values, vec({0.25, 0.5, 1.0}));
  s.reset();
  EXPECT_TRUE(s.layers.empty());
}
