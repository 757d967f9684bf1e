#include <gtest/gtest.h>

#include "offermatch/metrics.hpp"
#include "offermatch/random.hpp"

using namespace offermatch;

namespace {

constexpr Label M = Label::kMatch;
constexpr Label N = Label::kNonMatch;

}  // namespace

TEST(Confusion, Examples) {
  const std::vector<Label> pred = {M, M, N, N};
  const std::vector<Label> gold = {M, N, M, N};
  EXPECT_EQ(confusion(pred, gold), (ConfusionCounts{1, 1, 1, 1}));
  EXPECT_EQ(confusion(std::vector<Label>{}, std::vector<Label>{}), ConfusionCounts{});
  EXPECT_THROW(confusion(pred, std::vector<Label>{M}), Error);
}

TEST(Prf1, Examples) {
  const auto m = prf1({3, 1, 1, 0});
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.75);
  EXPECT_DOUBLE_EQ(m.f1, 0.75);
  EXPECT_EQ(prf1({5, 0, 0, 5}), (MetricSet{1.0, 1.0, 1.0}));
  EXPECT_EQ(prf1({0, 3, 2, 1}), (MetricSet{0.0, 0.0, 0.0}));
  EXPECT_EQ(prf1({0, 0, 0, 4}), (MetricSet{0.0, 0.0, 0.0}));
}

TEST(Prf1, MatchesCountingOracle) {
  CounterRng rng(1, "metrics");
  for (int t = 0; t < 1000; ++t) {
    const auto n = rng.below(50);
    std::vector<Label> pred;
    std::vector<Label> gold;
    for (std::size_t i = 0; i < n; ++i) {
      pred.push_back(rng.below(2) ? M : N);
      gold.push_back(rng.below(2) ? M : N);
    }
    double tp = 0, pp = 0, gp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += pred[i] == M && gold[i] == M;
      pp += pred[i] == M;
      gp += gold[i] == M;
    }
    const double p = pp ? tp / pp : 0.0;
    const double r = gp ? tp / gp : 0.0;
    const double f = tp ? 2 * tp / (pp + gp) : 0.0;
    const auto m = prf1(confusion(pred, gold));
    EXPECT_NEAR(m.precision, p, 1e-12);
    EXPECT_NEAR(m.recall, r, 1e-12);
    EXPECT_NEAR(m.f1, f, 1e-12);
    EXPECT_EQ(confusion(pred, gold).total(), n);
  }
}

TEST(AverageRuns, Examples) {
  const std::vector<MetricSet> two = {{0.8, 0.8, 0.8}, {0.9, 0.9, 0.9}};
  EXPECT_NEAR(average_runs(two).f1, 0.85, 1e-12);
  const std::vector<MetricSet> one = {{0.1, 0.2, 0.3}};
  EXPECT_EQ(average_runs(one), one[0]);
  const std::vector<MetricSet> same(3, MetricSet{0.7123, 0.6, 0.64});
  EXPECT_EQ(average_runs(same), same[0]);
  EXPECT_THROW(average_runs(std::vector<MetricSet>{}), Error);
  // F1 is averaged, not recomputed from averaged precision and recall.
  const std::vector<MetricSet> skew = {{1.0, 0.5, 2.0 / 3.0}, {0.5, 1.0, 2.0 / 3.0}};
  EXPECT_NEAR(average_runs(skew).f1, 2.0 / 3.0, 1e-12);
}
