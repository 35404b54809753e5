#include "oracles.hpp"

#include <deepfm/deepfm.hpp>
#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace deepfm;

namespace {

double bacc(const std::vector<std::size_t>& p, const std::vector<std::size_t>& y,
            std::size_t classes = 3) {
  return balanced_accuracy(p, y, classes);
}

}  // namespace

TEST(BalancedAccuracy, PerfectPredictionsScoreOne) {
  const std::vector<std::size_t> y = {0, 1, 2, 2, 1, 0, 0};
  EXPECT_EQ(bacc(y, y), 1.0);
}

TEST(BalancedAccuracy, ConstantPredictorScoresOneOverC) {
  const std::vector<std::size_t> y = {0, 0, 0, 0, 1, 1, 2, 2, 2};
  for (std::size_t c = 0; c < 3; ++c)
    EXPECT_DOUBLE_EQ(bacc(std::vector<std::size_t>(y.size(), c), y), 1.0 / 3.0);
}

TEST(BalancedAccuracy, HandWorkedExample) {
  // Recalls 1/2, 1 and 1/2 average to 2/3.
  EXPECT_DOUBLE_EQ(bacc({0, 1, 1, 1, 2, 0}, {0, 0, 1, 1, 2, 2}), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(bacc({0, 1, 0, 2, 2, 1}, {0, 0, 1, 1, 2, 2}), (0.5 + 0.0 + 0.5) / 3.0);
  // A class absent from the labels does not count.
  EXPECT_DOUBLE_EQ(bacc({0, 2, 1, 1}, {0, 0, 1, 1}), 0.75);
}

TEST(BalancedAccuracy, InvariantUnderJointPermutation) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> cls(0, 2);
  std::vector<std::size_t> p(50), y(50);
  for (std::size_t k = 0; k < 50; ++k) {
    p[k] = cls(rng);
    y[k] = cls(rng);
  }
  const double before = bacc(p, y);
  std::vector<std::size_t> idx(50);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> pp, yy;
  for (auto i : idx) {
    pp.push_back(p[i]);
    yy.push_back(y[i]);
  }
  EXPECT_DOUBLE_EQ(bacc(pp, yy), before);
}

TEST(BalancedAccuracy, InvariantUnderClassRelabeling) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> cls(0, 2);
  const std::vector<std::size_t> perm = {2, 0, 1};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> p(30), y(30), pp(30), yy(30);
    for (std::size_t k = 0; k < 30; ++k) {
      p[k] = cls(rng);
      y[k] = cls(rng);
      pp[k] = perm[p[k]];
      yy[k] = perm[y[k]];
    }
    EXPECT_DOUBLE_EQ(bacc(pp, yy), bacc(p, y));
  }
}

TEST(BalancedAccuracy, MatchesConfusionMatrixOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t classes = 2 + static_cast<std::size_t>(trial % 4);
    const std::size_t n = 1 + static_cast<std::size_t>(rng() % 40);
    std::uniform_int_distribution<std::size_t> cls(0, classes - 1);
    std::vector<std::size_t> p(n), y(n);
    for (std::size_t k = 0; k < n; ++k) {
      p[k] = cls(rng);
      y[k] = cls(rng);
    }
    EXPECT_NEAR(bacc(p, y, classes), oracle::balanced_accuracy(p, y, classes), 1e-15);
  }
}

TEST(BalancedAccuracy, RejectsBadInput) {
  EXPECT_THROW(bacc({}, {}), DataError);
  EXPECT_THROW(bacc({0, 1}, {0}), ShapeError);
  EXPECT_THROW(bacc({0, 3}, {0, 1}), ShapeError);
}

TEST(ConfusionMatrix, CountsTrueByPredicted) {
  const auto cm = confusion_matrix(std::vector<std::size_t>{1, 1, 0},
                                   std::vector<std::size_t>{0, 1, 0}, 2);
  EXPECT_EQ(cm[0][0], 1u);
  EXPECT_EQ(cm[0][1], 1u);
  EXPECT_EQ(cm[1][1], 1u);
  EXPECT_EQ(cm[1][0], 0u);
}

TEST(Median, OddEvenAndEmpty) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_EQ(median({7.0}), 7.0);
  EXPECT_THROW(median({}), DataError);
}
