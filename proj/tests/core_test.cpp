#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tkmia/core.hpp"

using namespace tkmia;

TEST(TopK, OrdersByScore) {
  EXPECT_EQ(top_k_indices(std::vector<double>{0.9, 0.1, 0.5}, 2), (IndexSet{0, 2}));
}

TEST(TopK, TiesGoToSmallerIndex) {
  EXPECT_EQ(top_k_indices(std::vector<double>{0.4, 0.4, 0.4}, 2), (IndexSet{0, 1}));
}

TEST(TopK, RejectsBadK) {
  std::vector<double> f{0.1, 0.2};
  EXPECT_THROW(top_k_indices(f, 0), std::out_of_range);
  EXPECT_THROW(top_k_indices(f, 3), std::out_of_range);
  EXPECT_THROW(kth_largest(f, 3), std::out_of_range);
  EXPECT_THROW(avg_top_k(f, 0), std::out_of_range);
}

TEST(TopK, MatchesPairwiseRanksIncludingTies) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 4);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> f(15);
    // Coarse levels force plenty of ties.
    for (auto& v : f) v = t % 2 ? level(rng) / 4.0 : std::uniform_real_distribution<>(0, 1)(rng);
    const auto k = std::uniform_int_distribution<std::size_t>(1, 15)(rng);
    auto r = oracle::ranks(f);
    auto top = top_k_indices(f, k);
    ASSERT_EQ(top.size(), k);
    for (std::size_t pos = 0; pos < k; ++pos) EXPECT_EQ(r[top[pos]], pos + 1);
    auto full = ranking(f);
    EXPECT_TRUE(std::equal(top.begin(), top.end(), full.begin()));
    EXPECT_EQ(ranks(f), r);
  }
}

TEST(KthLargest, Examples) {
  EXPECT_DOUBLE_EQ(kth_largest(std::vector<double>{0.9, 0.1, 0.5}, 2), 0.5);
  EXPECT_DOUBLE_EQ(kth_largest(std::vector<double>{0.7, 0.7}, 2), 0.7);
}

TEST(KthLargest, MatchesRankOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 300; ++t) {
    auto f = oracle::uniform_vector(rng, 12, 0, 1);
    auto r = oracle::ranks(f);
    for (std::size_t k = 1; k <= f.size(); ++k) {
      const auto at = std::find(r.begin(), r.end(), k) - r.begin();
      EXPECT_EQ(kth_largest(f, k), f[static_cast<std::size_t>(at)]);
    }
  }
}

TEST(AvgTopK, Examples) {
  EXPECT_DOUBLE_EQ(avg_top_k(std::vector<double>{0.9, 0.5, 0.2}, 2), 0.7);
  std::vector<double> f{0.3, 0.6, 0.9, 0.2};
  EXPECT_NEAR(avg_top_k(f, 4), 0.5, 1e-15);
}

TEST(AvgTopK, BoundsKthLargest) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const auto c = std::uniform_int_distribution<std::size_t>(2, 20)(rng);
    auto f = oracle::uniform_vector(rng, c, 0, 1);
    const auto k = std::uniform_int_distribution<std::size_t>(1, c)(rng);
    EXPECT_GE(avg_top_k(f, k), kth_largest(f, k));
    EXPECT_NEAR(k * avg_top_k(f, k), oracle::top_k_sum(f, k), 1e-12);
  }
}

TEST(AvgTopK, MidpointConvex) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 1000; ++t) {
    const auto c = std::uniform_int_distribution<std::size_t>(2, 20)(rng);
    auto u = oracle::uniform_vector(rng, c, 0, 1), v = oracle::uniform_vector(rng, c, 0, 1);
    const auto k = std::uniform_int_distribution<std::size_t>(1, c)(rng);
    std::vector<double> mid(c);
    for (std::size_t i = 0; i < c; ++i) mid[i] = 0.5 * (u[i] + v[i]);
    const double phi = k * avg_top_k(mid, k);
    EXPECT_LE(phi, 0.5 * (k * avg_top_k(u, k) + k * avg_top_k(v, k)) + 1e-9);
  }
}

TEST(Variational, HandEvaluation) {
  std::vector<double> f{0.9, 0.5, 0.2};
  EXPECT_NEAR(variational_top_k_sum(f, 2, 0.5), 1.4, 1e-15);
  EXPECT_DOUBLE_EQ(variational_top_k_sum(f, 2, 1.0), 2.0);
}

TEST(Variational, MinimumIsTopKSumAtKthLargest) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 1000; ++t) {
    const auto c = std::uniform_int_distribution<std::size_t>(2, 20)(rng);
    auto f = oracle::uniform_vector(rng, c, 0, 1);
    const auto k = std::uniform_int_distribution<std::size_t>(1, c - 1)(rng);
    const double target = oracle::top_k_sum(f, k);
    const double best = oracle::convex_min_01([&](double l) { return variational_top_k_sum(f, k, l); });
    EXPECT_NEAR(best, target, 1e-9);
    EXPECT_NEAR(variational_top_k_sum(f, k, kth_largest(f, k)), target, 1e-9);
    for (int i = 0; i <= 1000; i += 50)
      EXPECT_GE(variational_top_k_sum(f, k, i * 1e-3), target - 1e-12);
  }
}

TEST(Variational, RejectsOutOfRangeInputs) {
  std::vector<double> f{0.9, 0.5};
  EXPECT_THROW(variational_top_k_sum(f, 1, 1.5), std::out_of_range);
  EXPECT_THROW(variational_top_k_sum(f, 1, -0.1), std::out_of_range);
  EXPECT_THROW(variational_top_k_sum(std::vector<double>{0.9, 1.2}, 1, 0.5), std::invalid_argument);
  EXPECT_THROW(variational_top_k_sum(std::vector<double>{0.9}, 1, 0.5), std::invalid_argument);
}

TEST(Hinge, Examples) {
  EXPECT_DOUBLE_EQ(hinge(0.3), 0.3);
  EXPECT_DOUBLE_EQ(hinge(-0.3), 0.0);
  EXPECT_DOUBLE_EQ(hinge(0.0), 0.0);
}

TEST(Hinge, NestedIdentity) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(1e-9, 10.0), any(-10.0, 10.0);
  for (int t = 0; t < 100000; ++t) {
    const double a = pos(rng), b = pos(rng), x = any(rng);
    ASSERT_NEAR(hinge(hinge(a - x) - b), hinge(a - x - b), 1e-12) << a << " " << b << " " << x;
  }
}

TEST(DeltaTerms, Examples) {
  auto d = delta_terms(std::vector<double>{0.8, 0.3, 0.6}, {0});
  EXPECT_DOUBLE_EQ(d[0], 0.0);
  EXPECT_NEAR(d[1], 0.5, 1e-15);
  EXPECT_NEAR(d[2], 0.2, 1e-15);
  auto tie = delta_terms(std::vector<double>{0.7, 0.7, 0.1}, {0, 1});
  EXPECT_EQ(tie[0], 0.0);
  EXPECT_EQ(tie[1], 0.0);
  EXPECT_THROW(delta_terms(std::vector<double>{0.1, 0.2}, {}), std::invalid_argument);
}

TEST(DeltaTerms, SortedViewMatchesAscendingScores) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    auto f = oracle::uniform_vector(rng, 9, 0, 1);
    IndexSet s{1, 4};
    auto d = delta_terms(f, s);
    std::sort(d.begin(), d.end(), std::greater<>());
    auto asc = f;
    std::sort(asc.begin(), asc.end());
    const double top = std::max(f[1], f[4]);
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_DOUBLE_EQ(d[i], hinge(top - asc[i]));
  }
}

TEST(DeltaTildeTerms, Examples) {
  auto d = delta_tilde_terms(std::vector<double>{0.8, 0.3, 0.6}, {0, 1}, {0});
  EXPECT_NEAR(d[0], 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(d[1], 0.0);
  EXPECT_NEAR(d[2], 0.3, 1e-15);
  EXPECT_THROW(delta_tilde_terms(std::vector<double>{0.8, 0.3}, {0}, {0}), std::invalid_argument);
}

TEST(DeltaTildeTerms, MatchesDefinition) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 500; ++t) {
    auto f = oracle::uniform_vector(rng, 10, 0, 1);
    auto y = oracle::random_labels(rng, 10, 2);
    IndexSet yp;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i]) yp.push_back(i);
    IndexSet s{yp.front()};
    double floor = 2.0;
    for (std::size_t i = 1; i < yp.size(); ++i) floor = std::min(floor, f[yp[i]]);
    auto d = delta_tilde_terms(f, yp, s);
    for (std::size_t j = 0; j < f.size(); ++j) EXPECT_DOUBLE_EQ(d[j], std::max(0.0, f[j] - floor));
  }
}

TEST(RemainingRelevant, SortedDifference) {
  EXPECT_EQ(remaining_relevant({5, 1, 3}, {3}), (IndexSet{1, 5}));
  EXPECT_TRUE(remaining_relevant({2}, {2}).empty());
}
