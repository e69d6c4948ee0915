#include <cmath>

#include <gtest/gtest.h>

#include "mrgrp/metrics.hpp"
#include "oracles.hpp"

using namespace mrgrp;

namespace {

EvalPair pair_of(std::vector<int> pred, std::vector<int> truth) {
  EvalPair p{std::move(pred), std::move(truth), {}};
  for (std::size_t i = 0; i < p.predicted.size(); ++i)
    p.locations.push_back({1000.0 * static_cast<double>(i), 0.0});
  return p;
}

// Task ids for readability.
constexpr int a = 0, b = 1, c = 2, d = 3;

}  // namespace

TEST(Krc, IdenticalIsOne) { EXPECT_EQ(krc(pair_of({a, b, c, d}, {a, b, c, d})), 1.0); }

TEST(Krc, ReversedIsMinusOne) { EXPECT_EQ(krc(pair_of({d, c, b, a}, {a, b, c, d})), -1.0); }

TEST(Krc, AbsentTaskRanksLast) { EXPECT_DOUBLE_EQ(krc(pair_of({a, c, b}, {a, b})), 1.0 / 3.0); }

TEST(Krc, SingleTaskIsOne) { EXPECT_EQ(krc(pair_of({a}, {a})), 1.0); }

TEST(Lsd, IdenticalIsZero) { EXPECT_EQ(lsd(pair_of({a, b, c}, {a, b, c})), 0.0); }

TEST(Lsd, AdjacentSwap) { EXPECT_DOUBLE_EQ(lsd(pair_of({b, a, c}, {a, b, c})), 2.0 / 3.0); }

TEST(Lsd, ExtraLeadingTask) { EXPECT_DOUBLE_EQ(lsd(pair_of({c, a, b}, {a, b})), 1.0); }

TEST(EditDistance, Identical) { EXPECT_EQ(edit_distance(pair_of({a, b, c}, {a, b, c})), 0u); }

TEST(EditDistance, AdjacentSwapCostsTwo) { EXPECT_EQ(edit_distance(pair_of({b, a, c}, {a, b, c})), 2u); }

TEST(EditDistance, TwoDeletions) { EXPECT_EQ(edit_distance(pair_of({a, b, c, d}, {a, b})), 2u); }

TEST(SameRate, IdenticalIsOneForAnyThreshold) {
  const auto p = pair_of({a, b, c}, {a, b, c});
  for (double k : {1.0, 200.0, 1e6}) EXPECT_EQ(same_rate_at(p, k), 1.0);
}

TEST(SameRate, FarFirstTaskGivesZero) { EXPECT_EQ(same_rate_at(pair_of({b, a, c}, {a, b, c}), 200.0), 0.0); }

TEST(SameRate, RelaxationAcceptsNearbyTask) {
  EvalPair p{{b, a, c}, {a, b, c}, {{0, 0}, {150, 0}, {5000, 0}}};
  // Second step compares a with b again, also 150 m apart.
  EXPECT_EQ(same_rate_at(p, 200.0), 1.0);
  EXPECT_EQ(same_rate_at(p, 1.0), 0.0);
}

TEST(HitRate, SameFirstTask) { EXPECT_EQ(hit_rate_at(pair_of({a, b, c}, {a, c, b}), 1), 1.0); }

TEST(HitRate, DisjointTopTwo) { EXPECT_EQ(hit_rate_at(pair_of({a, b, c, d}, {c, d, a, b}), 2), 0.0); }

TEST(HitRate, PartialOverlap) { EXPECT_DOUBLE_EQ(hit_rate_at(pair_of({a, b, c, d}, {a, c, d, b}), 3), 2.0 / 3.0); }

TEST(Accuracy, IdenticalPrefix) { EXPECT_EQ(acc_at(pair_of({a, b, c, d}, {a, b, c, d}), 3), 1); }

TEST(Accuracy, MismatchInsideWindow) { EXPECT_EQ(acc_at(pair_of({a, c, b, d}, {a, b, c, d}), 3), 0); }

TEST(Accuracy, MismatchBeyondWindow) { EXPECT_EQ(acc_at(pair_of({a, b, c, d, 4}, {a, b, c, 4, d}), 3), 1); }

TEST(Accuracy, WindowClampedToTruthLength) { EXPECT_EQ(acc_at(pair_of({a, b, c}, {a}), 3), 1); }

TEST(MetricOracles, MatchOnRandomPairs) {
  Rng rng(1);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto p = oracle::random_pair(rng);
    mismatches += krc(p) != oracle::krc(p);
    mismatches += lsd(p) != oracle::lsd(p);
    mismatches += edit_distance(p) != oracle::edit_distance(p);
    for (double k : {1.0, 200.0}) mismatches += same_rate_at(p, k) != oracle::same_rate(p, k);
    for (std::size_t k : {1u, 2u, 3u, 5u}) {
      mismatches += hit_rate_at(p, k) != oracle::hit_rate(p, k);
      mismatches += acc_at(p, k) != oracle::acc(p, k);
    }
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(MetricProperties, HoldOnRandomPairs) {
  Rng rng(2);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto p = oracle::random_pair(rng);
    const double k = krc(p);
    EXPECT_GE(k, -1.0);
    EXPECT_LE(k, 1.0);
    EXPECT_GE(same_rate_at(p, 200.0), same_rate_at(p, 1.0));
    EXPECT_GE(acc_at(p, 1), acc_at(p, 2));
    EXPECT_GE(acc_at(p, 2), acc_at(p, 3));
    EXPECT_EQ(acc_at(p, 1) == 1, hit_rate_at(p, 1) == 1.0);
    if (p.truth.size() == p.predicted.size()) {
      const bool equal = p.truth == p.predicted;
      EXPECT_EQ(lsd(p) == 0.0, equal);
      EXPECT_EQ(edit_distance(p) == 0, equal);
      EXPECT_EQ(k == 1.0, equal);
    }
  }
}

TEST(MetricProperties, InvariantUnderRelabeling) {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto p = oracle::random_pair(rng);
    const std::size_t n = p.predicted.size();
    std::vector<int> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
    for (std::size_t i = n; i > 1; --i)
      std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    EvalPair q;
    for (int t : p.predicted) q.predicted.push_back(perm[static_cast<std::size_t>(t)]);
    for (int t : p.truth) q.truth.push_back(perm[static_cast<std::size_t>(t)]);
    q.locations.resize(n);
    for (std::size_t i = 0; i < n; ++i) q.locations[static_cast<std::size_t>(perm[i])] = p.locations[i];
    const auto mp = compute_metrics(p);
    const auto mq = compute_metrics(q);
    EXPECT_EQ(mp.krc, mq.krc);
    EXPECT_EQ(mp.lsd, mq.lsd);
    EXPECT_EQ(mp.ed, mq.ed);
    EXPECT_EQ(mp.sr1, mq.sr1);
    EXPECT_EQ(mp.sr200, mq.sr200);
    EXPECT_EQ(mp.hr1, mq.hr1);
    EXPECT_EQ(mp.acc3, mq.acc3);
  }
}

TEST(MetricAccumulator, MeansOverPairs) {
  MetricAccumulator acc;
  acc.add(compute_metrics(pair_of({a, b}, {a, b})));
  acc.add(compute_metrics(pair_of({b, a}, {a, b})));
  const auto m = acc.mean();
  EXPECT_EQ(m.krc, 0.0);
  EXPECT_EQ(m.lsd, 0.5);
  EXPECT_EQ(m.ed, 1.0);
  EXPECT_EQ(m.hr1, 0.5);
  EXPECT_EQ(acc.count, 2u);
}
