#include <cmath>
#include <set>
#include <utility>

#include <gtest/gtest.h>

#include "mrgrp/graph.hpp"
#include "mrgrp/training.hpp"
#include "support.hpp"

using namespace mrgrp;
using namespace testing_support;

namespace {

using EdgeSet = std::set<std::pair<int, int>>;

EdgeSet undirected(const Adjacency& a) {
  EdgeSet s;
  for (auto [i, j] : a.edges()) s.emplace(std::min(i, j), std::max(i, j));
  return s;
}

NormStats identity_stats() { return {std::vector<double>(kNodeNumericWidth, 0.0), std::vector<double>(kNodeNumericWidth, 1.0)}; }

ProblemInstance pickups_at_times(const std::vector<std::int64_t>& times) {
  std::vector<TaskNode> tasks;
  for (std::size_t i = 0; i < times.size(); ++i)
    tasks.push_back(make_task(static_cast<int>(i), static_cast<std::int64_t>(i), TaskKind::Pickup,
                              100.0 * static_cast<double>(i), 0, times[i]));
  return make_instance(tasks);
}

}  // namespace

TEST(PdAdjacency, SingleOrder) {
  const auto a = build_pd_adjacency(one_order_instance());
  EXPECT_EQ(a.edge_count(), 1u);
  EXPECT_TRUE(a(0, 1));
  EXPECT_FALSE(a(1, 0));
}

TEST(PdAdjacency, DeliveryOnlyOrderHasNoEdge) {
  auto d = make_task(2, 7, TaskKind::Delivery, 50, 50, 2000);
  d.picked_up = true;
  auto inst = make_instance({make_task(0, 1, TaskKind::Pickup, 0, 0, 1500, 1100),
                             make_task(1, 1, TaskKind::Delivery, 10, 0, 2500), d});
  const auto a = build_pd_adjacency(inst);
  EXPECT_EQ(a.edge_count(), 1u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_FALSE(a(i, 2));
}

TEST(PdAdjacency, ThreeOrdersEnumerated) {
  auto inst = make_instance({make_task(0, 1, TaskKind::Pickup, 0, 0, 1500), make_task(1, 2, TaskKind::Delivery, 1, 0, 2500),
                             make_task(2, 3, TaskKind::Pickup, 2, 0, 1500), make_task(3, 1, TaskKind::Delivery, 3, 0, 2500),
                             make_task(4, 2, TaskKind::Pickup, 4, 0, 1500), make_task(5, 3, TaskKind::Delivery, 5, 0, 2500)});
  EdgeSet expected;
  for (const auto& p : inst.tasks)
    for (const auto& d : inst.tasks)
      if (p.is_pickup() && d.is_delivery() && p.order_id == d.order_id) expected.emplace(p.task_id, d.task_id);
  const auto edges = build_pd_adjacency(inst).edges();
  EXPECT_EQ(EdgeSet(edges.begin(), edges.end()), expected);
  EXPECT_EQ(expected.size(), 3u);
}

TEST(SpatialKnn, SaturatedKGivesCompleteGraph) {
  auto inst = pickups_at_times({1, 2, 3, 4, 5});
  const auto a = build_spatial_knn(inst, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(a(i, j), i != j);
}

TEST(SpatialKnn, CollinearPoints) {
  auto inst = make_instance({make_task(0, 0, TaskKind::Pickup, 0, 0, 10), make_task(1, 1, TaskKind::Pickup, 1, 0, 10),
                             make_task(2, 2, TaskKind::Pickup, 3, 0, 10)});
  const auto a = build_spatial_knn(inst, 1);
  EXPECT_EQ(undirected(a), (EdgeSet{{0, 1}, {1, 2}}));
  EXPECT_TRUE(a.is_symmetric());
}

TEST(SpatialKnn, SingleNodeIsEmpty) {
  EXPECT_EQ(build_spatial_knn(pickups_at_times({5}), 3).edge_count(), 0u);
}

TEST(TemporalKnn, EqualTimesBreakTiesById) {
  auto [p, d] = build_temporal_knn(pickups_at_times({50, 50, 50, 50}), 1);
  // Every node picks its lowest-id peer: 0->1, 1->0, 2->0, 3->0.
  EXPECT_EQ(undirected(p), (EdgeSet{{0, 1}, {0, 2}, {0, 3}}));
  EXPECT_TRUE(p.is_symmetric());
  EXPECT_EQ(d.edge_count(), 0u);
}

TEST(TemporalKnn, PickupsAtSpreadTimes) {
  auto [p, d] = build_temporal_knn(pickups_at_times({0, 10, 100}), 1);
  EXPECT_EQ(undirected(p), (EdgeSet{{0, 1}, {1, 2}}));
}

TEST(TemporalKnn, SinglePickupIsEmpty) {
  auto [p, d] = build_temporal_knn(one_order_instance(), 2);
  EXPECT_EQ(p.edge_count(), 0u);
  EXPECT_EQ(d.edge_count(), 0u);
}

TEST(TemporalKnn, NeverCrossesKinds) {
  for (const auto& li : sample(500, 20)) {
    auto [p, d] = build_temporal_knn(li.instance, 3);
    for (auto [i, j] : p.edges()) {
      EXPECT_TRUE(li.instance.tasks[static_cast<std::size_t>(i)].is_pickup());
      EXPECT_TRUE(li.instance.tasks[static_cast<std::size_t>(j)].is_pickup());
    }
    for (auto [i, j] : d.edges()) {
      EXPECT_TRUE(li.instance.tasks[static_cast<std::size_t>(i)].is_delivery());
      EXPECT_TRUE(li.instance.tasks[static_cast<std::size_t>(j)].is_delivery());
    }
  }
}

TEST(NodeFeatures, TaskAtCourierHasStandardizedZeroDistance) {
  auto inst = one_order_instance();
  inst.tasks[0].location = inst.courier.location;
  NormStats s = identity_stats();
  s.mean[kColDistanceToCourier] = 250.0;
  s.stddev[kColDistanceToCourier] = 125.0;
  const auto f = build_node_features(inst, s);
  EXPECT_DOUBLE_EQ(f.numerical[0 * kNodeNumericWidth + kColDistanceToCourier], (0.0 - 250.0) / 125.0);
}

TEST(NodeFeatures, IdenticalTasksGiveIdenticalRows) {
  auto inst = make_instance({make_task(0, 1, TaskKind::Pickup, 40, 40, 1500, 1200),
                             make_task(1, 2, TaskKind::Pickup, 40, 40, 1500, 1200)});
  const auto f = build_node_features(inst, identity_stats());
  EXPECT_EQ(f.categorical[0], f.categorical[1]);
  for (std::size_t c = 0; c < kNodeNumericWidth; ++c)
    EXPECT_EQ(f.numerical[c], f.numerical[kNodeNumericWidth + c]);
}

TEST(NodeFeatures, StandardizedColumnsHaveUnitMoments) {
  const auto data = sample(2000, 21);
  const auto stats = dataset_norm_stats(data);
  std::vector<double> sum(kNodeNumericWidth, 0.0), sq(kNodeNumericWidth, 0.0);
  double count = 0.0;
  for (const auto& li : data) {
    const auto f = build_node_features(li.instance, stats);
    for (std::size_t i = 0; i < li.instance.size(); ++i) {
      for (std::size_t c = 0; c < kNodeNumericWidth; ++c) {
        const double v = f.numerical[i * kNodeNumericWidth + c];
        sum[c] += v;
        sq[c] += v * v;
      }
      count += 1.0;
    }
  }
  for (std::size_t c = 0; c < kNodeNumericWidth; ++c) {
    const double mean = sum[c] / count;
    EXPECT_NEAR(mean, 0.0, 0.05) << "column " << c;
    EXPECT_NEAR(std::sqrt(sq[c] / count - mean * mean), 1.0, 0.05) << "column " << c;
  }
}

TEST(NodeFeatures, MissingStatisticsIsConfigError) {
  EXPECT_THROW(build_node_features(one_order_instance(), NormStats{}), ConfigError);
}

TEST(BuildGraph, OneOrderInstance) {
  GraphConfig cfg{1, 1};
  const auto g = build_graph(one_order_instance(), cfg, identity_stats());
  EXPECT_EQ(g.n, 2u);
  EXPECT_EQ(g.adj(RelationKind::PickupThenDelivery).edge_count(), 1u);
  EXPECT_EQ(g.adj(RelationKind::PickupTemporalProx).edge_count(), 0u);
  EXPECT_EQ(g.adj(RelationKind::DeliveryTemporalProx).edge_count(), 0u);
  EXPECT_EQ(undirected(g.adj(RelationKind::SpatialProx)), (EdgeSet{{0, 1}}));
  const auto& pd = g.edges(RelationKind::PickupThenDelivery).at({0, 1});
  EXPECT_DOUBLE_EQ(pd[0], 500.0);
  EXPECT_DOUBLE_EQ(pd[1], 1400.0);
}

TEST(BuildGraph, InvariantsHoldOnGeneratedInstances) {
  const auto data = sample(10000, 22, 1, 6);
  const auto stats = dataset_norm_stats(data);
  GraphConfig cfg;
  std::size_t problems = 0;
  for (const auto& li : data) {
    const auto g = build_graph(li.instance, cfg, stats);
    problems += check_graph_invariants(g, li.instance).size();
    for (RelationKind r : {RelationKind::SpatialProx, RelationKind::PickupTemporalProx,
                           RelationKind::DeliveryTemporalProx}) {
      const auto& a = g.adj(r);
      for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) problems += (a(i, j) != a(j, i)) + (i == j && a(i, j));
    }
    for (RelationKind r : kAllRelations) problems += g.edges(r).size() != g.adj(r).edge_count();
  }
  EXPECT_EQ(problems, 0u);
}

TEST(BuildGraph, Deterministic) {
  const auto data = sample(20, 23);
  const auto stats = dataset_norm_stats(data);
  for (const auto& li : data) EXPECT_EQ(build_graph(li.instance, {}, stats), build_graph(li.instance, {}, stats));
}

TEST(BuildGraph, DebugDumpListsNeighbours) {
  const auto j = graph_to_json(build_graph(one_order_instance(), {1, 1}, identity_stats()));
  EXPECT_EQ(j.at("n"), 2);
  EXPECT_EQ(j.at("relations").size(), 4u);
}
