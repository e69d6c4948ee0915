#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mrgrp/domain.hpp"
#include "mrgrp/errors.hpp"

namespace mrgrp {

enum class RelationKind : std::uint8_t {
  SpatialProx = 1,
  PickupTemporalProx = 2,
  DeliveryTemporalProx = 3,
  PickupThenDelivery = 4,
};

inline constexpr std::size_t kRelationCount = 4;
inline constexpr std::array<RelationKind, kRelationCount> kAllRelations{
    RelationKind::SpatialProx, RelationKind::PickupTemporalProx, RelationKind::DeliveryTemporalProx,
    RelationKind::PickupThenDelivery};

inline constexpr std::size_t relation_index(RelationKind r) { return static_cast<std::size_t>(r) - 1; }

inline const char* relation_name(RelationKind r) {
  switch (r) {
    case RelationKind::SpatialProx: return "spatial";
    case RelationKind::PickupTemporalProx: return "pickup_temporal";
    case RelationKind::DeliveryTemporalProx: return "delivery_temporal";
    case RelationKind::PickupThenDelivery: return "pickup_then_delivery";
  }
  return "?";
}

/// Width of the raw edge feature vector per relation.
inline constexpr std::size_t edge_feature_width(RelationKind r) { return r == RelationKind::PickupThenDelivery ? 2 : 1; }

class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t n() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool on = true) { bits_[i * n_ + j] = on ? 1 : 0; }

  std::size_t edge_count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool is_symmetric() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        if ((*this)(i, j) != (*this)(j, i)) return false;
    return true;
  }
  bool has_zero_diagonal() const {
    for (std::size_t i = 0; i < n_; ++i)
      if ((*this)(i, i)) return false;
    return true;
  }
  /// Ordered (i, j) pairs with A[i][j] set, row-major.
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if ((*this)(i, j)) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
    return out;
  }

  friend bool operator==(const Adjacency&, const Adjacency&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

using EdgeFeatureMap = std::map<std::pair<int, int>, std::vector<double>>;

/// Numerical node-feature columns.
enum NodeNumericColumn : std::size_t {
  kColX = 0,
  kColY,
  kColEarliestPickup,
  kColPromised,
  kColDistanceToCourier,
  kColTaskDensity,
  kColAreaSpeed,
  kColAreaOnTime,
  kNodeNumericWidth,
};

/// Categorical node-feature fields and their cardinalities.
inline constexpr std::size_t kNodeCategoricalWidth = 3;
inline constexpr std::array<int, kNodeCategoricalWidth> kCategoricalCardinality{2, kServiceTypes, kTimeTypes};
inline constexpr std::array<const char*, kNodeCategoricalWidth> kCategoricalNames{"kind", "service_type", "time_type"};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const { return mean.empty(); }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct NodeFeatures {
  std::vector<std::array<int, kNodeCategoricalWidth>> categorical;  // n rows
  std::vector<double> numerical;                                    // n x kNodeNumericWidth, standardized

  friend bool operator==(const NodeFeatures&, const NodeFeatures&) = default;
};

struct GraphConfig {
  int k_spatial = 3;
  int k_temporal = 3;
};

struct MultiRelGraph {
  std::size_t n = 0;
  std::array<Adjacency, kRelationCount> adjacency;
  NodeFeatures features;
  std::array<EdgeFeatureMap, kRelationCount> edge_features;

  const Adjacency& adj(RelationKind r) const { return adjacency[relation_index(r)]; }
  const EdgeFeatureMap& edges(RelationKind r) const { return edge_features[relation_index(r)]; }

  friend bool operator==(const MultiRelGraph&, const MultiRelGraph&) = default;
};

/// Raw (unstandardized) numerical columns of one task.
inline std::array<double, kNodeNumericWidth> raw_numeric_row(const ProblemInstance& inst, const TaskNode& t) {
  const double t0 = static_cast<double>(inst.timestamp());
  std::array<double, kNodeNumericWidth> r{};
  r[kColX] = t.location.x;
  r[kColY] = t.location.y;
  r[kColEarliestPickup] = t.is_pickup() ? static_cast<double>(t.earliest_pickup_time) - t0 : 0.0;
  r[kColPromised] = static_cast<double>(t.promised_time) - t0;
  r[kColDistanceToCourier] = distance(t.location, inst.courier.location);
  const auto& nf = t.numerical_features;
  r[kColTaskDensity] = nf.size() > kTaskDensity ? nf[kTaskDensity] : 0.0;
  r[kColAreaSpeed] = nf.size() > kAreaMeanSpeed ? nf[kAreaMeanSpeed] : 0.0;
  r[kColAreaOnTime] = nf.size() > kAreaOnTimeRate ? nf[kAreaOnTimeRate] : 0.0;
  return r;
}

/// Dataset-level mean and population std of every numerical column.
template <class InstanceRange, class Project>
NormStats compute_norm_stats(const InstanceRange& data, Project instance_of) {
  std::vector<double> sum(kNodeNumericWidth, 0.0), sq(kNodeNumericWidth, 0.0);
  double count = 0.0;
  for (const auto& item : data) {
    const ProblemInstance& inst = instance_of(item);
    for (const auto& t : inst.tasks) {
      const auto r = raw_numeric_row(inst, t);
      for (std::size_t c = 0; c < kNodeNumericWidth; ++c) {
        sum[c] += r[c];
        sq[c] += r[c] * r[c];
      }
      count += 1.0;
    }
  }
  NormStats s;
  s.mean.assign(kNodeNumericWidth, 0.0);
  s.stddev.assign(kNodeNumericWidth, 1.0);
  if (count == 0.0) return s;
  for (std::size_t c = 0; c < kNodeNumericWidth; ++c) {
    s.mean[c] = sum[c] / count;
    const double var = std::max(0.0, sq[c] / count - s.mean[c] * s.mean[c]);
    s.stddev[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return s;
}

inline NodeFeatures build_node_features(const ProblemInstance& inst, const NormStats& stats) {
  if (stats.mean.size() != kNodeNumericWidth || stats.stddev.size() != kNodeNumericWidth) {
    throw ConfigError("node features need normalization statistics for " + std::to_string(kNodeNumericWidth) +
                      " numerical columns");
  }
  NodeFeatures f;
  f.categorical.resize(inst.size());
  f.numerical.resize(inst.size() * kNodeNumericWidth);
  for (const auto& t : inst.tasks) {
    const auto i = static_cast<std::size_t>(t.task_id);
    f.categorical[i] = {t.is_pickup() ? 0 : 1, t.categorical_features.at(0), t.categorical_features.at(1)};
    const auto r = raw_numeric_row(inst, t);
    for (std::size_t c = 0; c < kNodeNumericWidth; ++c)
      f.numerical[i * kNodeNumericWidth + c] = (r[c] - stats.mean[c]) / stats.stddev[c];
  }
  return f;
}

/// A[i][j] = 1 iff i is the pickup and j the delivery of the same order.
inline Adjacency build_pd_adjacency(const ProblemInstance& inst) {
  Adjacency a(inst.size());
  const auto partner = pickup_partner(inst);
  for (std::size_t j = 0; j < partner.size(); ++j)
    if (partner[j] >= 0) a.set(static_cast<std::size_t>(partner[j]), j);
  return a;
}

namespace detail {

/// Directed kNN among `members` under `dist`, ties by smaller id, then
/// symmetrized by union.
template <class Dist>
Adjacency union_knn(std::size_t n, const std::vector<int>& members, int k, Dist dist) {
  if (k < 1) throw ConfigError("k must be >= 1");
  Adjacency a(n);
  std::vector<std::pair<double, int>> cand;
  for (int i : members) {
    cand.clear();
    for (int j : members)
      if (j != i) cand.emplace_back(dist(i, j), j);
    std::sort(cand.begin(), cand.end());
    const auto take = std::min(cand.size(), static_cast<std::size_t>(k));
    for (std::size_t q = 0; q < take; ++q) {
      a.set(static_cast<std::size_t>(i), static_cast<std::size_t>(cand[q].second));
      a.set(static_cast<std::size_t>(cand[q].second), static_cast<std::size_t>(i));
    }
  }
  return a;
}

inline const TaskNode& task(const ProblemInstance& inst, int id) { return inst.tasks[static_cast<std::size_t>(id)]; }

}  // namespace detail

inline Adjacency build_spatial_knn(const ProblemInstance& inst, int k) {
  std::vector<int> all;
  for (const auto& t : inst.tasks) all.push_back(t.task_id);
  std::sort(all.begin(), all.end());
  return detail::union_knn(inst.size(), all, k, [&](int i, int j) {
    return distance(detail::task(inst, i).location, detail::task(inst, j).location);
  });
}

/// Temporal kNN within pickups and within deliveries, separately.
inline std::pair<Adjacency, Adjacency> build_temporal_knn(const ProblemInstance& inst, int k) {
  std::vector<int> pickups, deliveries;
  for (const auto& t : inst.tasks) (t.is_pickup() ? pickups : deliveries).push_back(t.task_id);
  std::sort(pickups.begin(), pickups.end());
  std::sort(deliveries.begin(), deliveries.end());
  auto gap = [&](int i, int j) {
    return std::abs(static_cast<double>(detail::task(inst, i).promised_time - detail::task(inst, j).promised_time));
  };
  return {detail::union_knn(inst.size(), pickups, k, gap), detail::union_knn(inst.size(), deliveries, k, gap)};
}

inline MultiRelGraph build_graph(const ProblemInstance& inst, const GraphConfig& cfg, const NormStats& stats) {
  MultiRelGraph g;
  g.n = inst.size();
  g.features = build_node_features(inst, stats);
  g.adjacency[relation_index(RelationKind::SpatialProx)] = build_spatial_knn(inst, cfg.k_spatial);
  auto [pa, da] = build_temporal_knn(inst, cfg.k_temporal);
  g.adjacency[relation_index(RelationKind::PickupTemporalProx)] = std::move(pa);
  g.adjacency[relation_index(RelationKind::DeliveryTemporalProx)] = std::move(da);
  g.adjacency[relation_index(RelationKind::PickupThenDelivery)] = build_pd_adjacency(inst);

  for (RelationKind r : kAllRelations) {
    auto& feats = g.edge_features[relation_index(r)];
    for (auto [i, j] : g.adj(r).edges()) {
      const auto& a = detail::task(inst, i);
      const auto& b = detail::task(inst, j);
      const double dist = distance(a.location, b.location);
      const double dt = static_cast<double>(b.promised_time - a.promised_time);
      switch (r) {
        case RelationKind::SpatialProx: feats[{i, j}] = {dist}; break;
        case RelationKind::PickupTemporalProx:
        case RelationKind::DeliveryTemporalProx: feats[{i, j}] = {std::abs(dt)}; break;
        case RelationKind::PickupThenDelivery: feats[{i, j}] = {dist, dt}; break;
      }
    }
  }
  return g;
}

/// Structural invariants; returns a description of each failure.
inline std::vector<std::string> check_graph_invariants(const MultiRelGraph& g, const ProblemInstance& inst) {
  std::vector<std::string> problems;
  for (RelationKind r : {RelationKind::SpatialProx, RelationKind::PickupTemporalProx,
                         RelationKind::DeliveryTemporalProx}) {
    if (!g.adj(r).is_symmetric()) problems.push_back(std::string(relation_name(r)) + " not symmetric");
    if (!g.adj(r).has_zero_diagonal()) problems.push_back(std::string(relation_name(r)) + " has self loops");
  }
  for (auto [i, j] : g.adj(RelationKind::PickupTemporalProx).edges())
    if (!detail::task(inst, i).is_pickup() || !detail::task(inst, j).is_pickup())
      problems.push_back("pickup temporal edge touches a delivery");
  for (auto [i, j] : g.adj(RelationKind::DeliveryTemporalProx).edges())
    if (!detail::task(inst, i).is_delivery() || !detail::task(inst, j).is_delivery())
      problems.push_back("delivery temporal edge touches a pickup");

  std::size_t full_orders = 0;
  for (int p : pickup_partner(inst))
    if (p >= 0) ++full_orders;
  if (g.adj(RelationKind::PickupThenDelivery).edge_count() != full_orders) {
    problems.push_back("pd edge count differs from number of complete orders");
  }
  for (auto [i, j] : g.adj(RelationKind::PickupThenDelivery).edges()) {
    const auto& a = detail::task(inst, i);
    const auto& b = detail::task(inst, j);
    if (!a.is_pickup() || !b.is_delivery() || a.order_id != b.order_id) problems.push_back("malformed pd edge");
  }
  for (RelationKind r : kAllRelations) {
    const auto& feats = g.edges(r);
    if (feats.size() != g.adj(r).edge_count()) {
      problems.push_back(std::string(relation_name(r)) + " edge features differ from adjacency support");
    }
    for (const auto& [e, v] : feats) {
      if (!g.adj(r)(static_cast<std::size_t>(e.first), static_cast<std::size_t>(e.second))) {
        problems.push_back(std::string(relation_name(r)) + " edge feature off adjacency support");
      }
      if (v.size() != edge_feature_width(r)) problems.push_back(std::string(relation_name(r)) + " feature width");
    }
  }
  return problems;
}

/// Debug dump: adjacency lists per relation.
inline nlohmann::json graph_to_json(const MultiRelGraph& g) {
  nlohmann::json j;
  j["n"] = g.n;
  for (RelationKind r : kAllRelations) {
    nlohmann::json lists = nlohmann::json::array();
    for (std::size_t i = 0; i < g.n; ++i) {
      std::vector<std::size_t> nb;
      for (std::size_t k = 0; k < g.n; ++k)
        if (g.adj(r)(i, k)) nb.push_back(k);
      lists.push_back(nb);
    }
    j["relations"][relation_name(r)] = std::move(lists);
  }
  return j;
}

}  // namespace mrgrp
