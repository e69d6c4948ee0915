#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "mrgrp/domain.hpp"
#include "mrgrp/generator.hpp"
#include "mrgrp/graph.hpp"
#include "mrgrp/heuristics.hpp"
#include "mrgrp/random.hpp"

namespace testing_support {

using namespace mrgrp;

inline TaskNode make_task(int id, std::int64_t order, TaskKind kind, double x, double y, std::int64_t promised,
                          std::int64_t ready = 0) {
  TaskNode t;
  t.task_id = id;
  t.order_id = order;
  t.kind = kind;
  t.location = {x, y};
  t.promised_time = promised;
  t.earliest_pickup_time = kind == TaskKind::Pickup ? ready : 0;
  t.categorical_features = {0, 0};
  t.numerical_features = {0.0, 1.0, 4.0, 0.9};
  return t;
}

inline ProblemInstance make_instance(std::vector<TaskNode> tasks, Location courier = {0.0, 0.0},
                                     std::int64_t now = 1000) {
  ProblemInstance inst;
  inst.tasks = std::move(tasks);
  inst.courier.courier_id = 3;
  inst.courier.location = courier;
  inst.courier.speed = 4.0;
  inst.courier.current_time = now;
  inst.courier.numerical_features = {static_cast<double>(inst.tasks.size()), 4.0};
  return inst;
}

/// Pickup i and delivery i+1 for each order.
inline ProblemInstance one_order_instance() {
  return make_instance({make_task(0, 1, TaskKind::Pickup, 100.0, 0.0, 1600, 1100),
                        make_task(1, 1, TaskKind::Delivery, 500.0, 300.0, 3000)});
}

inline GeneratorConfig small_generator(std::uint64_t seed, int orders_min = 2, int orders_max = 6) {
  GeneratorConfig g;
  g.seed = seed;
  g.n_orders_min = orders_min;
  g.n_orders_max = orders_max;
  return g;
}

inline std::vector<LabeledInstance> sample(std::size_t count, std::uint64_t seed, int orders_min = 2,
                                           int orders_max = 6) {
  return generate_dataset(small_generator(seed, orders_min, orders_max), count);
}

/// Every feasible full route, by brute-force enumeration of permutations.
inline std::vector<Route> feasible_permutations(const ProblemInstance& inst) {
  Route perm(inst.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<Route> out;
  do {
    if (is_feasible_route(inst, perm)) out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

inline double exhaustive_optimum(const ProblemInstance& inst, const HeuristicConfig& cfg) {
  double best = 1e300;
  for (const auto& r : feasible_permutations(inst)) best = std::min(best, route_objective(r, inst, cfg));
  return best;
}

/// Precedence check written independently of the library.
inline bool oracle_feasible(const ProblemInstance& inst, const Route& route) {
  if (route.size() != inst.size()) return false;
  std::vector<int> pos(inst.size(), -1);
  for (std::size_t i = 0; i < route.size(); ++i) {
    if (route[i] < 0 || static_cast<std::size_t>(route[i]) >= inst.size()) return false;
    if (pos[static_cast<std::size_t>(route[i])] >= 0) return false;
    pos[static_cast<std::size_t>(route[i])] = static_cast<int>(i);
  }
  for (const auto& d : inst.tasks) {
    if (!d.is_delivery() || d.picked_up) continue;
    for (const auto& p : inst.tasks)
      if (p.is_pickup() && p.order_id == d.order_id &&
          pos[static_cast<std::size_t>(p.task_id)] > pos[static_cast<std::size_t>(d.task_id)])
        return false;
  }
  return true;
}

inline std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mrgrp_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace testing_support
