#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "mrgrp/domain.hpp"
#include "mrgrp/errors.hpp"

namespace mrgrp {

struct HeuristicConfig {
  double speed_mps = 4.0;
  double service_time_s = 60.0;
  double margin_s = 300.0;
  double lateness_weight = 1.0;  // meters of route length per second of lateness
  double cluster_cell_m = 500.0;
  int local_search_max_iters = 100;

  void validate() const {
    if (!(speed_mps > 0) || !(service_time_s > 0) || !(margin_s > 0) || !(lateness_weight > 0) ||
        !(cluster_cell_m > 0) || local_search_max_iters <= 0) {
      throw ConfigError("heuristic config values must all be positive");
    }
  }
};

struct ReferenceSolution {
  Route route;
  std::vector<double> etas;
  double objective = 0.0;
};

/// Arrival time at each stop of a (possibly partial) precedence-valid route.
/// Pickups wait for readiness; every stop then takes the service time.
inline std::vector<double> eta_along_route(const Route& route, const ProblemInstance& inst,
                                           const HeuristicConfig& cfg) {
  if (!satisfies_precedence(inst, route)) throw PrecedenceError("eta_along_route: route violates precedence");
  std::vector<double> etas;
  etas.reserve(route.size());
  double now = static_cast<double>(inst.timestamp());
  Location pos = inst.courier.location;
  for (int id : route) {
    const auto& t = inst.tasks[static_cast<std::size_t>(id)];
    now += distance(pos, t.location) / cfg.speed_mps;
    if (t.is_pickup()) now = std::max(now, static_cast<double>(t.earliest_pickup_time));
    etas.push_back(now);
    now += cfg.service_time_s;
    pos = t.location;
  }
  return etas;
}

namespace detail {

/// Objective without the precedence check; callers guarantee feasibility.
inline double objective_unchecked(const Route& route, const ProblemInstance& inst, const HeuristicConfig& cfg) {
  double now = static_cast<double>(inst.timestamp());
  double length = 0.0, late = 0.0;
  Location pos = inst.courier.location;
  for (int id : route) {
    const auto& t = inst.tasks[static_cast<std::size_t>(id)];
    const double d = distance(pos, t.location);
    length += d;
    now += d / cfg.speed_mps;
    if (t.is_pickup()) now = std::max(now, static_cast<double>(t.earliest_pickup_time));
    late += std::max(0.0, now - static_cast<double>(t.promised_time));
    now += cfg.service_time_s;
    pos = t.location;
  }
  return length + cfg.lateness_weight * late;
}

}  // namespace detail

/// Route length (courier start included) plus weighted total lateness.
inline double route_objective(const Route& route, const ProblemInstance& inst, const HeuristicConfig& cfg) {
  if (!satisfies_precedence(inst, route)) throw PrecedenceError("route_objective: route violates precedence");
  return detail::objective_unchecked(route, inst, cfg);
}

namespace detail {

struct OrderTasks {
  std::int64_t order_id;
  int pickup = -1;
  int delivery = -1;
  double standalone_eta = 0.0;
};

inline std::pair<std::int64_t, std::int64_t> grid_cell(const Location& l, double cell) {
  return {static_cast<std::int64_t>(std::floor(l.x / cell)), static_cast<std::int64_t>(std::floor(l.y / cell))};
}

/// Insertion positions next to route tasks sharing `task`'s grid cell;
/// empty when the cell holds none of them.
inline std::vector<std::size_t> clustered_positions(const Route& route, const ProblemInstance& inst, int task,
                                                    double cell) {
  const auto target = grid_cell(inst.tasks[static_cast<std::size_t>(task)].location, cell);
  std::vector<std::size_t> pos;
  for (std::size_t j = 0; j < route.size(); ++j) {
    if (grid_cell(inst.tasks[static_cast<std::size_t>(route[j])].location, cell) == target) {
      pos.push_back(j);
      pos.push_back(j + 1);
    }
  }
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  return pos;
}

}  // namespace detail

/// Orders sorted by standalone ETA, then greedy cheapest insertion of each
/// order's pickup and delivery, with insertion points pruned to the task's
/// grid cell when that cell is already visited by the route.
inline Route tsfh_initialize(const ProblemInstance& inst, const HeuristicConfig& cfg) {
  std::map<std::int64_t, detail::OrderTasks> by_order;
  const auto partner = pickup_partner(inst);
  for (const auto& t : inst.tasks) {
    auto& o = by_order.try_emplace(t.order_id, detail::OrderTasks{t.order_id}).first->second;
    if (t.is_pickup()) {
      o.pickup = t.task_id;
    } else {
      o.delivery = t.task_id;
    }
  }
  std::vector<detail::OrderTasks> orders;
  for (auto& [_, o] : by_order) {
    Route solo;
    if (o.pickup >= 0) solo.push_back(o.pickup);
    if (o.delivery >= 0) solo.push_back(o.delivery);
    o.standalone_eta = eta_along_route(solo, inst, cfg).back();
    orders.push_back(o);
  }
  std::stable_sort(orders.begin(), orders.end(), [](const auto& a, const auto& b) {
    return a.standalone_eta < b.standalone_eta || (a.standalone_eta == b.standalone_eta && a.order_id < b.order_id);
  });

  Route route;
  for (const auto& o : orders) {
    const bool linked = o.pickup >= 0 && o.delivery >= 0 &&
                        partner[static_cast<std::size_t>(o.delivery)] == o.pickup;
    if (route.empty()) {
      if (o.pickup >= 0) route.push_back(o.pickup);
      if (o.delivery >= 0) route.push_back(o.delivery);
      continue;
    }
    if (!linked) {
      // Unlinked task(s): insert each independently at its cheapest position.
      for (int task : {o.pickup, o.delivery}) {
        if (task < 0) continue;
        auto cand = detail::clustered_positions(route, inst, task, cfg.cluster_cell_m);
        if (cand.empty())
          for (std::size_t p = 0; p <= route.size(); ++p) cand.push_back(p);
        double best = std::numeric_limits<double>::infinity();
        Route best_route;
        for (std::size_t p : cand) {
          Route r = route;
          r.insert(r.begin() + static_cast<std::ptrdiff_t>(p), task);
          if (!satisfies_precedence(inst, r)) continue;
          const double obj = detail::objective_unchecked(r, inst, cfg);
          if (obj < best) {
            best = obj;
            best_route = std::move(r);
          }
        }
        route = std::move(best_route);
      }
      continue;
    }

    auto pick_pos = detail::clustered_positions(route, inst, o.pickup, cfg.cluster_cell_m);
    if (pick_pos.empty())
      for (std::size_t p = 0; p <= route.size(); ++p) pick_pos.push_back(p);
    double best = std::numeric_limits<double>::infinity();
    Route best_route;
    for (std::size_t p : pick_pos) {
      Route with_pickup = route;
      with_pickup.insert(with_pickup.begin() + static_cast<std::ptrdiff_t>(p), o.pickup);
      std::vector<std::size_t> del_pos;
      for (std::size_t q : detail::clustered_positions(with_pickup, inst, o.delivery, cfg.cluster_cell_m))
        if (q > p) del_pos.push_back(q);
      if (del_pos.empty())
        for (std::size_t q = p + 1; q <= with_pickup.size(); ++q) del_pos.push_back(q);
      for (std::size_t q : del_pos) {
        Route r = with_pickup;
        r.insert(r.begin() + static_cast<std::ptrdiff_t>(q), o.delivery);
        const double obj = detail::objective_unchecked(r, inst, cfg);
        if (obj < best) {
          best = obj;
          best_route = std::move(r);
        }
      }
    }
    route = std::move(best_route);
  }
  return route;
}

/// Margin-triggered relocation. Tasks finishing more than margin_s before
/// their promise may move later in the route; tasks more than margin_s late
/// may move earlier. Each iteration applies the best strictly improving
/// relocation over all triggered tasks.
inline Route tsfh_local_search(Route route, const ProblemInstance& inst, const HeuristicConfig& cfg) {
  double current = route_objective(route, inst, cfg);
  for (int iter = 0; iter < cfg.local_search_max_iters; ++iter) {
    const auto etas = eta_along_route(route, inst, cfg);
    double best = current;
    Route best_route;
    for (std::size_t i = 0; i < route.size(); ++i) {
      const auto& t = inst.tasks[static_cast<std::size_t>(route[i])];
      const double slack = static_cast<double>(t.promised_time) - etas[i];
      const bool move_later = slack > cfg.margin_s;
      const bool move_earlier = -slack > cfg.margin_s;
      if (!move_later && !move_earlier) continue;
      if (move_earlier && i == 0) continue;
      Route without = route;
      without.erase(without.begin() + static_cast<std::ptrdiff_t>(i));
      const std::size_t lo = move_later ? i + 1 : 0;
      const std::size_t hi = move_later ? without.size() : i - 1;
      for (std::size_t p = lo; p <= hi; ++p) {
        Route r = without;
        r.insert(r.begin() + static_cast<std::ptrdiff_t>(p), route[i]);
        if (!satisfies_precedence(inst, r)) continue;
        const double obj = detail::objective_unchecked(r, inst, cfg);
        if (obj < best - 1e-9) {
          best = obj;
          best_route = std::move(r);
        }
      }
    }
    if (best_route.empty()) break;
    route = std::move(best_route);
    current = best;
  }
  return route;
}

inline ReferenceSolution tsfh(const ProblemInstance& inst, const HeuristicConfig& cfg) {
  ReferenceSolution sol;
  sol.route = tsfh_local_search(tsfh_initialize(inst, cfg), inst, cfg);
  sol.etas = eta_along_route(sol.route, inst, cfg);
  sol.objective = route_objective(sol.route, inst, cfg);
  return sol;
}

namespace detail {

template <class Key>
Route greedy_by(const ProblemInstance& inst, Key key) {
  const auto partner = pickup_partner(inst);
  std::vector<char> done(inst.size(), 0);
  Route route;
  Location pos = inst.courier.location;
  for (std::size_t step = 0; step < inst.size(); ++step) {
    int best = -1;
    double best_key = 0.0;
    for (const auto& t : inst.tasks) {
      const auto id = static_cast<std::size_t>(t.task_id);
      if (done[id] || (partner[id] >= 0 && !done[static_cast<std::size_t>(partner[id])])) continue;
      const double k = key(pos, t);
      if (best < 0 || k < best_key || (k == best_key && t.task_id < best)) {
        best = t.task_id;
        best_key = k;
      }
    }
    route.push_back(best);
    done[static_cast<std::size_t>(best)] = 1;
    pos = inst.tasks[static_cast<std::size_t>(best)].location;
  }
  return route;
}

}  // namespace detail

/// Nearest feasible task next; ties by task_id.
inline Route disgreedy(const ProblemInstance& inst) {
  return detail::greedy_by(inst, [](const Location& pos, const TaskNode& t) { return distance(pos, t.location); });
}

/// Earliest promised feasible task next; ties by task_id.
inline Route timerank(const ProblemInstance& inst) {
  return detail::greedy_by(inst, [](const Location&, const TaskNode& t) { return static_cast<double>(t.promised_time); });
}

}  // namespace mrgrp
