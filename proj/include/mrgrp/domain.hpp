#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mrgrp {

struct Location {
  double x = 0.0;  // meters, local planar frame
  double y = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

inline double distance(const Location& a, const Location& b) { return std::hypot(a.x - b.x, a.y - b.y); }

enum class TaskKind : std::uint8_t { Pickup = 0, Delivery = 1 };

inline const char* to_string(TaskKind k) { return k == TaskKind::Pickup ? "pickup" : "delivery"; }

/// Cardinalities of the categorical task codes.
inline constexpr int kServiceTypes = 3;
inline constexpr int kTimeTypes = 2;

/// Numerical task feature slots.
enum NumericalSlot : std::size_t {
  kDistanceToCourier = 0,
  kTaskDensity = 1,
  kAreaMeanSpeed = 2,
  kAreaOnTimeRate = 3,
  kNumericalSlots = 4,
};

struct TaskNode {
  int task_id = 0;
  std::int64_t order_id = 0;
  TaskKind kind = TaskKind::Pickup;
  Location location;
  std::int64_t earliest_pickup_time = 0;  // pickups only; 0 otherwise
  std::int64_t promised_time = 0;
  std::vector<int> categorical_features;     // service type, time type
  std::vector<double> numerical_features;    // see NumericalSlot
  bool picked_up = false;  // delivery whose food is already on board

  bool is_pickup() const { return kind == TaskKind::Pickup; }
  bool is_delivery() const { return kind == TaskKind::Delivery; }

  friend bool operator==(const TaskNode&, const TaskNode&) = default;
};

struct CourierState {
  std::int64_t courier_id = 0;
  Location location;
  double speed = 4.0;  // m/s
  std::int64_t current_time = 0;
  std::vector<double> numerical_features;

  friend bool operator==(const CourierState&, const CourierState&) = default;
};

struct ProblemInstance {
  std::int64_t instance_id = 0;
  std::vector<TaskNode> tasks;
  CourierState courier;

  std::size_t size() const { return tasks.size(); }
  std::int64_t timestamp() const { return courier.current_time; }

  friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;
};

struct RouteLabel {
  std::vector<int> order;
  std::vector<double> arrival_times;

  friend bool operator==(const RouteLabel&, const RouteLabel&) = default;
};

struct LabeledInstance {
  ProblemInstance instance;
  RouteLabel label;

  friend bool operator==(const LabeledInstance&, const LabeledInstance&) = default;
};

using Route = std::vector<int>;

/// For each task, the task_id of the pickup it must follow, or -1.
inline std::vector<int> pickup_partner(const ProblemInstance& inst) {
  std::vector<int> partner(inst.size(), -1);
  std::map<std::int64_t, int> pickup_of;
  for (const auto& t : inst.tasks)
    if (t.is_pickup()) pickup_of[t.order_id] = t.task_id;
  for (const auto& t : inst.tasks) {
    if (!t.is_delivery() || t.picked_up) continue;
    auto it = pickup_of.find(t.order_id);
    if (it != pickup_of.end()) partner[static_cast<std::size_t>(t.task_id)] = it->second;
  }
  return partner;
}

/// Pickup-before-delivery over a (possibly partial) sequence of task ids.
/// A delivery whose pickup exists in the instance needs that pickup earlier
/// in the sequence.
inline bool satisfies_precedence(const ProblemInstance& inst, const std::vector<int>& seq) {
  const auto partner = pickup_partner(inst);
  std::vector<char> seen(inst.size(), 0);
  for (int id : seq) {
    if (id < 0 || static_cast<std::size_t>(id) >= inst.size() || seen[static_cast<std::size_t>(id)]) return false;
    const int p = partner[static_cast<std::size_t>(id)];
    if (p >= 0 && !seen[static_cast<std::size_t>(p)]) return false;
    seen[static_cast<std::size_t>(id)] = 1;
  }
  return true;
}

/// Full permutation of all tasks satisfying pickup-before-delivery.
inline bool is_feasible_route(const ProblemInstance& inst, const Route& route) {
  return route.size() == inst.size() && satisfies_precedence(inst, route);
}

struct Violation {
  int task_id = -1;  // -1 when not tied to one task
  std::string rule;
  std::string detail;
};

/// Checks instance invariants; an empty list means valid.
inline std::vector<Violation> validate_instance(const ProblemInstance& inst) {
  std::vector<Violation> out;
  const std::size_t n = inst.size();
  std::vector<int> seen(n, 0);
  for (const auto& t : inst.tasks) {
    if (t.task_id < 0 || static_cast<std::size_t>(t.task_id) >= n) {
      out.push_back({t.task_id, "id out of range", "task_id outside 0..n-1"});
      continue;
    }
    if (seen[static_cast<std::size_t>(t.task_id)]++) out.push_back({t.task_id, "id collision", "task_id used twice"});
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) out.push_back({static_cast<int>(i), "id gap", "no task with this id"});

  std::map<std::int64_t, int> pickups, deliveries;
  for (const auto& t : inst.tasks) {
    auto& counter = t.is_pickup() ? pickups : deliveries;
    if (++counter[t.order_id] > 1) {
      out.push_back({t.task_id, t.is_pickup() ? "duplicate pickup" : "duplicate delivery",
                     "order " + std::to_string(t.order_id)});
    }
    if (!std::isfinite(t.location.x) || !std::isfinite(t.location.y)) {
      out.push_back({t.task_id, "non-finite location", ""});
    }
    if (t.categorical_features.size() != 2 || t.categorical_features[0] < 0 ||
        t.categorical_features[0] >= kServiceTypes || t.categorical_features[1] < 0 ||
        t.categorical_features[1] >= kTimeTypes) {
      out.push_back({t.task_id, "bad categorical features", "expected [service_type, time_type]"});
    }
    if (t.numerical_features.size() != kNumericalSlots) {
      out.push_back({t.task_id, "bad numerical features",
                     "expected " + std::to_string(kNumericalSlots) + " values"});
    }
    if (t.is_pickup() && t.picked_up) out.push_back({t.task_id, "picked-up pickup", "only deliveries carry picked_up"});
  }
  for (const auto& t : inst.tasks) {
    if (t.is_delivery() && !t.picked_up && !pickups.count(t.order_id)) {
      out.push_back({t.task_id, "orphan delivery", "order " + std::to_string(t.order_id) + " has no pickup"});
    }
    if (t.is_delivery() && t.picked_up && pickups.count(t.order_id)) {
      out.push_back({t.task_id, "picked-up delivery with pickup", "order " + std::to_string(t.order_id)});
    }
  }
  if (!(inst.courier.speed > 0.0)) out.push_back({-1, "bad speed", "courier speed must be positive"});
  return out;
}

/// Label invariants relative to its instance.
inline std::vector<Violation> validate_label(const ProblemInstance& inst, const RouteLabel& label) {
  std::vector<Violation> out;
  if (label.order.size() != label.arrival_times.size()) {
    out.push_back({-1, "label length", "order and arrival_times differ in length"});
  }
  if (label.order.size() > inst.size()) out.push_back({-1, "label length", "label longer than task list"});
  if (!satisfies_precedence(inst, label.order)) {
    out.push_back({-1, "label precedence", "label is not a duplicate-free precedence-valid sequence"});
  }
  for (std::size_t i = 1; i < label.arrival_times.size(); ++i) {
    if (!(label.arrival_times[i] > label.arrival_times[i - 1])) {
      out.push_back({label.order[i], "label times", "arrival_times not strictly increasing"});
      break;
    }
  }
  return out;
}

}  // namespace mrgrp
