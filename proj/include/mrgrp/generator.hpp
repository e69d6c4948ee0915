#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mrgrp/domain.hpp"
#include "mrgrp/errors.hpp"
#include "mrgrp/random.hpp"

namespace mrgrp {

enum class CourierPreference : std::uint8_t { DistanceGreedy = 0, UrgencyFirst = 1, Balanced = 2 };

struct PreferenceWeights {
  double distance;
  double time;
};

inline PreferenceWeights preference_weights(CourierPreference p) {
  switch (p) {
    case CourierPreference::DistanceGreedy: return {1.0, 0.0};
    case CourierPreference::UrgencyFirst: return {0.0, 1.0};
    case CourierPreference::Balanced: return {0.5, 0.5};
  }
  return {1.0, 0.0};
}

/// Scale constants used to make distance and remaining time commensurable
/// in the expert's scoring.
inline constexpr double kExpertDistanceScaleM = 1000.0;
inline constexpr double kExpertTimeScaleS = 1800.0;
inline constexpr double kServiceTimeS = 60.0;

struct GeneratorConfig {
  int n_orders_min = 2;
  int n_orders_max = 6;
  double region_size_m = 3000.0;
  int restaurant_cluster_count = 3;
  double cluster_spread_m = 250.0;
  double speed_mps = 4.0;
  std::int64_t pickup_ready_offset_min_s = 300;
  std::int64_t pickup_ready_offset_max_s = 1200;
  std::int64_t promise_offset_min_s = 1800;
  std::int64_t promise_offset_max_s = 3000;
  int courier_count = 200;
  std::array<double, 3> preference_mix{0.34, 0.33, 0.33};  // distance, urgency, balanced
  double label_noise = 0.1;
  double truncation_prob = 0.1;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_orders_min < 1 || n_orders_max < n_orders_min) throw ConfigError("n_orders_range must be nonempty and >= 1");
    if (!(region_size_m > 0)) throw ConfigError("region_size_m must be positive");
    if (restaurant_cluster_count < 1) throw ConfigError("restaurant_cluster_count must be >= 1");
    if (!(cluster_spread_m >= 0)) throw ConfigError("cluster_spread_m must be >= 0");
    if (!(speed_mps > 0)) throw ConfigError("speed_mps must be positive");
    if (pickup_ready_offset_min_s < 0 || pickup_ready_offset_max_s < pickup_ready_offset_min_s) {
      throw ConfigError("pickup_ready_offset_range must be nonempty and >= 0");
    }
    if (promise_offset_min_s < 0 || promise_offset_max_s < promise_offset_min_s) {
      throw ConfigError("promise_offset_range must be nonempty and >= 0");
    }
    if (courier_count < 1) throw ConfigError("courier_count must be >= 1");
    double total = 0.0;
    for (double f : preference_mix) {
      if (f < 0.0) throw ConfigError("preference_mix fractions must be >= 0");
      total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("preference_mix fractions must sum to 1");
    if (label_noise < 0.0 || label_noise > 1.0) throw ConfigError("label_noise must be in [0, 1]");
    if (truncation_prob < 0.0 || truncation_prob > 1.0) throw ConfigError("truncation_prob must be in [0, 1]");
  }
};

/// Fixed per-config world: restaurant cluster centres and the preference
/// class of every courier id.
struct CourierWorld {
  std::vector<Location> cluster_centres;
  std::vector<CourierPreference> preference_of;

  static CourierWorld from(const GeneratorConfig& cfg) {
    CourierWorld w;
    Rng rng(Rng::splitmix(cfg.seed ^ 0x5eedc0ffeeULL));
    const double margin = 0.15 * cfg.region_size_m;
    for (int c = 0; c < cfg.restaurant_cluster_count; ++c) {
      w.cluster_centres.push_back(
          {rng.uniform(margin, cfg.region_size_m - margin), rng.uniform(margin, cfg.region_size_m - margin)});
    }
    const auto n = static_cast<std::size_t>(cfg.courier_count);
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(ids[i - 1], ids[j]);
    }
    w.preference_of.assign(n, CourierPreference::Balanced);
    const auto n_dist = static_cast<std::size_t>(std::llround(cfg.preference_mix[0] * static_cast<double>(n)));
    const auto n_urg = static_cast<std::size_t>(std::llround(cfg.preference_mix[1] * static_cast<double>(n)));
    for (std::size_t k = 0; k < n; ++k) {
      CourierPreference p = CourierPreference::Balanced;
      if (k < n_dist) {
        p = CourierPreference::DistanceGreedy;
      } else if (k < n_dist + n_urg) {
        p = CourierPreference::UrgencyFirst;
      }
      w.preference_of[ids[k]] = p;
    }
    return w;
  }
};

/// Sequential greedy courier policy: at each step score every feasible task
/// by w_d * distance / 1000 m + w_t * (promised - now) / 1800 s and take the
/// lowest (ties by task_id). With probability `label_noise` per step the
/// runner-up is taken instead. Arrival = previous departure + travel time;
/// each stop then costs a fixed service time.
inline RouteLabel expert_route(const ProblemInstance& inst, CourierPreference preference, Rng& rng,
                               double label_noise) {
  const auto w = preference_weights(preference);
  const auto partner = pickup_partner(inst);
  const std::size_t n = inst.size();
  std::vector<char> done(n, 0);
  Location pos = inst.courier.location;
  double now = static_cast<double>(inst.timestamp());
  RouteLabel label;
  struct Cand {
    double score;
    int id;
  };
  std::vector<Cand> cands;
  for (std::size_t step = 0; step < n; ++step) {
    cands.clear();
    for (const auto& t : inst.tasks) {
      const auto id = static_cast<std::size_t>(t.task_id);
      if (done[id]) continue;
      if (partner[id] >= 0 && !done[static_cast<std::size_t>(partner[id])]) continue;
      const double score = w.distance * distance(pos, t.location) / kExpertDistanceScaleM +
                           w.time * (static_cast<double>(t.promised_time) - now) / kExpertTimeScaleS;
      cands.push_back({score, t.task_id});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return a.score < b.score || (a.score == b.score && a.id < b.id);
    });
    std::size_t pick = 0;
    if (label_noise > 0.0 && rng.bernoulli(label_noise) && cands.size() >= 2) pick = 1;
    const auto& task = inst.tasks[static_cast<std::size_t>(cands[pick].id)];
    now += distance(pos, task.location) / inst.courier.speed;
    label.order.push_back(task.task_id);
    label.arrival_times.push_back(now);
    now += kServiceTimeS;
    pos = task.location;
    done[static_cast<std::size_t>(task.task_id)] = 1;
  }
  return label;
}

namespace detail {

inline double area_speed_field(const Location& l) {
  return 0.5 + 0.5 * std::sin(l.x / 700.0) * std::cos(l.y / 900.0);
}

inline double area_on_time_field(const Location& l) {
  return 0.5 + 0.5 * std::cos((l.x + l.y) / 1100.0);
}

}  // namespace detail

/// One synthetic snapshot plus its expert label. Deterministic in `rng`.
inline LabeledInstance generate_instance(Rng& rng, const GeneratorConfig& cfg, const CourierWorld& world,
                                         std::int64_t instance_id = 0) {
  LabeledInstance out;
  auto& inst = out.instance;
  inst.instance_id = instance_id;
  const double L = cfg.region_size_m;
  auto clip = [L](double v) { return std::clamp(v, 0.0, L); };

  auto& courier = inst.courier;
  courier.courier_id = rng.uniform_int(0, cfg.courier_count - 1);
  courier.location = {rng.uniform(0.0, L), rng.uniform(0.0, L)};
  courier.speed = cfg.speed_mps;
  courier.current_time = rng.uniform_int(8 * 3600, 20 * 3600);
  const std::int64_t t0 = courier.current_time;

  const auto n_orders = static_cast<int>(rng.uniform_int(cfg.n_orders_min, cfg.n_orders_max));
  const std::size_t n = 2 * static_cast<std::size_t>(n_orders);

  std::vector<int> slots(n);
  for (std::size_t i = 0; i < n; ++i) slots[i] = static_cast<int>(i);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(slots[i - 1], slots[j]);
  }

  std::vector<Location> used;
  auto distinct = [&used](const Location& p) {
    for (const auto& q : used)
      if (distance(p, q) < 1.0) return false;
    return true;
  };
  auto draw_restaurant = [&]() {
    for (;;) {
      const auto& c = world.cluster_centres[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(world.cluster_centres.size()) - 1))];
      Location p{clip(c.x + rng.normal(0.0, cfg.cluster_spread_m)), clip(c.y + rng.normal(0.0, cfg.cluster_spread_m))};
      if (distinct(p)) return p;
    }
  };
  auto draw_customer = [&]() {
    for (;;) {
      Location p{rng.uniform(0.0, L), rng.uniform(0.0, L)};
      if (distinct(p)) return p;
    }
  };

  inst.tasks.resize(n);
  for (int o = 0; o < n_orders; ++o) {
    const std::int64_t order_id = instance_id * 100 + o;
    const std::int64_t ready = t0 + rng.uniform_int(cfg.pickup_ready_offset_min_s, cfg.pickup_ready_offset_max_s);
    const std::int64_t promise_offset = rng.uniform_int(cfg.promise_offset_min_s, cfg.promise_offset_max_s);
    const int service_type = static_cast<int>(rng.uniform_int(0, kServiceTypes - 1));
    const int time_type =
        promise_offset >= (cfg.promise_offset_min_s + cfg.promise_offset_max_s) / 2 ? 1 : 0;

    TaskNode pickup;
    pickup.task_id = slots[2 * static_cast<std::size_t>(o)];
    pickup.order_id = order_id;
    pickup.kind = TaskKind::Pickup;
    pickup.location = draw_restaurant();
    used.push_back(pickup.location);
    pickup.earliest_pickup_time = ready;
    pickup.promised_time = ready;
    pickup.categorical_features = {service_type, time_type};

    TaskNode delivery;
    delivery.task_id = slots[2 * static_cast<std::size_t>(o) + 1];
    delivery.order_id = order_id;
    delivery.kind = TaskKind::Delivery;
    delivery.location = draw_customer();
    used.push_back(delivery.location);
    delivery.promised_time = std::max(t0 + promise_offset, ready + 1);
    delivery.categorical_features = {service_type, time_type};

    inst.tasks[static_cast<std::size_t>(pickup.task_id)] = std::move(pickup);
    inst.tasks[static_cast<std::size_t>(delivery.task_id)] = std::move(delivery);
  }

  for (auto& t : inst.tasks) {
    int nearby = 0;
    for (const auto& u : inst.tasks)
      if (distance(t.location, u.location) < 500.0) ++nearby;
    t.numerical_features.assign(kNumericalSlots, 0.0);
    t.numerical_features[kDistanceToCourier] = distance(t.location, courier.location);
    t.numerical_features[kTaskDensity] = static_cast<double>(nearby);
    t.numerical_features[kAreaMeanSpeed] =
        cfg.speed_mps * (0.8 + 0.4 * detail::area_speed_field(t.location)) + rng.normal(0.0, 0.05);
    t.numerical_features[kAreaOnTimeRate] =
        std::clamp(0.8 + 0.15 * detail::area_on_time_field(t.location) + rng.normal(0.0, 0.02), 0.0, 1.0);
  }
  courier.numerical_features = {static_cast<double>(n), cfg.speed_mps};

  const auto pref = world.preference_of[static_cast<std::size_t>(courier.courier_id)];
  out.label = expert_route(inst, pref, rng, cfg.label_noise);
  if (n >= 2 && cfg.truncation_prob > 0.0 && rng.bernoulli(cfg.truncation_prob)) {
    const auto keep = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n) - 1));
    out.label.order.resize(keep);
    out.label.arrival_times.resize(keep);
  }
  return out;
}

inline LabeledInstance generate_instance(Rng& rng, const GeneratorConfig& cfg, std::int64_t instance_id = 0) {
  return generate_instance(rng, cfg, CourierWorld::from(cfg), instance_id);
}

/// Instance i is drawn from its own stream derived from (seed, first_id + i),
/// so generation can be split across workers without changing results.
inline std::vector<LabeledInstance> generate_dataset(const GeneratorConfig& cfg, std::size_t count,
                                                     std::int64_t first_id = 0) {
  cfg.validate();
  const auto world = CourierWorld::from(cfg);
  std::vector<LabeledInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto id = first_id + static_cast<std::int64_t>(i);
    Rng rng(Rng::splitmix(cfg.seed) ^ Rng::splitmix(static_cast<std::uint64_t>(id) + 1));
    out.push_back(generate_instance(rng, cfg, world, id));
  }
  return out;
}

}  // namespace mrgrp
