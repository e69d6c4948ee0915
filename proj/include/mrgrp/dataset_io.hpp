#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrgrp/domain.hpp"
#include "mrgrp/errors.hpp"

namespace mrgrp {

using nlohmann::json;

inline json to_json(const ProblemInstance& inst) {
  json courier = {
      {"courier_id", inst.courier.courier_id},
      {"x", inst.courier.location.x},
      {"y", inst.courier.location.y},
      {"speed", inst.courier.speed},
      {"current_time", inst.courier.current_time},
      {"numerical_features", inst.courier.numerical_features},
  };
  json tasks = json::array();
  for (const auto& t : inst.tasks) {
    json jt = {
        {"task_id", t.task_id},
        {"order_id", t.order_id},
        {"kind", to_string(t.kind)},
        {"x", t.location.x},
        {"y", t.location.y},
        {"promised_time", t.promised_time},
        {"categorical_features", t.categorical_features},
        {"numerical_features", t.numerical_features},
    };
    if (t.is_pickup()) jt["earliest_pickup_time"] = t.earliest_pickup_time;
    if (t.picked_up) jt["picked_up"] = true;
    tasks.push_back(std::move(jt));
  }
  return {{"instance_id", inst.instance_id}, {"courier", std::move(courier)}, {"tasks", std::move(tasks)}};
}

inline json to_json(const LabeledInstance& li) {
  json j = to_json(li.instance);
  j["label"] = {{"order", li.label.order}, {"arrival_times", li.label.arrival_times}};
  return j;
}

inline ProblemInstance instance_from_json(const json& j) {
  ProblemInstance inst;
  inst.instance_id = j.at("instance_id").get<std::int64_t>();
  const auto& c = j.at("courier");
  inst.courier.courier_id = c.at("courier_id").get<std::int64_t>();
  inst.courier.location = {c.at("x").get<double>(), c.at("y").get<double>()};
  inst.courier.speed = c.at("speed").get<double>();
  inst.courier.current_time = c.at("current_time").get<std::int64_t>();
  inst.courier.numerical_features = c.value("numerical_features", std::vector<double>{});
  for (const auto& jt : j.at("tasks")) {
    TaskNode t;
    t.task_id = jt.at("task_id").get<int>();
    t.order_id = jt.at("order_id").get<std::int64_t>();
    const auto kind = jt.at("kind").get<std::string>();
    if (kind == "pickup") {
      t.kind = TaskKind::Pickup;
    } else if (kind == "delivery") {
      t.kind = TaskKind::Delivery;
    } else {
      throw Error("unknown task kind '" + kind + "'");
    }
    t.location = {jt.at("x").get<double>(), jt.at("y").get<double>()};
    t.promised_time = jt.at("promised_time").get<std::int64_t>();
    t.earliest_pickup_time = jt.value("earliest_pickup_time", std::int64_t{0});
    t.categorical_features = jt.at("categorical_features").get<std::vector<int>>();
    t.numerical_features = jt.at("numerical_features").get<std::vector<double>>();
    t.picked_up = jt.value("picked_up", false);
    inst.tasks.push_back(std::move(t));
  }
  return inst;
}

inline LabeledInstance labeled_from_json(const json& j) {
  LabeledInstance li;
  li.instance = instance_from_json(j);
  const auto& l = j.at("label");
  li.label.order = l.at("order").get<std::vector<int>>();
  li.label.arrival_times = l.at("arrival_times").get<std::vector<double>>();
  return li;
}

/// Sorts tasks by id so tasks[i].task_id == i after validation passes.
inline void canonicalize(ProblemInstance& inst) {
  std::stable_sort(inst.tasks.begin(), inst.tasks.end(),
                   [](const TaskNode& a, const TaskNode& b) { return a.task_id < b.task_id; });
}

inline void throw_if_invalid(const LabeledInstance& li) {
  auto v = validate_instance(li.instance);
  auto lv = validate_label(li.instance, li.label);
  v.insert(v.end(), lv.begin(), lv.end());
  if (v.empty()) return;
  std::string msg = v.front().rule;
  if (v.front().task_id >= 0) msg += " (task " + std::to_string(v.front().task_id) + ")";
  if (!v.front().detail.empty()) msg += ": " + v.front().detail;
  throw ValidationError(msg, li.instance.instance_id);
}

inline void save_dataset(const std::string& path, const std::vector<LabeledInstance>& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write dataset " + path);
  for (const auto& li : data) os << to_json(li).dump() << '\n';
  if (!os) throw Error("failed writing dataset " + path);
}

/// One JSON object per line; blank lines are skipped.
inline std::vector<LabeledInstance> load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open dataset " + path);
  std::vector<LabeledInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    LabeledInstance li;
    try {
      li = labeled_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    } catch (const Error& e) {
      throw ParseError(e.what(), lineno);
    }
    canonicalize(li.instance);
    throw_if_invalid(li);
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace mrgrp
