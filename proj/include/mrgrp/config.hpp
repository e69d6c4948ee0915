#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>
#include <toml.hpp>

#include "mrgrp/decoder.hpp"
#include "mrgrp/encoder.hpp"
#include "mrgrp/errors.hpp"
#include "mrgrp/generator.hpp"
#include "mrgrp/graph.hpp"
#include "mrgrp/heuristics.hpp"
#include "mrgrp/optim.hpp"

namespace mrgrp {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  GraphConfig graph;
  HeuristicConfig heuristic;

  void validate() const {
    encoder.validate();
    decoder.validate();
    heuristic.validate();
    if (graph.k_spatial < 1 || graph.k_temporal < 1) throw ConfigError("graph k values must be >= 1");
  }
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::size_t patience = 5;
  AdamHyper adam;
  double alpha = 0.1;
  double eta_loss_unit_s = 60.0;
  std::uint64_t seed = 7;

  void validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(alpha >= 0.0)) throw ConfigError("train.alpha must be >= 0");
    if (!(adam.lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
      throw ConfigError("train.beta1/beta2 must be in [0, 1)");
    if (!(adam.eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
    if (!(eta_loss_unit_s > 0.0)) throw ConfigError("train.eta_loss_unit_s must be positive");
  }
};

struct RunConfig {
  GeneratorConfig generator;
  ModelConfig model;
  TrainConfig train;

  void validate() const {
    generator.validate();
    model.validate();
    train.validate();
  }
};

namespace detail {

class TomlSection {
 public:
  TomlSection(const toml::table* t, std::string name) : table_(t), name_(std::move(name)) {
    if (!table_) return;
    for (const auto& [k, _] : *table_) seen_.insert(std::string(k.str()));
  }

  template <class T>
  void read(const char* key, T& out) {
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    seen_.erase(key);
    if constexpr (std::is_same_v<T, bool>) {
      auto v = node->value<bool>();
      if (!v) fail(key, "a boolean");
      out = *v;
    } else if constexpr (std::is_integral_v<T>) {
      auto v = node->value<std::int64_t>();
      if (!v) fail(key, "an integer");
      if (std::is_unsigned_v<T> && *v < 0) fail(key, "a non-negative integer");
      out = static_cast<T>(*v);
    } else {
      auto v = node->value<double>();
      if (!v) fail(key, "a number");
      out = static_cast<T>(*v);
    }
  }

  template <std::size_t N>
  void read_array(const char* key, std::array<double, N>& out) {
    if (!table_) return;
    const auto* node = table_->get(key);
    if (!node) return;
    seen_.erase(key);
    const auto* arr = node->as_array();
    if (!arr || arr->size() != N) fail(key, ("an array of " + std::to_string(N) + " numbers").c_str());
    for (std::size_t i = 0; i < N; ++i) {
      auto v = (*arr)[i].value<double>();
      if (!v) fail(key, "an array of numbers");
      out[i] = *v;
    }
  }

  void finish() const {
    if (!seen_.empty()) throw ConfigError("unknown key '" + *seen_.begin() + "' in [" + name_ + "]");
  }

 private:
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("[" + name_ + "] " + key + " must be " + what);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(const toml::table& root) {
  static const std::set<std::string> sections{"generator", "graph", "heuristic", "encoder", "decoder", "train"};
  for (const auto& [k, v] : root) {
    if (!sections.count(std::string(k.str())) || !v.is_table())
      throw ConfigError("unknown top-level entry '" + std::string(k.str()) + "'");
  }
  RunConfig c;
  auto section = [&](const char* name) { return detail::TomlSection(root[name].as_table(), name); };

  auto g = section("generator");
  auto& gc = c.generator;
  g.read("n_orders_min", gc.n_orders_min);
  g.read("n_orders_max", gc.n_orders_max);
  g.read("region_size_m", gc.region_size_m);
  g.read("restaurant_cluster_count", gc.restaurant_cluster_count);
  g.read("cluster_spread_m", gc.cluster_spread_m);
  g.read("speed_mps", gc.speed_mps);
  g.read("pickup_ready_offset_min_s", gc.pickup_ready_offset_min_s);
  g.read("pickup_ready_offset_max_s", gc.pickup_ready_offset_max_s);
  g.read("promise_offset_min_s", gc.promise_offset_min_s);
  g.read("promise_offset_max_s", gc.promise_offset_max_s);
  g.read("courier_count", gc.courier_count);
  g.read_array("preference_mix", gc.preference_mix);
  g.read("label_noise", gc.label_noise);
  g.read("truncation_prob", gc.truncation_prob);
  g.read("seed", gc.seed);
  g.finish();

  auto gr = section("graph");
  gr.read("k_spatial", c.model.graph.k_spatial);
  gr.read("k_temporal", c.model.graph.k_temporal);
  gr.finish();

  auto h = section("heuristic");
  auto& hc = c.model.heuristic;
  h.read("speed_mps", hc.speed_mps);
  h.read("service_time_s", hc.service_time_s);
  h.read("margin_s", hc.margin_s);
  h.read("lateness_weight", hc.lateness_weight);
  h.read("cluster_cell_m", hc.cluster_cell_m);
  h.read("local_search_max_iters", hc.local_search_max_iters);
  h.finish();

  auto e = section("encoder");
  auto& ec = c.model.encoder;
  e.read("d_v", ec.d_v);
  e.read("d_h", ec.d_h);
  e.read("d_e", ec.d_e);
  e.read("heads", ec.heads);
  e.read("layers", ec.layers);
  e.read("residual", ec.residual);
  e.read("fm_factor", ec.fm_factor);
  e.read("deep_hidden", ec.deep_hidden);
  e.read("deep_out", ec.deep_out);
  e.finish();

  auto d = section("decoder");
  auto& dc = c.model.decoder;
  d.read("d_lstm", dc.d_lstm);
  d.read("d_id", dc.d_id);
  d.read("d_c", dc.d_c);
  d.read("d_score", dc.d_score);
  d.read("eta_hidden", dc.eta_hidden);
  d.read("courier_table", dc.courier_table);
  d.read("max_tasks", dc.max_tasks);
  d.read("mask_k", dc.mask_k);
  d.read("use_dynamic", dc.use_dynamic);
  d.read("use_reference", dc.use_reference);
  d.finish();

  auto t = section("train");
  auto& tc = c.train;
  t.read("epochs", tc.epochs);
  t.read("batch_size", tc.batch_size);
  t.read("patience", tc.patience);
  t.read("lr", tc.adam.lr);
  t.read("beta1", tc.adam.beta1);
  t.read("beta2", tc.adam.beta2);
  t.read("adam_eps", tc.adam.eps);
  t.read("alpha", tc.alpha);
  t.read("eta_loss_unit_s", tc.eta_loss_unit_s);
  t.read("seed", tc.seed);
  t.finish();

  c.validate();
  return c;
}

inline RunConfig parse_run_config_text(std::string_view text, const std::string& source = "config") {
  try {
    return parse_run_config(toml::parse(text, source));
  } catch (const toml::parse_error& err) {
    throw ConfigError(source + ": " + std::string(err.description()));
  }
}

inline RunConfig load_run_config(const std::string& path) {
  try {
    return parse_run_config(toml::parse_file(path));
  } catch (const toml::parse_error& err) {
    throw ConfigError(path + ": " + std::string(err.description()));
  }
}

inline nlohmann::json to_json(const ModelConfig& m) {
  const auto& e = m.encoder;
  const auto& d = m.decoder;
  const auto& h = m.heuristic;
  return {
      {"encoder",
       {{"d_v", e.d_v}, {"d_h", e.d_h}, {"d_e", e.d_e}, {"heads", e.heads}, {"layers", e.layers},
        {"residual", e.residual}, {"fm_factor", e.fm_factor}, {"deep_hidden", e.deep_hidden},
        {"deep_out", e.deep_out}}},
      {"decoder",
       {{"d_lstm", d.d_lstm}, {"d_id", d.d_id}, {"d_c", d.d_c}, {"d_score", d.d_score},
        {"eta_hidden", d.eta_hidden}, {"courier_table", d.courier_table}, {"max_tasks", d.max_tasks},
        {"mask_k", d.mask_k}, {"use_dynamic", d.use_dynamic}, {"use_reference", d.use_reference}}},
      {"graph", {{"k_spatial", m.graph.k_spatial}, {"k_temporal", m.graph.k_temporal}}},
      {"heuristic",
       {{"speed_mps", h.speed_mps}, {"service_time_s", h.service_time_s}, {"margin_s", h.margin_s},
        {"lateness_weight", h.lateness_weight}, {"cluster_cell_m", h.cluster_cell_m},
        {"local_search_max_iters", h.local_search_max_iters}}},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  const auto& e = j.at("encoder");
  m.encoder.d_v = e.at("d_v");
  m.encoder.d_h = e.at("d_h");
  m.encoder.d_e = e.at("d_e");
  m.encoder.heads = e.at("heads");
  m.encoder.layers = e.at("layers");
  m.encoder.residual = e.at("residual");
  m.encoder.fm_factor = e.at("fm_factor");
  m.encoder.deep_hidden = e.at("deep_hidden");
  m.encoder.deep_out = e.at("deep_out");
  const auto& d = j.at("decoder");
  m.decoder.d_lstm = d.at("d_lstm");
  m.decoder.d_id = d.at("d_id");
  m.decoder.d_c = d.at("d_c");
  m.decoder.d_score = d.at("d_score");
  m.decoder.eta_hidden = d.at("eta_hidden");
  m.decoder.courier_table = d.at("courier_table");
  m.decoder.max_tasks = d.at("max_tasks");
  m.decoder.mask_k = d.at("mask_k");
  m.decoder.use_dynamic = d.at("use_dynamic");
  m.decoder.use_reference = d.at("use_reference");
  m.graph.k_spatial = j.at("graph").at("k_spatial");
  m.graph.k_temporal = j.at("graph").at("k_temporal");
  const auto& h = j.at("heuristic");
  m.heuristic.speed_mps = h.at("speed_mps");
  m.heuristic.service_time_s = h.at("service_time_s");
  m.heuristic.margin_s = h.at("margin_s");
  m.heuristic.lateness_weight = h.at("lateness_weight");
  m.heuristic.cluster_cell_m = h.at("cluster_cell_m");
  m.heuristic.local_search_max_iters = h.at("local_search_max_iters");
  m.validate();
  return m;
}

inline nlohmann::json to_json(const NormStats& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

inline NormStats norm_stats_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<std::vector<double>>(), j.at("stddev").get<std::vector<double>>()};
}

}  // namespace mrgrp
