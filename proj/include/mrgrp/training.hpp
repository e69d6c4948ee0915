#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrgrp/checkpoint.hpp"
#include "mrgrp/config.hpp"
#include "mrgrp/dataset_io.hpp"
#include "mrgrp/decoder.hpp"
#include "mrgrp/encoder.hpp"
#include "mrgrp/graph.hpp"
#include "mrgrp/heuristics.hpp"
#include "mrgrp/metrics.hpp"
#include "mrgrp/nn.hpp"
#include "mrgrp/optim.hpp"
#include "mrgrp/parallel.hpp"
#include "mrgrp/random.hpp"

namespace mrgrp {

/// Parameters plus the configuration and feature statistics they were
/// trained with. Move-only: the param structs alias the store's tensors.
class Model {
 public:
  Model(const ModelConfig& config, NormStats norm_stats, std::uint64_t seed) : cfg(config), norm(std::move(norm_stats)) {
    cfg.validate();
    Rng rng(Rng::splitmix(seed ^ 0x6d6f64656cULL));
    enc = EncoderParams::make(store, cfg.encoder, rng);
    dec = DecoderParams::make(store, cfg.decoder, cfg.encoder.d_e, rng);
  }
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  Model clone() const {
    Model m(cfg, norm, 0);
    m.store.copy_values_from(store);
    return m;
  }

  ModelConfig cfg;
  NormStats norm;
  ParameterStore store;
  EncoderParams enc;
  DecoderParams dec;
};

/// Graph and reference route depend only on the instance, so they are built
/// once per dataset.
struct PreparedInstance {
  const LabeledInstance* data = nullptr;
  MultiRelGraph graph;
  ReferenceSolution reference;

  const ProblemInstance& instance() const { return data->instance; }
  const RouteLabel& label() const { return data->label; }
};

inline std::vector<PreparedInstance> prepare(const std::vector<LabeledInstance>& data, const ModelConfig& cfg,
                                             const NormStats& norm, std::size_t threads = 1) {
  std::vector<PreparedInstance> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    out[i].data = &data[i];
    out[i].graph = build_graph(data[i].instance, cfg.graph, norm);
    out[i].reference = tsfh(data[i].instance, cfg.heuristic);
  });
  return out;
}

inline NormStats dataset_norm_stats(const std::vector<LabeledInstance>& data) {
  return compute_norm_stats(data, [](const LabeledInstance& li) -> const ProblemInstance& { return li.instance; });
}

// --- losses ------------------------------------------------------------------

inline constexpr std::array<double, 9> kQuantileGrid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

/// Mean over label steps of -log p(label task).
inline double route_ce_loss(const std::vector<std::vector<double>>& stepwise_probs, const std::vector<int>& label) {
  if (label.empty()) return 0.0;
  if (stepwise_probs.size() < label.size()) throw DimensionError("route_ce_loss: fewer steps than label entries");
  double s = 0.0;
  for (std::size_t z = 0; z < label.size(); ++z) {
    const double p = stepwise_probs[z].at(static_cast<std::size_t>(label[z]));
    if (!(p > 0.0)) throw ConsistencyError("route_ce_loss: label task has zero probability at step " + std::to_string(z));
    s -= std::log(p);
  }
  return s / static_cast<double>(label.size());
}

/// (1/9) sum over the quantile grid of the pinball loss, averaged over steps.
inline double quantile_mae_loss(const std::vector<double>& etas, const std::vector<double>& label_times,
                                double unit = 1.0) {
  if (etas.size() != label_times.size()) throw DimensionError("quantile_mae_loss: length mismatch");
  if (etas.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t z = 0; z < etas.size(); ++z) {
    const double x = (etas[z] - label_times[z]) / unit;
    for (double g : kQuantileGrid) s += x >= 0.0 ? (1.0 - g) * x : -g * x;
  }
  return s / (static_cast<double>(kQuantileGrid.size()) * static_cast<double>(etas.size()));
}

/// Differentiable form over the first label_times.size() predictions.
inline Tensor quantile_mae_loss(Tape& tape, const std::vector<Tensor>& etas, const std::vector<double>& label_times,
                                double unit = 1.0) {
  const std::size_t m = label_times.size();
  if (etas.size() < m) throw DimensionError("quantile_mae_loss: fewer predictions than label times");
  if (m == 0) return Tensor::scalar(0.0);
  std::vector<Tensor> used(etas.begin(), etas.begin() + static_cast<std::ptrdiff_t>(m));
  std::vector<double> scaled(m);
  for (std::size_t z = 0; z < m; ++z) scaled[z] = label_times[z];
  auto diff = tape.scale(tape.sub(tape.stack_rows(used), tape.constant({m, 1}, std::move(scaled))), 1.0 / unit);
  Tensor total;
  for (double g : kQuantileGrid) {
    auto term = tape.sum(tape.pinball(diff, g));
    total = total.defined() ? tape.add(total, term) : term;
  }
  return tape.scale(total, 1.0 / (static_cast<double>(kQuantileGrid.size()) * static_cast<double>(m)));
}

inline double total_loss(double route, double eta, double alpha) { return route + alpha * eta; }

inline Tensor total_loss(Tape& tape, const Tensor& route, const Tensor& eta, double alpha) {
  return tape.add(route, tape.scale(eta, alpha));
}

// --- forward passes ------------------------------------------------------------

struct InstanceLoss {
  Tensor total;
  double route_ce = 0.0;
  double eta = 0.0;
  DecodeTrace trace;
};

/// Teacher-forced losses of one instance.
inline InstanceLoss instance_loss(Tape& tape, const Model& model, const PreparedInstance& p, double alpha,
                                  double eta_unit_s) {
  const auto enc = encode(tape, p.graph, model.enc);
  InstanceLoss out;
  out.trace = decode_route(tape, enc, p.instance(), p.reference.route, model.dec, &p.label());
  Tensor ce = out.trace.step_ce.empty()
                  ? Tensor::scalar(0.0)
                  : tape.mean(tape.stack_rows(out.trace.step_ce));
  Tensor eta = quantile_mae_loss(tape, out.trace.eta, p.label().arrival_times, eta_unit_s);
  out.route_ce = ce.item();
  out.eta = eta.item();
  out.total = total_loss(tape, ce, eta, alpha);
  return out;
}

/// Greedy decoding without recording gradients.
inline RoutePrediction predict_route(const Model& model, const PreparedInstance& p) {
  Tape tape(false);
  const auto enc = encode(tape, p.graph, model.enc);
  return decode_route(tape, enc, p.instance(), p.reference.route, model.dec).prediction;
}

// --- evaluation ----------------------------------------------------------------

inline EvalPair eval_pair(const PreparedInstance& p, Route predicted) {
  return make_eval_pair(p.instance(), std::move(predicted), p.label().order);
}

struct ValidationSummary {
  double route_ce = 0.0;
  double sr1 = 0.0;
  double lsd = 0.0;
};

inline ValidationSummary validate_model(const Model& model, const std::vector<PreparedInstance>& data,
                                        const TrainConfig& cfg, std::size_t threads) {
  std::vector<double> ce(data.size()), sr(data.size()), lsd_v(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    {
      Tape tape(false);
      ce[i] = instance_loss(tape, model, data[i], cfg.alpha, cfg.eta_loss_unit_s).route_ce;
    }
    const auto pair = eval_pair(data[i], predict_route(model, data[i]).order);
    sr[i] = same_rate_at(pair, 1.0);
    lsd_v[i] = lsd(pair);
  });
  ValidationSummary s;
  if (data.empty()) return s;
  for (std::size_t i = 0; i < data.size(); ++i) {
    s.route_ce += ce[i];
    s.sr1 += sr[i];
    s.lsd += lsd_v[i];
  }
  const double n = static_cast<double>(data.size());
  s.route_ce /= n;
  s.sr1 /= n;
  s.lsd /= n;
  return s;
}

// --- training --------------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double train_ce = 0.0;
  double train_loss = 0.0;
  double val_ce = 0.0;
  double val_sr = 0.0;
  double val_lsd = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_ce = std::numeric_limits<double>::infinity();
};

inline std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_ce,val_ce,val_sr,val_lsd\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f\n", e.epoch, e.train_ce, e.val_ce, e.val_sr, e.val_lsd);
    out += buf;
  }
  return out;
}

/// Mini-batch Adam on teacher-forced losses. Keeps the parameters of the
/// epoch with the lowest validation CE and stops after `patience` epochs
/// without improvement (0 disables early stopping).
inline TrainResult train(Model& model, const std::vector<PreparedInstance>& train_set,
                         const std::vector<PreparedInstance>& val_set, const TrainConfig& cfg,
                         std::size_t threads = 1, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty()) throw TrainingError("train: empty training set");
  if (val_set.empty()) throw TrainingError("train: empty validation set");
  TrainResult result;
  AdamState adam;
  ParameterStore best = model.store.clone();
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(Rng::splitmix(cfg.seed ^ 0x747261696eULL));
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(stop - start);
      model.store.zero_grad();
      for (std::size_t b = start; b < stop; ++b) {
        const auto& p = train_set[order[b]];
        Tape tape;
        auto loss = instance_loss(tape, model, p, cfg.alpha, cfg.eta_loss_unit_s);
        const double value = loss.total.item();
        if (!std::isfinite(value))
          throw TrainingError("non-finite loss on instance " + std::to_string(p.instance().instance_id));
        log.train_ce += loss.route_ce;
        log.train_loss += value;
        tape.backward(tape.scale(loss.total, inv));
      }
      adam_step(model.store, adam, cfg.adam);
    }
    log.train_ce /= static_cast<double>(order.size());
    log.train_loss /= static_cast<double>(order.size());
    const auto v = validate_model(model, val_set, cfg, threads);
    log.val_ce = v.route_ce;
    log.val_sr = v.sr1;
    log.val_lsd = v.lsd;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.val_ce < result.best_val_ce) {
      result.best_val_ce = log.val_ce;
      result.best_epoch = epoch;
      best.copy_values_from(model.store);
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  model.store.copy_values_from(best);
  return result;
}

// --- checkpoints -------------------------------------------------------------------

inline void save_model(const std::string& path, const Model& model, nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json meta = {{"config", to_json(model.cfg)}, {"norm", to_json(model.norm)}};
  if (!extra.empty()) meta["info"] = std::move(extra);
  save_checkpoint(path, model.store, meta);
}

inline Model load_model(const std::string& path) {
  const auto ck = load_checkpoint(path);
  try {
    Model m(model_config_from_json(ck.meta.at("config")), norm_stats_from_json(ck.meta.at("norm")), 0);
    restore_parameters(ck, m.store);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  }
}

// --- reports ---------------------------------------------------------------------

inline constexpr std::array<const char*, 4> kPredictorNames{"model", "tsfh", "disgreedy", "timerank"};

struct MetricRow {
  std::string predictor;
  MetricValues mean;
  std::size_t n_instances = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  const MetricRow* find(const std::string& name) const {
    for (const auto& r : rows)
      if (r.predictor == name) return &r;
    return nullptr;
  }

  std::string to_csv() const {
    std::string out = "predictor,KRC,LSD,ED,SR@1,SR@200,HR@1,ACC@3,n_instances\n";
    char buf[256];
    for (const auto& r : rows) {
      const auto& m = r.mean;
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu\n", r.predictor.c_str(), m.krc, m.lsd,
                    m.ed, m.sr1, m.sr200, m.hr1, m.acc3, r.n_instances);
      out += buf;
    }
    return out;
  }
};

inline MetricRow summarize(const std::string& name, const std::vector<EvalPair>& pairs) {
  MetricAccumulator acc;
  for (const auto& p : pairs) acc.add(compute_metrics(p));
  return {name, acc.mean(), pairs.size()};
}

/// Routes of one named predictor over a dataset.
inline std::vector<Route> predictor_routes(const std::string& name, const std::vector<PreparedInstance>& data,
                                           const Model* model, std::size_t threads) {
  std::vector<Route> out(data.size());
  if (name == "model") {
    if (!model) throw ConfigError("predictor 'model' needs a trained model");
    parallel_for(data.size(), threads, [&](std::size_t i) { out[i] = predict_route(*model, data[i]).order; });
  } else if (name == "tsfh") {
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = data[i].reference.route;
  } else if (name == "disgreedy") {
    parallel_for(data.size(), threads, [&](std::size_t i) { out[i] = disgreedy(data[i].instance()); });
  } else if (name == "timerank") {
    parallel_for(data.size(), threads, [&](std::size_t i) { out[i] = timerank(data[i].instance()); });
  } else {
    throw ConfigError("unknown predictor '" + name + "'");
  }
  return out;
}

/// One summary row per predictor, in the given order.
inline MetricReport evaluate(const std::vector<PreparedInstance>& data, const Model* model,
                             const std::vector<std::string>& predictors, std::size_t threads = 1) {
  MetricReport report;
  for (const auto& name : predictors) {
    const auto routes = predictor_routes(name, data, model, threads);
    std::vector<EvalPair> pairs;
    pairs.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) pairs.push_back(eval_pair(data[i], routes[i]));
    report.rows.push_back(summarize(name, pairs));
  }
  return report;
}

// --- prediction files -----------------------------------------------------------------

struct PredictionRecord {
  std::int64_t instance_id = 0;
  Route order;
  std::vector<double> etas;
  std::vector<double> probs;
};

inline std::vector<PredictionRecord> predict(const Model& model, const std::vector<PreparedInstance>& data,
                                             std::size_t threads = 1) {
  std::vector<PredictionRecord> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    auto pred = predict_route(model, data[i]);
    out[i] = {data[i].instance().instance_id, std::move(pred.order), std::move(pred.etas),
              std::move(pred.chosen_probs)};
  });
  return out;
}

/// Records for a heuristic predictor: simulated ETAs and probability 1 for
/// every deterministic choice.
inline std::vector<PredictionRecord> heuristic_predictions(const std::string& name,
                                                           const std::vector<PreparedInstance>& data,
                                                           const HeuristicConfig& cfg, std::size_t threads = 1) {
  if (name == "model") throw ConfigError("heuristic_predictions: 'model' is not a heuristic");
  const auto routes = predictor_routes(name, data, nullptr, threads);
  std::vector<PredictionRecord> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = {data[i].instance().instance_id, routes[i], eta_along_route(routes[i], data[i].instance(), cfg),
              std::vector<double>(routes[i].size(), 1.0)};
  }
  return out;
}

inline nlohmann::json to_json(const PredictionRecord& r) {
  return {{"instance_id", r.instance_id}, {"order", r.order}, {"etas", r.etas}, {"probs", r.probs}};
}

inline void save_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write predictions " + path);
  for (const auto& r : records) os << to_json(r).dump() << '\n';
  if (!os) throw Error("failed writing predictions " + path);
}

/// Checks a record against its instance: a full feasible permutation with
/// one ETA and one probability per step.
inline void validate_prediction(const PredictionRecord& r, const ProblemInstance& inst) {
  if (!is_feasible_route(inst, r.order))
    throw ValidationError("predicted order is not a feasible permutation", r.instance_id);
  if (r.etas.size() != r.order.size() || r.probs.size() != r.order.size())
    throw ValidationError("etas/probs length differs from order", r.instance_id);
  for (double p : r.probs)
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability outside [0, 1]", r.instance_id);
}

inline std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open predictions " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord r;
      r.instance_id = j.at("instance_id").get<std::int64_t>();
      r.order = j.at("order").get<Route>();
      r.etas = j.at("etas").get<std::vector<double>>();
      r.probs = j.at("probs").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

/// Metrics of stored predictions against a labeled dataset, matched by
/// instance_id.
inline MetricRow evaluate_predictions(const std::vector<PredictionRecord>& records,
                                      const std::vector<LabeledInstance>& data, const std::string& name = "predictions") {
  std::map<std::int64_t, const LabeledInstance*> by_id;
  for (const auto& li : data) by_id[li.instance.instance_id] = &li;
  std::vector<EvalPair> pairs;
  for (const auto& r : records) {
    auto it = by_id.find(r.instance_id);
    if (it == by_id.end()) throw ValidationError("prediction for unknown instance", r.instance_id);
    validate_prediction(r, it->second->instance);
    pairs.push_back(make_eval_pair(it->second->instance, r.order, it->second->label.order));
  }
  return summarize(name, pairs);
}

}  // namespace mrgrp
