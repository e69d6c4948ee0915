#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mrgrp/domain.hpp"
#include "mrgrp/encoder.hpp"
#include "mrgrp/errors.hpp"
#include "mrgrp/nn.hpp"
#include "mrgrp/tensor.hpp"

namespace mrgrp {

struct DecoderConfig {
  std::size_t d_lstm = 64;
  std::size_t d_id = 16;
  std::size_t d_c = 16;
  std::size_t d_score = 64;
  std::size_t eta_hidden = 32;
  std::size_t courier_table = 256;
  std::size_t max_tasks = 16;
  std::size_t mask_k = 8;
  bool use_dynamic = true;
  bool use_reference = true;

  void validate() const {
    if (d_lstm == 0 || d_id == 0 || d_c == 0 || d_score == 0 || eta_hidden == 0 || courier_table == 0 ||
        max_tasks == 0 || mask_k == 0) {
      throw ConfigError("decoder dimensions and mask_k must be positive");
    }
  }
};

inline constexpr double kDynDistanceScaleM = 1000.0;
inline constexpr double kDynTimeScaleS = 1800.0;
inline constexpr double kMaskedFeatureCap = 1e6;
inline constexpr double kEtaOffsetScaleS = 1000.0;
inline constexpr double kEtaMinGapS = 1.0;

struct DecoderParams {
  DecoderConfig cfg;
  std::size_t d_e = 0;
  LstmParams history;
  LstmParams reference;
  LstmParams eta;
  Linear eta_hidden;
  Linear eta_out;
  Tensor w1_task;  // d_e x d_score
  Tensor w1_dyn;   // 2 x d_score
  Tensor b1;       // d_score
  Linear w2;       // 2*d_lstm + d_id + d_c -> d_score
  Tensor courier_table;
  Tensor rid_table;

  static DecoderParams make(ParameterStore& ps, const DecoderConfig& cfg, std::size_t d_e, Rng& rng) {
    cfg.validate();
    DecoderParams p;
    p.cfg = cfg;
    p.d_e = d_e;
    p.history = LstmParams::make(ps, "dec.history", d_e, cfg.d_lstm, rng);
    p.reference = LstmParams::make(ps, "dec.reference", d_e, cfg.d_lstm, rng);
    p.eta = LstmParams::make(ps, "dec.eta", d_e + 1, cfg.d_lstm, rng);
    p.eta_hidden = Linear::make(ps, "dec.eta_head1", cfg.d_lstm, cfg.eta_hidden, rng);
    p.eta_out = Linear::make(ps, "dec.eta_head2", cfg.eta_hidden, 1, rng);
    p.w1_task = ps.xavier("dec.w1.task", d_e, cfg.d_score, rng);
    p.w1_dyn = ps.xavier("dec.w1.dyn", 2, cfg.d_score, rng);
    p.b1 = ps.zeros("dec.w1.b", {cfg.d_score});
    p.w2 = Linear::make(ps, "dec.w2", 2 * cfg.d_lstm + cfg.d_id + cfg.d_c, cfg.d_score, rng);
    p.courier_table = ps.xavier("dec.courier_embed", cfg.courier_table, cfg.d_c, rng);
    p.rid_table = ps.xavier("dec.rid_embed", cfg.max_tasks, cfg.d_id, rng);
    return p;
  }
};

struct DecoderState {
  std::size_t step = 0;
  LstmState history;
  LstmState reference;
  LstmState eta;
  std::vector<char> selected;
  int last = -1;  // -1: courier origin
  Tensor last_eta;

  static DecoderState start(const ProblemInstance& inst, std::size_t d_lstm) {
    DecoderState s;
    s.history = LstmState::zeros(d_lstm);
    s.reference = LstmState::zeros(d_lstm);
    s.eta = LstmState::zeros(d_lstm);
    s.selected.assign(inst.size(), 0);
    s.last_eta = Tensor::scalar(static_cast<double>(inst.timestamp()));
    return s;
  }

  Location last_location(const ProblemInstance& inst) const {
    return last < 0 ? inst.courier.location : inst.tasks[static_cast<std::size_t>(last)].location;
  }
};

struct RoutePrediction {
  Route order;
  std::vector<std::vector<double>> stepwise_probs;
  std::vector<double> etas;
  std::vector<double> chosen_probs;
};

/// Rules 1 and 2: already selected, or delivery whose pickup is not done.
inline std::vector<bool> feasibility_mask(const ProblemInstance& inst, const std::vector<char>& selected) {
  const auto partner = pickup_partner(inst);
  std::vector<bool> mask(inst.size(), false);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    mask[i] = selected[i] || (partner[i] >= 0 && !selected[static_cast<std::size_t>(partner[i])]);
  }
  return mask;
}

/// Tasks outside the k nearest unselected tasks of the last location
/// (distance ties by task_id).
inline std::vector<bool> spatial_mask(const ProblemInstance& inst, const std::vector<char>& selected,
                                      const Location& from, std::size_t k) {
  std::vector<std::pair<double, int>> cand;
  for (const auto& t : inst.tasks)
    if (!selected[static_cast<std::size_t>(t.task_id)]) cand.emplace_back(distance(from, t.location), t.task_id);
  std::sort(cand.begin(), cand.end());
  std::vector<bool> mask(inst.size(), true);
  for (std::size_t i = 0; i < cand.size() && i < k; ++i) mask[static_cast<std::size_t>(cand[i].second)] = false;
  return mask;
}

/// Union of the three rules; the spatial rule is dropped when the union
/// would leave no candidate.
inline std::vector<bool> compute_mask(const DecoderState& state, const ProblemInstance& inst, std::size_t k) {
  auto mask = feasibility_mask(inst, state.selected);
  if (std::all_of(mask.begin(), mask.end(), [](bool m) { return m; }))
    throw EmptyCandidateError("compute_mask: no unselected feasible task");
  const auto spatial = spatial_mask(inst, state.selected, state.last_location(inst), k);
  std::vector<bool> combined(mask.size());
  bool any_open = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    combined[i] = mask[i] || spatial[i];
    any_open = any_open || !combined[i];
  }
  return any_open ? combined : mask;
}

/// Distance to the last location and remaining time to each promise, before
/// scaling; masked tasks get the cap in both columns. Row-major n x 2.
inline std::vector<double> dynamic_columns_raw(const DecoderState& state, const ProblemInstance& inst,
                                               const std::vector<bool>& mask) {
  const Location from = state.last_location(inst);
  const double now = state.last_eta.item();
  std::vector<double> out(inst.size() * 2);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& t = inst.tasks[i];
    out[2 * i] = mask[i] ? kMaskedFeatureCap : distance(from, t.location);
    out[2 * i + 1] = mask[i] ? kMaskedFeatureCap : static_cast<double>(t.promised_time) - now;
  }
  return out;
}

/// Scaled dynamic columns as an n x 2 tensor. The time column stays
/// differentiable in the previous predicted arrival time.
inline Tensor dynamic_columns(Tape& tape, const DecoderState& state, const ProblemInstance& inst,
                              const std::vector<bool>& mask) {
  const std::size_t n = inst.size();
  const Location from = state.last_location(inst);
  std::vector<double> dist(n), open(n), base(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = inst.tasks[i];
    dist[i] = (mask[i] ? kMaskedFeatureCap : distance(from, t.location)) / kDynDistanceScaleM;
    open[i] = mask[i] ? 0.0 : -1.0 / kDynTimeScaleS;
    base[i] = (mask[i] ? kMaskedFeatureCap : static_cast<double>(t.promised_time)) / kDynTimeScaleS;
  }
  // time_i = base_i + open_i * eta_prev, i.e. (promised - eta) / scale when unmasked.
  auto eta = tape.reshape(state.last_eta, {1, 1});
  auto time = tape.add(tape.constant({n, 1}, base), tape.matmul(tape.constant({n, 1}, open), eta));
  return tape.concat_cols({tape.constant({n, 1}, dist), time});
}

/// H^z = [H | d | t], n x (d_e + 2).
inline Tensor dynamic_features(Tape& tape, const Tensor& H, const DecoderState& state, const ProblemInstance& inst,
                               const std::vector<bool>& mask) {
  return tape.concat_cols({H, dynamic_columns(tape, state, inst, mask)});
}

inline std::size_t courier_row(std::int64_t courier_id, std::size_t table) {
  const auto t = static_cast<std::int64_t>(table);
  return static_cast<std::size_t>(((courier_id % t) + t) % t);
}

/// Context GeLU([m, r, rid, e_co] W_2), 1 x d_score.
inline Tensor decoder_context(Tape& tape, const DecoderState& state, int reference_task, std::int64_t courier_id,
                              const DecoderParams& p) {
  Tensor rid = p.cfg.use_reference
                   ? tape.row(p.rid_table, static_cast<std::size_t>(reference_task))
                   : Tensor::zeros({1, p.cfg.d_id});
  auto eco = tape.row(p.courier_table, courier_row(courier_id, p.cfg.courier_table));
  return tape.gelu(p.w2(tape, tape.concat_cols({state.history.h, state.reference.h, rid, eco})));
}

/// u = GeLU(H W1_task + D W1_dyn + b1) ctx^T, length n. `hw1` is the
/// precomputed H W1_task and `dyn` the n x 2 dynamic columns, so the sum
/// equals H^z W_1 without rebuilding the task block every step.
inline Tensor score_candidates(Tape& tape, const Tensor& hw1, const Tensor& dyn, const Tensor& context,
                               const DecoderParams& p) {
  auto z = tape.gelu(tape.add_bias(tape.add(hw1, tape.matmul(dyn, p.w1_dyn)), p.b1));
  auto u = tape.matmul(z, tape.transpose(context));
  return tape.reshape(u, {u.rows()});
}

struct Selection {
  std::vector<double> probs;
  int chosen = -1;
};

/// Masked softmax probabilities and argmax with smallest-id tie-break.
inline Selection select_next(std::span<const double> scores, const std::vector<bool>& mask) {
  Selection s;
  s.probs.assign(scores.size(), 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i] || !std::isfinite(scores[i])) continue;
    if (scores[i] > mx) {
      mx = scores[i];
      s.chosen = static_cast<int>(i);
    }
  }
  if (s.chosen < 0) throw EmptyCandidateError("select_next: no finite unmasked score");
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!mask[i] && std::isfinite(scores[i])) z += (s.probs[i] = std::exp(scores[i] - mx));
  for (double& v : s.probs) v /= z;
  return s;
}

/// Advances the ETA LSTM on [h_chosen, distance / scale] and returns
/// max(previous + 1 s, timestamp + scale * head(hidden)).
inline Tensor eta_step(Tape& tape, const Tensor& H, int chosen, DecoderState& state, const ProblemInstance& inst,
                       const DecoderParams& p) {
  const auto& t = inst.tasks[static_cast<std::size_t>(chosen)];
  const double d = distance(state.last_location(inst), t.location) / kDynDistanceScaleM;
  auto x = tape.concat_cols({tape.row(H, static_cast<std::size_t>(chosen)), tape.constant({1, 1}, {d})});
  state.eta = lstm_cell(tape, x, state.eta, p.eta);
  auto offset = p.eta_out(tape, tape.gelu(p.eta_hidden(tape, state.eta.h)));
  auto raw = tape.add_scalar(tape.scale(tape.reshape(offset, {1}), kEtaOffsetScaleS),
                             static_cast<double>(inst.timestamp()));
  auto floor = tape.add_scalar(tape.reshape(state.last_eta, {1}), kEtaMinGapS);
  return tape.maximum(raw, floor);
}

/// Full decoding record. In teacher forcing `step_ce` holds one term per
/// label step and `eta` one prediction per step.
struct DecodeTrace {
  RoutePrediction prediction;
  std::vector<Tensor> step_ce;
  std::vector<Tensor> eta;
  std::size_t label_steps = 0;
};

/// Decodes all n steps. With a label, steps inside it are teacher forced;
/// later steps (truncated labels) and label-free decoding use argmax.
inline DecodeTrace decode_route(Tape& tape, const EncodedTasks& enc, const ProblemInstance& inst,
                                const Route& reference, const DecoderParams& p, const RouteLabel* label = nullptr) {
  const std::size_t n = inst.size();
  if (!is_feasible_route(inst, reference)) throw ReferenceError("decode_route: reference route is not feasible");
  if (n > p.cfg.max_tasks)
    throw ConfigError("decode_route: " + std::to_string(n) + " tasks exceed max_tasks " +
                      std::to_string(p.cfg.max_tasks));
  if (enc.H.rows() != n || enc.H.cols() != p.d_e) throw DimensionError("decode_route: encoder output shape");
  if (label && !satisfies_precedence(inst, label->order))
    throw ConsistencyError("decode_route: label violates precedence");

  DecodeTrace trace;
  trace.label_steps = label ? label->order.size() : 0;
  auto state = DecoderState::start(inst, p.cfg.d_lstm);
  const auto hw1 = tape.matmul(enc.H, p.w1_task);
  const auto zero_task = Tensor::zeros({1, p.d_e});

  for (std::size_t z = 0; z < n; ++z) {
    state.step = z;
    const bool forced = z < trace.label_steps;
    const int target = forced ? label->order[z] : -1;
    auto mask = compute_mask(state, inst, p.cfg.mask_k);
    if (forced && mask[static_cast<std::size_t>(target)]) {
      // The spatial rule may exclude the observed task; train on the feasible set instead.
      mask = feasibility_mask(inst, state.selected);
      if (mask[static_cast<std::size_t>(target)])
        throw ConsistencyError("decode_route: label task " + std::to_string(target) + " is infeasible at step " +
                               std::to_string(z));
    }

    const Tensor prev = state.last < 0 ? zero_task : tape.row(enc.H, static_cast<std::size_t>(state.last));
    state.history = lstm_cell(tape, prev, state.history, p.history);
    const Tensor ref_in = p.cfg.use_reference ? tape.row(enc.H, static_cast<std::size_t>(reference[z])) : zero_task;
    state.reference = lstm_cell(tape, ref_in, state.reference, p.reference);

    const Tensor dyn = p.cfg.use_dynamic ? dynamic_columns(tape, state, inst, mask) : Tensor::zeros({n, 2});
    const auto ctx = decoder_context(tape, state, reference[z], inst.courier.courier_id, p);
    const auto u = score_candidates(tape, hw1, dyn, ctx, p);
    auto sel = select_next(u.values(), mask);
    const int chosen = forced ? target : sel.chosen;
    if (forced) trace.step_ce.push_back(tape.cross_entropy_masked(u, mask, static_cast<std::size_t>(chosen)));

    auto eta = eta_step(tape, enc.H, chosen, state, inst, p);
    trace.eta.push_back(eta);
    trace.prediction.order.push_back(chosen);
    trace.prediction.chosen_probs.push_back(sel.probs[static_cast<std::size_t>(chosen)]);
    trace.prediction.stepwise_probs.push_back(std::move(sel.probs));
    trace.prediction.etas.push_back(eta.item());

    state.selected[static_cast<std::size_t>(chosen)] = 1;
    state.last = chosen;
    state.last_eta = eta;
  }
  return trace;
}

}  // namespace mrgrp
