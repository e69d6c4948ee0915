#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mrgrp/errors.hpp"
#include "mrgrp/random.hpp"
#include "mrgrp/tensor.hpp"

namespace mrgrp {

/// Named trainable tensors in registration order. Registration order fixes
/// the checkpoint layout and the optimizer's iteration order.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
    return t;
  }

  Tensor xavier(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(fan_in * fan_out);
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return add(name, Tensor::from({fan_in, fan_out}, std::move(v)));
  }

  Tensor zeros(const std::string& name, Shape shape) { return add(name, Tensor::zeros(std::move(shape))); }

  Tensor filled(const std::string& name, Shape shape, double value) {
    const auto n = shape_size(shape);
    return add(name, Tensor::from(std::move(shape), std::vector<double>(n, value)));
  }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }

  void set_all(double value) {
    for (auto& [_, t] : entries_)
      for (double& x : t.mutable_values()) x = value;
  }

  /// Deep copy with fresh storage, for snapshots (e.g. best-validation).
  ParameterStore clone() const {
    ParameterStore out;
    for (const auto& [name, t] : entries_) out.add(name, t.clone());
    return out;
  }

  /// Overwrites values from another store with identical names and shapes.
  void copy_values_from(const ParameterStore& other) {
    if (other.size() != size()) throw ConfigError("parameter store layout differs");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& dst = entries_[i].second;
      const auto& src = other.entries_[i].second;
      if (entries_[i].first != other.entries_[i].first || dst.shape() != src.shape()) {
        throw ConfigError("parameter store layout differs at " + entries_[i].first);
      }
      std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// y = x W + b.
struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out

  static Linear make(ParameterStore& ps, const std::string& name, std::size_t in, std::size_t out,
                     Rng& rng, bool with_bias = true) {
    Linear l;
    l.weight = ps.xavier(name + ".w", in, out, rng);
    if (with_bias) l.bias = ps.zeros(name + ".b", {out});
    return l;
  }

  Tensor operator()(Tape& tape, const Tensor& x) const {
    auto y = tape.matmul(x, weight);
    return bias.defined() ? tape.add_bias(y, bias) : y;
  }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams make(ParameterStore& ps, const std::string& name, std::size_t d) {
    return {ps.filled(name + ".gain", {d}, 1.0), ps.zeros(name + ".bias", {d})};
  }

  Tensor operator()(Tape& tape, const Tensor& x) const { return tape.layer_norm_rows(x, gain, bias); }
};

/// Gate blocks are laid out [input | forget | candidate | output] along the
/// 4*hidden axis.
struct LstmParams {
  Tensor w_input;      // d_in x 4h
  Tensor w_recurrent;  // h x 4h
  Tensor bias;         // 4h
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static LstmParams make(ParameterStore& ps, const std::string& name, std::size_t d_in,
                         std::size_t hidden, Rng& rng) {
    LstmParams p;
    p.input_dim = d_in;
    p.hidden_dim = hidden;
    p.w_input = ps.xavier(name + ".w_in", d_in, 4 * hidden, rng);
    p.w_recurrent = ps.xavier(name + ".w_rec", hidden, 4 * hidden, rng);
    p.bias = ps.zeros(name + ".b", {4 * hidden});
    return p;
  }
};

struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(std::size_t hidden) {
    return {Tensor::zeros({1, hidden}), Tensor::zeros({1, hidden})};
  }
};

inline LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& state, const LstmParams& p) {
  const std::size_t hd = p.hidden_dim;
  if (x.size() != p.input_dim || state.h.size() != hd || state.c.size() != hd) {
    throw DimensionError("lstm_cell: x " + shape_string(x.shape()) + ", h " +
                         shape_string(state.h.shape()) + ", c " + shape_string(state.c.shape()) +
                         " do not match params (" + std::to_string(p.input_dim) + " -> " +
                         std::to_string(hd) + ")");
  }
  auto z = tape.add_bias(tape.add(tape.matmul(x, p.w_input), tape.matmul(state.h, p.w_recurrent)), p.bias);
  auto i = tape.sigmoid(tape.slice_cols(z, 0, hd));
  auto f = tape.sigmoid(tape.slice_cols(z, hd, hd));
  auto g = tape.tanh(tape.slice_cols(z, 2 * hd, hd));
  auto o = tape.sigmoid(tape.slice_cols(z, 3 * hd, hd));
  auto c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
  auto h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

}  // namespace mrgrp
