#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mrgrp/errors.hpp"
#include "mrgrp/nn.hpp"

namespace mrgrp {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

/// One bias-corrected Adam update over every tensor in `params`, using the
/// grads currently stored on them.
inline void adam_step(ParameterStore& params, AdamState& state, const AdamHyper& hyper) {
  const auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& [_, t] : entries) {
      state.m.emplace_back(t.size(), 0.0);
      state.v.emplace_back(t.size(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw DimensionError("adam_step: state does not match parameters");

  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& [name, t] = entries[k];
    if (state.m[k].size() != t.size()) throw DimensionError("adam_step: state shape differs for " + name);
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in tensor " + name);
    }
  }

  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor t = entries[k].second;
    auto values = t.mutable_values();
    auto grads = t.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      values[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

}  // namespace mrgrp
