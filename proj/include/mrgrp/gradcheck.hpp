#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mrgrp/nn.hpp"
#include "mrgrp/random.hpp"
#include "mrgrp/tensor.hpp"

namespace mrgrp {

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is ~0 are compared on an absolute scale instead of amplifying
/// round-off.
inline constexpr double kGradCheckFloor = 1e-5;

inline double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares the analytic gradient of the scalar f w.r.t. `x` (which f must
/// read through its handle) against central differences. `coords` limits
/// the check to a subset of coordinates; empty means all of them.
inline GradCheckReport finite_difference_report(const std::function<Tensor(Tape&)>& f, Tensor x,
                                                double eps = 1e-5,
                                                const std::vector<std::size_t>& coords = {}) {
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape tape;
    auto y = f(tape);
    tape.backward(y);
  }
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());

  std::vector<std::size_t> todo = coords;
  if (todo.empty()) {
    todo.resize(x.size());
    for (std::size_t i = 0; i < todo.size(); ++i) todo[i] = i;
  }
  auto eval = [&]() {
    Tape tape(false);
    return f(tape).item();
  };

  GradCheckReport report;
  auto values = x.mutable_values();
  for (std::size_t i : todo) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = eval();
    values[i] = saved - eps;
    const double down = eval();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = gradient_relative_error(analytic[i], numeric);
    if (++report.coordinates_checked == 1 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_coordinate = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

inline double finite_difference_check(const std::function<Tensor(Tape&)>& f, Tensor x, double eps = 1e-5) {
  return finite_difference_report(f, std::move(x), eps).max_relative_error;
}

/// Checks every tensor in the store, sampling at most `per_tensor`
/// coordinates from each. The analytic pass is shared.
inline GradCheckReport finite_difference_report(const std::function<Tensor(Tape&)>& f,
                                                ParameterStore& params, std::size_t per_tensor,
                                                Rng& rng, double eps = 1e-5) {
  params.zero_grad();
  {
    Tape tape;
    auto y = f(tape);
    tape.backward(y);
  }
  GradCheckReport report;
  for (const auto& [name, t] : params.entries()) {
    Tensor x = t;
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    std::vector<std::size_t> coords;
    if (x.size() <= per_tensor) {
      for (std::size_t i = 0; i < x.size(); ++i) coords.push_back(i);
    } else {
      for (std::size_t k = 0; k < per_tensor; ++k)
        coords.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(x.size()) - 1)));
    }
    auto values = x.mutable_values();
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + eps;
      double up, down;
      {
        Tape tape(false);
        up = f(tape).item();
      }
      values[i] = saved - eps;
      {
        Tape tape(false);
        down = f(tape).item();
      }
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = gradient_relative_error(analytic[i], numeric);
      ++report.coordinates_checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_coordinate = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mrgrp
