#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mrgrp/gradcheck.hpp"
#include "mrgrp/tensor.hpp"

namespace op_cases {

using namespace mrgrp;

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

/// Keeps entries away from the kinks of piecewise-linear ops.
inline Tensor away_from_zero(Rng& rng, Shape shape) {
  auto t = random_tensor(rng, std::move(shape));
  for (double& x : t.mutable_values())
    if (std::abs(x) < 1e-2) x += x < 0 ? -0.1 : 0.1;
  return t;
}

/// Worst relative error over every input of f, using a fixed random
/// projection of the output so non-scalar ops reduce to a scalar.
inline double op_grad_error(const std::vector<Tensor>& inputs,
                     const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& op, Rng& rng) {
  Tensor weights;
  {
    Tape probe(false);
    auto out = op(probe, inputs);
    weights = random_tensor(rng, out.shape(), 0.5, 1.5);
  }
  double worst = 0.0;
  for (const auto& x : inputs) {
    auto f = [&](Tape& tape) { return tape.sum(tape.mul(op(tape, inputs), weights)); };
    worst = std::max(worst, finite_difference_check(f, x));
    Tensor handle = x;
    handle.set_requires_grad(false);
  }
  return worst;
}

struct OpCase {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  std::function<Tensor(Tape&, const std::vector<Tensor>&)> op;
};

inline std::vector<OpCase> all_op_cases() {
  using V = std::vector<Tensor>;
  return {
      {"matmul", [](Rng& r) { return V{random_tensor(r, {3, 4}), random_tensor(r, {4, 2})}; },
       [](Tape& t, const V& x) { return t.matmul(x[0], x[1]); }},
      {"transpose", [](Rng& r) { return V{random_tensor(r, {3, 2})}; },
       [](Tape& t, const V& x) { return t.transpose(x[0]); }},
      {"add", [](Rng& r) { return V{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; },
       [](Tape& t, const V& x) { return t.add(x[0], x[1]); }},
      {"sub", [](Rng& r) { return V{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; },
       [](Tape& t, const V& x) { return t.sub(x[0], x[1]); }},
      {"mul", [](Rng& r) { return V{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; },
       [](Tape& t, const V& x) { return t.mul(x[0], x[1]); }},
      {"add_bias", [](Rng& r) { return V{random_tensor(r, {3, 4}), random_tensor(r, {4})}; },
       [](Tape& t, const V& x) { return t.add_bias(x[0], x[1]); }},
      {"scale", [](Rng& r) { return V{random_tensor(r, {5})}; },
       [](Tape& t, const V& x) { return t.scale(x[0], -1.7); }},
      {"add_scalar", [](Rng& r) { return V{random_tensor(r, {5})}; },
       [](Tape& t, const V& x) { return t.add_scalar(x[0], 0.3); }},
      {"gelu", [](Rng& r) { return V{random_tensor(r, {6})}; }, [](Tape& t, const V& x) { return t.gelu(x[0]); }},
      {"sigmoid", [](Rng& r) { return V{random_tensor(r, {6})}; },
       [](Tape& t, const V& x) { return t.sigmoid(x[0]); }},
      {"tanh", [](Rng& r) { return V{random_tensor(r, {6})}; }, [](Tape& t, const V& x) { return t.tanh(x[0]); }},
      {"log", [](Rng& r) { return V{random_tensor(r, {6}, 0.2, 2.0)}; },
       [](Tape& t, const V& x) { return t.log(x[0]); }},
      {"maximum",
       [](Rng& r) {
         auto a = random_tensor(r, {6});
         auto b = random_tensor(r, {6});
         for (std::size_t i = 0; i < 6; ++i)
           if (std::abs(a[i] - b[i]) < 1e-2) a.mutable_values()[i] += 0.1;
         return V{a, b};
       },
       [](Tape& t, const V& x) { return t.maximum(x[0], x[1]); }},
      {"pinball", [](Rng& r) { return V{away_from_zero(r, {6})}; },
       [](Tape& t, const V& x) { return t.pinball(x[0], 0.3); }},
      {"sum", [](Rng& r) { return V{random_tensor(r, {2, 3})}; }, [](Tape& t, const V& x) { return t.sum(x[0]); }},
      {"mean", [](Rng& r) { return V{random_tensor(r, {2, 3})}; },
       [](Tape& t, const V& x) { return t.mean(x[0]); }},
      {"pick", [](Rng& r) { return V{random_tensor(r, {5})}; }, [](Tape& t, const V& x) { return t.pick(x[0], 3); }},
      {"softmax_masked", [](Rng& r) { return V{random_tensor(r, {5})}; },
       [](Tape& t, const V& x) { return t.softmax_masked(x[0], {false, true, false, false, true}); }},
      {"cross_entropy_masked", [](Rng& r) { return V{random_tensor(r, {5})}; },
       [](Tape& t, const V& x) { return t.cross_entropy_masked(x[0], {false, true, false, false, false}, 3); }},
      {"softmax_rows", [](Rng& r) { return V{random_tensor(r, {3, 4})}; },
       [](Tape& t, const V& x) { return t.softmax_rows(x[0]); }},
      {"layer_norm_rows",
       [](Rng& r) { return V{random_tensor(r, {3, 5}), random_tensor(r, {5}), random_tensor(r, {5})}; },
       [](Tape& t, const V& x) { return t.layer_norm_rows(x[0], x[1], x[2]); }},
      {"reshape", [](Rng& r) { return V{random_tensor(r, {2, 3})}; },
       [](Tape& t, const V& x) { return t.reshape(x[0], {3, 2}); }},
      {"concat_cols", [](Rng& r) { return V{random_tensor(r, {3, 2}), random_tensor(r, {3, 1})}; },
       [](Tape& t, const V& x) { return t.concat_cols({x[0], x[1]}); }},
      {"slice_cols", [](Rng& r) { return V{random_tensor(r, {3, 5})}; },
       [](Tape& t, const V& x) { return t.slice_cols(x[0], 1, 3); }},
      {"gather_rows", [](Rng& r) { return V{random_tensor(r, {4, 3})}; },
       [](Tape& t, const V& x) { return t.gather_rows(x[0], {2, 0, 2, 3}); }},
      {"scatter_add_rows", [](Rng& r) { return V{random_tensor(r, {4, 3})}; },
       [](Tape& t, const V& x) { return t.scatter_add_rows(x[0], {1, 1, 0, 4}, 5); }},
      {"row", [](Rng& r) { return V{random_tensor(r, {4, 3})}; }, [](Tape& t, const V& x) { return t.row(x[0], 2); }},
      {"stack_rows", [](Rng& r) { return V{random_tensor(r, {1}), random_tensor(r, {1})}; },
       [](Tape& t, const V& x) { return t.stack_rows({x[0], x[1]}); }},
  };
}


}  // namespace op_cases
