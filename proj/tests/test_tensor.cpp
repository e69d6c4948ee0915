#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mrgrp/checkpoint.hpp"
#include "mrgrp/gradcheck.hpp"
#include "mrgrp/nn.hpp"
#include "mrgrp/optim.hpp"
#include "mrgrp/tensor.hpp"
#include "op_cases.hpp"
#include "support.hpp"

using namespace mrgrp;
using namespace op_cases;

namespace {

double softmax_oracle(const std::vector<double>& x, std::size_t i) {
  double z = 0.0;
  for (double v : x) z += std::exp(v);
  return std::exp(x[i]) / z;
}

}  // namespace

// --- matmul -------------------------------------------------------------------

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Tape tape;
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto b = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto y = tape.matmul(eye, b);
  EXPECT_EQ(y.shape(), (Shape{2, 3}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y[i], b[i]);
}

TEST(Matmul, HandProduct) {
  Tape tape;
  auto y = tape.matmul(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 1}, {0, 1}));
  EXPECT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_EQ(y[0], 2.0);
  EXPECT_EQ(y[1], 4.0);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2});
  EXPECT_LT(op_grad_error({a, b}, [](Tape& t, const std::vector<Tensor>& x) { return t.matmul(x[0], x[1]); }, rng),
            1e-6);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  try {
    tape.matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

// --- softmax_masked -------------------------------------------------------------

TEST(SoftmaxMasked, EqualLogitsAreUniform) {
  Tape tape;
  auto p = tape.softmax_masked(Tensor::from({4}, {0.3, 0.3, 0.3, 0.3}), {false, false, false, false});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p[i], 0.25);
}

TEST(SoftmaxMasked, SingleCandidateGetsEverything) {
  Tape tape;
  auto p = tape.softmax_masked(Tensor::from({2}, {0, 0}), {false, true});
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
}

TEST(SoftmaxMasked, MatchesDirectFormula) {
  Tape tape;
  const std::vector<double> x{1, 2, 3};
  auto p = tape.softmax_masked(Tensor::from({3}, x), {false, false, false});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], softmax_oracle(x, i), 1e-12);
}

TEST(SoftmaxMasked, AllMaskedIsEmptyCandidateError) {
  Tape tape;
  EXPECT_THROW(tape.softmax_masked(Tensor::from({2}, {1, 2}), {true, true}), EmptyCandidateError);
}

TEST(SoftmaxMasked, SumsToOneAndIgnoresUniformShift) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 10));
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.bernoulli(0.4);
    mask[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1))] = false;
    auto x = random_tensor(rng, {n}, -20, 20);
    const double c = rng.uniform(-50, 50);
    std::vector<double> shifted(x.values().begin(), x.values().end());
    for (double& v : shifted) v += c;
    Tape tape;
    auto p = tape.softmax_masked(x, mask);
    auto q = tape.softmax_masked(Tensor::from({n}, shifted), mask);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += p[i];
      if (mask[i]) EXPECT_EQ(p[i], 0.0);
      else EXPECT_GT(p[i], 0.0);
      EXPECT_LT(std::abs(p[i] - q[i]), 1e-9);
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

// --- gelu -----------------------------------------------------------------------

TEST(Gelu, FixedPointAtZero) { EXPECT_EQ(gelu_value(0.0), 0.0); }

TEST(Gelu, IdentityForLargeInput) { EXPECT_NEAR(gelu_value(10.0), 10.0, 1e-6); }

TEST(Gelu, GradientAtHalf) {
  auto x = Tensor::from({1}, {0.5});
  EXPECT_LT(finite_difference_check([&](Tape& t) { return t.sum(t.gelu(x)); }, x), 1e-6);
}

// --- lstm -----------------------------------------------------------------------

namespace {

LstmParams zero_lstm(ParameterStore& ps, std::size_t d_in, std::size_t h) {
  Rng rng(0);
  auto p = LstmParams::make(ps, "lstm", d_in, h, rng);
  ps.set_all(0.0);
  return p;
}

}  // namespace

TEST(Lstm, ZeroParamsZeroCellStaysZero) {
  ParameterStore ps;
  auto p = zero_lstm(ps, 3, 2);
  Tape tape;
  auto s = lstm_cell(tape, Tensor::from({1, 3}, {1, -2, 3}), LstmState::zeros(2), p);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(s.h[i], 0.0);
    EXPECT_EQ(s.c[i], 0.0);
  }
}

TEST(Lstm, ZeroParamsHalveTheCell) {
  ParameterStore ps;
  auto p = zero_lstm(ps, 3, 2);
  Tape tape;
  const std::vector<double> c0{0.8, -1.4};
  LstmState st{Tensor::zeros({1, 2}), Tensor::from({1, 2}, c0)};
  auto s = lstm_cell(tape, Tensor::from({1, 3}, {1, -2, 3}), st, p);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(s.c[i], c0[i] / 2, 1e-15);
    EXPECT_NEAR(s.h[i], 0.5 * std::tanh(c0[i] / 2), 1e-15);
  }
}

TEST(Lstm, GradientOfHiddenSumMatchesFiniteDifferences) {
  ParameterStore ps;
  Rng rng(3);
  auto p = LstmParams::make(ps, "lstm", 3, 4, rng);
  for (double& b : Tensor(p.bias).mutable_values()) b = rng.uniform(-0.5, 0.5);
  auto x = random_tensor(rng, {1, 3});
  LstmState st{random_tensor(rng, {1, 4}), random_tensor(rng, {1, 4})};
  auto f = [&](Tape& t) { return t.sum(lstm_cell(t, x, st, p).h); };
  Rng pick(4);
  EXPECT_LT(finite_difference_report(f, ps, 1000, pick).max_relative_error, 1e-4);
}

TEST(Lstm, DimensionMismatchThrows) {
  ParameterStore ps;
  auto p = zero_lstm(ps, 3, 2);
  Tape tape;
  EXPECT_THROW(lstm_cell(tape, Tensor::zeros({1, 4}), LstmState::zeros(2), p), DimensionError);
}

// --- backward -------------------------------------------------------------------

TEST(Backward, IdentityHasUnitGradient) {
  auto x = Tensor::scalar(3.0, true);
  Tape tape;
  tape.backward(tape.scale(x, 1.0));
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Backward, SumOfSquares) {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  Tape tape;
  tape.backward(tape.sum(tape.mul(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
  EXPECT_EQ(x.grad()[2], 6.0);
}

TEST(Backward, CompositeMatmulGeluSoftmaxCrossEntropy) {
  Rng rng(5);
  auto w = random_tensor(rng, {3, 5});
  auto x = random_tensor(rng, {1, 3});
  const std::vector<bool> mask{false, true, false, false, false};
  auto f = [&](Tape& t) {
    auto logits = t.reshape(t.gelu(t.matmul(x, w)), {5});
    auto p = t.softmax_masked(logits, mask);
    return t.scale(t.log(t.pick(p, 2)), -1.0);
  };
  EXPECT_LT(finite_difference_check(f, w), 1e-4);
  EXPECT_LT(finite_difference_check(f, x), 1e-4);
}

TEST(Backward, NonScalarOutputIsAnError) {
  auto x = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  EXPECT_THROW(tape.backward(tape.scale(x, 2.0)), DimensionError);
}

TEST(Backward, TensorsOffThePathGetZeroGrad) {
  auto x = Tensor::from({2}, {1, 2}, true);
  auto unused = Tensor::from({2}, {5, 6}, true);
  Tape tape;
  auto side = tape.mul(unused, unused);
  (void)side;
  tape.backward(tape.sum(x));
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, IdenticalTapesGiveBitIdenticalGrads) {
  auto run = [] {
    Rng rng(6);
    auto w = random_tensor(rng, {4, 4});
    w.set_requires_grad(true);
    auto x = random_tensor(rng, {3, 4});
    Tape tape;
    auto y = tape.softmax_rows(tape.gelu(tape.matmul(x, w)));
    tape.backward(tape.sum(tape.mul(y, y)));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

// --- adam -----------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  ParameterStore ps;
  Rng rng(7);
  auto w = ps.xavier("w", 3, 3, rng);
  const std::vector<double> before(w.values().begin(), w.values().end());
  AdamState st;
  ps.zero_grad();
  adam_step(ps, st, {});
  EXPECT_EQ(std::vector<double>(w.values().begin(), w.values().end()), before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore ps;
  auto w = ps.filled("w", {1}, 2.0);
  w.mutable_grad()[0] = 1.0;
  AdamState st;
  AdamHyper h;
  h.lr = 0.1;
  adam_step(ps, st, h);
  // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
  EXPECT_NEAR(w[0], 2.0 - 0.1 / (1.0 + h.eps), 1e-15);
  EXPECT_NEAR(w[0], 1.9, 1e-8);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    ParameterStore ps;
    Rng rng(8);
    auto w = ps.xavier("w", 4, 2, rng);
    auto x = random_tensor(rng, {3, 4});
    AdamState st;
    for (int step = 0; step < 10; ++step) {
      ps.zero_grad();
      Tape tape;
      tape.backward(tape.sum(tape.gelu(tape.matmul(x, w))));
      adam_step(ps, st, {});
    }
    return std::vector<double>(w.values().begin(), w.values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, NonFiniteGradientNamesTheTensor) {
  ParameterStore ps;
  auto w = ps.filled("dec.w2.w", {2}, 1.0);
  w.mutable_grad()[1] = std::nan("");
  AdamState st;
  try {
    adam_step(ps, st, {});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("dec.w2.w"), std::string::npos);
  }
}

// --- finite-difference checker -------------------------------------------------------

TEST(FiniteDifference, ConstantGradientIsExact) {
  Rng rng(9);
  auto x = random_tensor(rng, {5});
  EXPECT_LT(finite_difference_check([&](Tape& t) { return t.sum(x); }, x), 1e-10);
}

TEST(FiniteDifference, GeluOfLinearMap) {
  Rng rng(10);
  auto w = random_tensor(rng, {3, 4});
  auto x = random_tensor(rng, {4, 1});
  EXPECT_LT(finite_difference_check([&](Tape& t) { return t.sum(t.gelu(t.matmul(w, x))); }, x), 1e-5);
}

TEST(FiniteDifference, DeadMaskBranchReportsZeroBothWays) {
  auto x = Tensor::from({3}, {0.2, -0.7, 1.1});
  const std::vector<bool> mask{false, true, false};
  auto f = [&](Tape& t) { return t.pick(t.softmax_masked(x, mask), 0); };
  const auto report = finite_difference_report(f, x, 1e-5, {1});
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(report.worst_numeric, 0.0);
  EXPECT_EQ(report.max_relative_error, 0.0);
}

// --- every differentiable op, 100 seeded trials ---------------------------------------

class OpGradients : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradients, MatchFiniteDifferencesOverSeededTrials) {
  const auto& c = GetParam();
  Rng rng(Rng::splitmix(std::hash<std::string>{}(c.name)));
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) worst = std::max(worst, op_grad_error(c.inputs(rng), c.op, rng));
  EXPECT_LT(worst, 1e-4) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradients, ::testing::ValuesIn(all_op_cases()),
                         [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

// --- checkpoint -------------------------------------------------------------------

TEST(Checkpoint, RoundTripRestoresEveryValue) {
  ParameterStore ps;
  Rng rng(11);
  ps.xavier("a.w", 3, 4, rng);
  ps.filled("a.b", {4}, -0.25);
  const auto path = testing_support::temp_path("tensor_ckpt.bin");
  save_checkpoint(path, ps, {{"note", "x"}});

  ParameterStore other;
  Rng rng2(99);
  other.xavier("a.w", 3, 4, rng2);
  other.filled("a.b", {4}, 0.0);
  const auto ck = load_checkpoint(path);
  EXPECT_EQ(ck.meta.at("note"), "x");
  restore_parameters(ck, other);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto& a = ps.entries()[k].second;
    const auto& b = other.entries()[k].second;
    EXPECT_EQ(std::vector<double>(a.values().begin(), a.values().end()),
              std::vector<double>(b.values().begin(), b.values().end()));
  }
}

TEST(Checkpoint, RejectsWrongHeader) {
  const auto path = testing_support::temp_path("bad_ckpt.bin");
  {
    std::ofstream os(path);
    os << "NOT-A-CKPT\n";
  }
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}
