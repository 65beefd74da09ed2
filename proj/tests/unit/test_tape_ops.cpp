#include <gtest/gtest.h>

#include <cmath>

#include "lcm/error.hpp"
#include "lcm/ops.hpp"
#include "lcm/rng.hpp"
#include "lcm/tape.hpp"

using lcm::ParamBlock;
using lcm::Shape;
using lcm::Tape;
using lcm::Tensor;
namespace ops = lcm::ops;

TEST(Tape, ParamIsDeduplicatedAndGradientsAccumulate) {
  ParamBlock<double> p("p", Tensor<double>(Shape{3}, std::vector<double>{1, 2, 3}));
  Tape<double> tape;
  const auto a = tape.param(p);
  const auto b = tape.param(p);
  EXPECT_EQ(a.id, b.id);
  // sum(p * p) -> grad 2p
  tape.backward(ops::sum(tape, ops::mul(tape, a, b)));
  EXPECT_DOUBLE_EQ(p.grad[0], 2.0);
  EXPECT_DOUBLE_EQ(p.grad[2], 6.0);
}

TEST(Tape, BackwardOverwritesStaleGradients) {
  ParamBlock<double> p("p", Tensor<double>(Shape{2}, 1.0));
  p.grad.fill(99.0);
  Tape<double> tape;
  tape.backward(ops::sum(tape, tape.param(p)));
  EXPECT_DOUBLE_EQ(p.grad[0], 1.0);
}

TEST(Tape, UnusedParamGetsZeroGradient) {
  ParamBlock<double> used("u", Tensor<double>(Shape{1}, 1.0)), unused("n", Tensor<double>(Shape{1}, 1.0));
  unused.grad.fill(5.0);
  Tape<double> tape;
  tape.param(unused);
  tape.backward(ops::sum(tape, tape.param(used)));
  EXPECT_DOUBLE_EQ(unused.grad[0], 0.0);
}

TEST(Tape, FrozenLeavesReceiveNoGradient) {
  ParamBlock<double> p("p", Tensor<double>(Shape{2}, 3.0));
  p.grad.fill(7.0);
  Tape<double> tape;
  const auto f = tape.frozen(p);
  EXPECT_FALSE(tape.requires_grad(f));
  tape.backward(ops::sum_square(tape, f));
  EXPECT_DOUBLE_EQ(p.grad[0], 7.0);
}

TEST(ParamBlock, SgdStepProjectsIntoBox) {
  ParamBlock<float> p("phi", Tensor<float>(Shape{4}, std::vector<float>{0.0f, 0.009f, -0.009f, 0.005f}), 0.01f);
  p.grad = Tensor<float>(Shape{4}, std::vector<float>{-1.0f, -0.5f, 0.5f, 0.001f});
  p.sgd_step(1.0f);
  EXPECT_FLOAT_EQ(p.value[0], 0.01f);
  EXPECT_FLOAT_EQ(p.value[1], 0.01f);
  EXPECT_FLOAT_EQ(p.value[2], -0.01f);
  EXPECT_FLOAT_EQ(p.value[3], 0.004f);
}

TEST(ParamBlock, UnboundedStepIsPlainSgd) {
  ParamBlock<double> p("w", Tensor<double>(Shape{1}, 2.0));
  p.grad.fill(3.0);
  p.sgd_step(0.5);
  EXPECT_DOUBLE_EQ(p.value[0], 0.5);
}

TEST(Ops, Conv2dRejectsBadGeometry) {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{1, 2, 4, 4}));
  const auto w3 = tape.constant(Tensor<double>(Shape{1, 3, 3, 3}));
  const auto w5 = tape.constant(Tensor<double>(Shape{1, 2, 5, 5}));
  const auto b = tape.constant(Tensor<double>(Shape{1}));
  EXPECT_THROW(ops::conv2d(tape, x, w3, b, 1, 0), lcm::ShapeError);
  EXPECT_THROW(ops::conv2d(tape, x, w5, b, 1, 0), lcm::GeometryError);
  EXPECT_THROW(ops::conv2d(tape, x, w5, b, 0, 2), lcm::ContractError);
}

TEST(Ops, Conv2dIdentityKernel) {
  lcm::Rng rng(3);
  const auto xv = rng.uniform_tensor<double>(Shape{2, 1, 5, 6}, -1, 1);
  Tensor<double> w(Shape{1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  Tape<double> tape;
  const auto y = ops::conv2d(tape, tape.constant(xv), tape.constant(w), tape.constant(Tensor<double>(Shape{1})), 1, 1);
  EXPECT_EQ(tape.value(y), xv);
}

TEST(Ops, LeakyReluAndSigmoidValues) {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{3}, std::vector<double>{-2.0, 0.0, 3.0}));
  const auto& l = tape.value(ops::leaky_relu(tape, x, 0.2));
  EXPECT_DOUBLE_EQ(l[0], -0.4);
  EXPECT_DOUBLE_EQ(l[2], 3.0);
  const auto& s = tape.value(ops::sigmoid(tape, x));
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_NEAR(s[2], 1.0 / (1.0 + std::exp(-3.0)), 1e-15);
  EXPECT_THROW(ops::leaky_relu(tape, x, 1.5), lcm::ContractError);
}

TEST(Ops, UpsampleNearestAndExpand) {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  const auto& u = tape.value(ops::upsample_nearest(tape, x, 2));
  EXPECT_EQ(u.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_DOUBLE_EQ(u.at(0, 0, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(u.at(0, 0, 3, 2), 4.0);
  const auto& e = tape.value(ops::expand2_to(tape, x, 3, 4));
  EXPECT_EQ(e.shape(), (Shape{1, 1, 3, 4}));
  EXPECT_DOUBLE_EQ(e.at(0, 0, 2, 3), 4.0);
}

TEST(Ops, ChannelNormTrainNormalizesAndTracksStats) {
  lcm::Rng rng(4);
  const auto xv = rng.uniform_tensor<double>(Shape{4, 2, 3, 3}, 2, 5);
  Tape<double> tape;
  lcm::ops::NormStats<double> stats(2);
  const auto y = ops::channel_norm(tape, tape.constant(xv), tape.constant(Tensor<double>(Shape{2}, 1.0)),
                                   tape.constant(Tensor<double>(Shape{2}, 0.0)), stats, ops::NormMode::kTrain);
  const auto& yv = tape.value(y);
  for (int c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0, bm = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) {
        m += yv[(n * 2 + c) * 9 + i];
        bm += xv[(n * 2 + c) * 9 + i];
      }
    m /= 36;
    bm /= 36;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) v += std::pow(yv[(n * 2 + c) * 9 + i] - m, 2);
    v /= 36;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-3);
    // running mean moves 10% of the way from 0
    EXPECT_NEAR(stats.mean[c], 0.1 * bm, 1e-12);
  }
}

TEST(Ops, ChannelNormEvalUsesRunningStats) {
  lcm::ops::NormStats<double> stats(1);
  stats.mean[0] = 1.0;
  stats.var[0] = 4.0;
  Tape<double> tape;
  const auto y =
      ops::channel_norm(tape, tape.constant(Tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{1.0, 5.0})),
                        tape.constant(Tensor<double>(Shape{1}, 2.0)), tape.constant(Tensor<double>(Shape{1}, 0.5)),
                        stats, ops::NormMode::kEval, {0.0, 0.1});
  EXPECT_DOUBLE_EQ(tape.value(y)[0], 0.5);
  EXPECT_DOUBLE_EQ(tape.value(y)[1], 4.5);
  EXPECT_DOUBLE_EQ(stats.mean[0], 1.0);
}

TEST(Ops, ConcatStackReshapeLinear) {
  Tape<double> tape;
  const auto a = tape.constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.0));
  const auto b = tape.constant(Tensor<double>(Shape{1, 2, 2, 2}, 2.0));
  EXPECT_EQ(tape.value(ops::concat_channels(tape, a, b)).shape(), (Shape{1, 3, 2, 2}));
  EXPECT_THROW(ops::concat_channels(tape, a, tape.constant(Tensor<double>(Shape{1, 1, 3, 2}))), lcm::ShapeError);
  const lcm::Var parts[] = {a, a, a};
  EXPECT_EQ(tape.value(ops::stack_batch(tape, std::span<const lcm::Var>(parts))).shape(), (Shape{3, 1, 2, 2}));
  EXPECT_THROW(ops::stack_batch(tape, std::span<const lcm::Var>()), lcm::ContractError);
  const auto flat = ops::reshape(tape, b, Shape{1, 8});
  const auto w = tape.constant(Tensor<double>(Shape{3, 8}, 0.5));
  const auto bias = tape.constant(Tensor<double>(Shape{3}, 1.0));
  const auto& y = tape.value(ops::linear(tape, flat, w, bias));
  EXPECT_EQ(y.shape(), (Shape{1, 3}));
  EXPECT_DOUBLE_EQ(y[0], 9.0);
}

TEST(Ops, ReductionsAndMaskedMse) {
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>(Shape{1, 1, 1, 4}, std::vector<double>{1, -2, 3, -4}));
  EXPECT_DOUBLE_EQ(tape.scalar(ops::sum(tape, x)), -2.0);
  EXPECT_DOUBLE_EQ(tape.scalar(ops::mean_abs(tape, x)), 2.5);
  EXPECT_DOUBLE_EQ(tape.scalar(ops::mean_square(tape, x)), 7.5);
  EXPECT_DOUBLE_EQ(tape.scalar(ops::sum_square(tape, x)), 30.0);
  const auto zero = tape.constant(Tensor<double>(Shape{1, 1, 1, 4}));
  const Tensor<double> mask(Shape{1, 4}, std::vector<double>{1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(tape.scalar(ops::masked_mean_square(tape, x, zero, mask)), 5.0);
  const lcm::Var s[] = {ops::sum(tape, x), ops::mean_abs(tape, x)};
  const double wts[] = {2.0, 4.0};
  EXPECT_DOUBLE_EQ(tape.scalar(ops::weighted_sum(tape, std::span<const lcm::Var>(s), std::span<const double>(wts))),
                   6.0);
}
