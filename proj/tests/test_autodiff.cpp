#include <gtest/gtest.h>

#include <cmath>

#include "adaptlab/errors.hpp"
#include "adaptlab/gradcheck.hpp"
#include "adaptlab/graph.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/split_rng.hpp"
#include "test_util.hpp"

using namespace adaptlab;
using adaptlab::testing::randn;
using T = Tensor<double>;

TEST(Matmul, IdentityLeavesOperand) {
  ad::Graph<double> g;
  auto c = ad::matmul(g.input(T::from({2, 2}, {1, 0, 0, 1})), g.input(T::from({2, 2}, {5, 6, 7, 8})));
  EXPECT_EQ(c.value(), T::from({2, 2}, {5, 6, 7, 8}));
}

TEST(Matmul, RowTimesColumn) {
  ad::Graph<double> g;
  auto c = ad::matmul(g.input(T::from({1, 2}, {1, 2})), g.input(T::from({2, 1}, {3, 4})));
  EXPECT_EQ(c.value().item(), 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  SplitRng r(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = randn(r, {4, 5}), b = randn(r, {5, 3});
    ad::Graph<double> g;
    const auto c = ad::matmul(g.input(a), g.input(b)).value();
    const auto ref = adaptlab::testing::triple_loop_matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{4, 3}));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-6);
  }
}

TEST(Matmul, InnerMismatchNamesBothShapes) {
  ad::Graph<double> g;
  try {
    ad::matmul(g.input(T({2, 3})), g.input(T({4, 2})));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3] x [4,2]"), std::string::npos) << e.what();
  }
}

TEST(DepthwiseConv, IdentityKernel) {
  SplitRng r(1);
  const auto x = randn(r, {2, 3, 6});
  T w({3, 3});
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + 1] = 1.0;
  ad::Graph<double> g;
  EXPECT_EQ(ad::depthwise_conv1d(g.input(x), g.input(w)).value(), x);
}

TEST(DepthwiseConv, BoxFilterExample) {
  ad::Graph<double> g;
  auto y = ad::depthwise_conv1d(g.input(T::from({1, 1, 4}, {1, 2, 3, 4})), g.input(T::from({1, 3}, {1, 1, 1})));
  EXPECT_EQ(y.value(), T::from({1, 1, 4}, {3, 6, 9, 7}));
}

TEST(DepthwiseConv, MatchesDirectSummationOver100Cases) {
  SplitRng r(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = 1 + r.uniform_int(0, 2), C = 1 + r.uniform_int(0, 4), Tn = 1 + r.uniform_int(0, 30);
    const std::size_t k = 2 * r.uniform_int(0, 12) + 1;
    const auto x = randn(r, {B, C, Tn}), w = randn(r, {C, k});
    ad::Graph<double> g;
    const auto y = ad::depthwise_conv1d(g.input(x), g.input(w)).value();
    const auto ref = adaptlab::testing::direct_conv(x, w);
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-6) << "trial " << trial;
  }
}

TEST(DepthwiseConv, ChannelsAreIndependent) {
  SplitRng r(3);
  auto x = randn(r, {1, 3, 8});
  const auto w = randn(r, {3, 5});
  ad::Graph<double> g;
  const auto before = ad::depthwise_conv1d(g.input(x), g.input(w)).value();
  for (std::size_t t = 0; t < 8; ++t) x[t] += 1.0;
  const auto after = ad::depthwise_conv1d(g.input(x), g.input(w)).value();
  for (std::size_t c = 0; c < 3; ++c) {
    bool changed = false;
    for (std::size_t t = 0; t < 8; ++t) changed |= before[c * 8 + t] != after[c * 8 + t];
    EXPECT_EQ(changed, c == 0) << "channel " << c;
  }
}

TEST(DepthwiseConv, RejectsEvenKernelAndAllowsKernelLongerThanSequence) {
  ad::Graph<double> g;
  EXPECT_THROW(ad::depthwise_conv1d(g.input(T({1, 1, 4})), g.input(T({1, 2}))), ShapeError);
  EXPECT_NO_THROW(ad::depthwise_conv1d(g.input(T({1, 1, 2})), g.input(T({1, 7}))));
}

TEST(Backward, SumGivesOnes) {
  ad::Graph<double> g;
  auto x = g.input(T::from({3}, {1, 2, 3}), true);
  g.backward(ad::sum(x));
  EXPECT_EQ(*g.grad(x), T::from({3}, {1, 1, 1}));
}

TEST(Backward, SquareGivesTwiceInput) {
  ad::Graph<double> g;
  auto x = g.input(T::from({2}, {2, -1}), true);
  g.backward(ad::sum(ad::mul(x, x)));
  EXPECT_EQ(*g.grad(x), T::from({2}, {4, -2}));
}

TEST(Backward, FanOutAccumulates) {
  ad::Graph<double> g;
  auto x = g.input(T::from({2}, {1, 1}), true);
  g.backward(ad::sum(ad::add(ad::scale(x, 3.0), x)));
  EXPECT_EQ(*g.grad(x), T::from({2}, {4, 4}));
}

TEST(Backward, RejectsNonScalarLossAndSecondCall) {
  ad::Graph<double> g;
  auto x = g.input(T::from({2}, {1, 2}), true);
  EXPECT_THROW(g.backward(x), GraphError);
  auto loss = ad::sum(x);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), GraphError);
}

TEST(Backward, StaleVariableRejected) {
  ad::Graph<double> g;
  auto x = g.input(T::from({1}, {1}), true);
  g.clear();
  EXPECT_THROW(ad::sum(x), GraphError);
}

TEST(Softmax, RowsSumToOneAndLogSoftmaxAgrees) {
  SplitRng r(5);
  const auto x = randn(r, {4, 7}, 3.0);
  ad::Graph<double> g;
  const auto p = ad::softmax(g.input(x)).value();
  const auto lp = ad::log_softmax(g.input(x)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      s += p[i * 7 + j];
      EXPECT_NEAR(lp[i * 7 + j], std::log(p[i * 7 + j]), 1e-6);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(ConcatSplit, RoundTripIsIdentity) {
  SplitRng r(9);
  const auto x = randn(r, {2, 6, 3});
  ad::Graph<double> g;
  const std::vector<std::size_t> sizes{1, 2, 3};
  auto parts = ad::split(g.input(x), 1, std::span<const std::size_t>(sizes));
  EXPECT_EQ(ad::concat(parts, 1).value(), x);
}

TEST(CrossEntropy, UniformLogitsGiveLn2) {
  ad::Graph<double> g;
  const std::vector<int> labels{0, 1, 0, 1};
  auto loss = ad::cross_entropy(g.input(T({4, 2})), std::span<const int>(labels));
  EXPECT_NEAR(loss.value().item(), std::log(2.0), 1e-6);
}

TEST(Determinism, SameSeedSameOpsBitIdentical) {
  auto run = [] {
    SplitRng r(42);
    ad::Graph<float> g;
    auto x = g.input(randn<float>(r, {2, 5, 8}));
    return ad::gelu(ad::attention(x, x, x, 2)).value();
  };
  EXPECT_TRUE(bit_identical(run(), run()));
}

TEST(SplitRngStreams, ChildIsPureAndDistinct) {
  const SplitRng root(123);
  SplitRng a = root.child(4), b = root.child(4), c = root.child(5);
  for (int i = 0; i < 10; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
  }
}

TEST(GradcheckError, FloorBoundsTheDenominator) {
  EXPECT_DOUBLE_EQ(gradcheck_relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(gradcheck_relative_error(0.0, 1e-8), 1e-8 / kGradcheckFloor);
}

class GradcheckTarget : public ::testing::TestWithParam<std::string> {};

TEST_P(GradcheckTarget, MatchesCentralDifferences) {
  const auto r = run_gradcheck(GetParam(), kGradcheckMinTrials, 1);
  EXPECT_EQ(r.trials, kGradcheckMinTrials);
  EXPECT_GT(r.coordinates, 0u);
  EXPECT_LE(r.max_rel_error, kGradcheckTolerance);
}

INSTANTIATE_TEST_SUITE_P(AllTargets, GradcheckTarget, ::testing::ValuesIn(gradcheck_names()),
                         [](const auto& info) { return info.param; });
