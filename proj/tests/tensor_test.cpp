#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "pcuda/optim.hpp"
#include "pcuda/tensor.hpp"
#include "test_util.hpp"

namespace pcuda {
namespace {

using testing::max_gradient_error;
using testing::random_values;

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Rng rng(1);
  const Tensor x = Tensor::constant({2, 3}, random_values(6, rng));
  const Tensor eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
  const Tensor y = matmul(eye, x);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y.values()[i], x.values()[i]);
}

TEST(Matmul, HandComputedOneByOne) {
  const Tensor y = matmul(Tensor::constant({1, 2}, {1, 2}), Tensor::constant({2, 1}, {3, 4}));
  EXPECT_EQ(y.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 11.0);
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(7);
  const auto a = random_values(20, rng), b = random_values(15, rng);
  const Tensor y = matmul(Tensor::constant({4, 5}, a), Tensor::constant({5, 3}, b));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += a[i * 5 + k] * b[k * 3 + j];
      EXPECT_NEAR(y.at(i, j), s, 1e-12);
    }
}

TEST(Matmul, ShapeMismatchReportsBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(Softmax, EqualLogitsGiveUniformRow) {
  const Tensor p = softmax(Tensor::constant({1, 4}, {3, 3, 3, 3}), 0.7);
  for (double v : p.values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Softmax, LowTemperatureMatchesDirectEvaluation) {
  const Tensor p = softmax(Tensor::constant({1, 2}, {1, 0}), 0.1);
  const double e10 = std::exp(10.0);
  EXPECT_NEAR(p.values()[0], e10 / (e10 + 1.0), 1e-15);
  EXPECT_NEAR(p.values()[1], 1.0 / (e10 + 1.0), 1e-15);
}

TEST(Softmax, RowsSumToOneForLargeLogits) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double tau = rng.uniform(0.01, 5.0);
    const Tensor p = softmax(Tensor::constant({3, 7}, random_values(21, rng, -1e3, 1e3)), tau);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) s += p.at(i, j);
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  EXPECT_THROW(softmax(Tensor::zeros({1, 2}), 0.0), ValueError);
  EXPECT_THROW(softmax(Tensor::zeros({1, 2}), -1.0), ValueError);
}

TEST(CrossEntropyDist, UniformPairIsLnTwo) {
  const Tensor u = Tensor::constant({1, 2}, {0.5, 0.5});
  EXPECT_NEAR(cross_entropy_dist(u, u).item(), std::numbers::ln2, 1e-12);
  EXPECT_NEAR(cross_entropy_dist(Tensor::constant({1, 2}, {1, 0}), u).item(), std::numbers::ln2, 1e-12);
}

TEST(CrossEntropyDist, NeverBelowTargetEntropy) {
  Rng rng(11);
  auto random_dist = [&](std::size_t k) {
    auto v = random_values(k, rng, 0.0, 1.0);
    double s = 0.0;
    for (double x : v) s += x;
    for (double& x : v) x /= s;
    return v;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + trial % 6;
    const Tensor t = Tensor::constant({1, k}, random_dist(k));
    const Tensor o = Tensor::constant({1, k}, random_dist(k));
    EXPECT_GE(cross_entropy_dist(t, o).item(), cross_entropy_dist(t, t).item() - 1e-12);
  }
}

TEST(CrossEntropyDist, RejectsNaN) {
  const Tensor bad = Tensor::constant({1, 2}, {std::nan(""), 1.0});
  const Tensor ok = Tensor::constant({1, 2}, {0.5, 0.5});
  EXPECT_THROW(cross_entropy_dist(bad, ok), ValueError);
  EXPECT_THROW(cross_entropy_dist(ok, bad), ValueError);
}

TEST(CrossEntropyDist, TargetReceivesNoGradient) {
  Tensor target_logits = Tensor::parameter({1, 3}, {0.1, 0.5, -0.2});
  Tensor online_logits = Tensor::parameter({1, 3}, {0.3, -0.1, 0.4});
  backward(cross_entropy_dist(softmax(target_logits), softmax(online_logits)));
  for (double g : target_logits.grad()) EXPECT_EQ(g, 0.0);
  double norm = 0.0;
  for (double g : online_logits.grad()) norm += std::abs(g);
  EXPECT_GT(norm, 0.0);
}

TEST(L2Normalize, ThreeFourFive) {
  const Tensor y = l2_normalize(Tensor::constant({1, 2}, {3, 4}));
  EXPECT_NEAR(y.values()[0], 0.6, 1e-15);
  EXPECT_NEAR(y.values()[1], 0.8, 1e-15);
}

TEST(L2Normalize, UnitRowsForRandomInput) {
  Rng rng(5);
  const Tensor y = l2_normalize(Tensor::constant({10, 6}, random_values(60, rng)));
  const Tensor yy = l2_normalize(y);
  for (std::size_t i = 0; i < 10; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      s += y.at(i, j) * y.at(i, j);
      EXPECT_NEAR(yy.at(i, j), y.at(i, j), 1e-15);
    }
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-9);
  }
}

TEST(L2Normalize, ZeroRowRejectedWithIndex) {
  try {
    l2_normalize(Tensor::constant({2, 2}, {1, 0, 0, 0}));
    FAIL();
  } catch (const ValueError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(Backward, QuadraticGradientIsTwiceWeights) {
  Tensor w = Tensor::parameter({4}, {1.0, -2.0, 0.5, 3.0});
  backward(sum(mul(w, w)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 2.0 * w.values()[i]);
}

TEST(Backward, ConstantLossLeavesZeroGradients) {
  Tensor w = Tensor::parameter({3}, {1, 2, 3});
  backward(Tensor::scalar(4.0));
  for (double g : w.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tensor w = Tensor::parameter({3}, {1, 2, 3});
  EXPECT_THROW(backward(scale(w, 2.0)), ShapeError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tensor w = Tensor::parameter({2}, {1.0, 2.0});
  const Tensor y = scale(w, 3.0);
  backward(sum(add(y, y)));
  EXPECT_DOUBLE_EQ(w.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], 6.0);
}

TEST(Backward, EveryOpMatchesFiniteDifferences) {
  Rng rng(21);
  Tensor x = Tensor::parameter({8, 3}, random_values(24, rng));
  Tensor w = Tensor::parameter({3, 5}, random_values(15, rng));
  Tensor b = Tensor::parameter({5}, random_values(5, rng));
  Tensor w2 = Tensor::parameter({5, 4}, random_values(20, rng));
  const std::vector<std::size_t> pick_idx{0, 3};
  const std::vector<std::size_t> gather_idx{4, 3, 2, 1, 0, 0};
  const Tensor t = softmax(Tensor::constant({5, 4}, random_values(20, rng)), 0.7);
  auto loss = [&] {
    Tensor h = relu(linear(x, w, b));
    Tensor pooled = segment_max(h, 4);                                       // 2x5
    Tensor both = concat_rows({pooled, slice_rows(h, 2, 3)});                // 5x5
    Tensor z = l2_normalize(concat_cols(both, gather_rows(both, {gather_idx.data(), 5})));
    Tensor p = softmax(matmul(z, concat_rows({w2, w2})), 0.3);
    Tensor ce = cross_entropy_dist(t, softmax(matmul(both, w2), 1.3));
    Tensor nll = sum(log_clamped(pick(slice_rows(p, 0, 2), pick_idx)));
    return add(add(ce, scale(nll, -0.5)), mean(sub(mul(h, h), h)));
  };
  EXPECT_LT(max_gradient_error(loss, {x, w, b, w2}), 1e-4);
}

TEST(Adam, FirstStepClosedForm) {
  Tensor w = Tensor::parameter({1}, {0.0});
  Adam opt({w}, {.learning_rate = 0.001, .weight_decay = 0.0});
  w.mutable_grad()[0] = 1.0;
  opt.step();
  EXPECT_NEAR(w.values()[0], -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Adam, ZeroGradientWithoutDecayIsNoOp) {
  Tensor w = Tensor::parameter({3}, {1.0, -2.0, 0.5});
  Adam opt({w}, {.weight_decay = 0.0});
  w.zero_grad();
  opt.step();
  EXPECT_EQ(w.values()[0], 1.0);
  EXPECT_EQ(w.values()[1], -2.0);
  EXPECT_EQ(w.values()[2], 0.5);
}

TEST(Adam, RejectsNonFiniteGradientWithoutMutation) {
  Tensor w = Tensor::parameter({2}, {1.0, 2.0});
  Adam opt({w});
  w.mutable_grad()[0] = 1.0;
  w.mutable_grad()[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(opt.step(), ValueError);
  EXPECT_EQ(w.values()[0], 1.0);
  EXPECT_EQ(opt.step_count(), 0u);
}

// Oracle: plain scalar simulation of the same update rule.
TEST(Adam, ConvergesOnScalarQuadratic) {
  double sw = 0.0, m = 0.0, v = 0.0;
  std::vector<double> oracle;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * (sw - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    sw -= 0.1 * (mh / (std::sqrt(vh) + 1e-8));
    oracle.push_back(sw);
  }
  Tensor w = Tensor::parameter({1}, {0.0});
  Adam opt({w}, {.learning_rate = 0.1, .weight_decay = 0.0});
  double first_err = 3.0;
  for (int t = 0; t < 100; ++t) {
    opt.zero_grad();
    const Tensor d = sub(w, Tensor::scalar(3.0));
    backward(sum(mul(d, d)));
    opt.step();
    EXPECT_NEAR(w.values()[0], oracle[t], 1e-12);
  }
  EXPECT_LT(std::abs(w.values()[0] - 3.0), 0.5);
  EXPECT_LT(std::abs(w.values()[0] - 3.0), first_err);
  // Trend: mean error over the last 20 steps is below that of the first 20.
  double early = 0.0, late = 0.0;
  for (int t = 0; t < 20; ++t) {
    early += std::abs(oracle[t] - 3.0);
    late += std::abs(oracle[80 + t] - 3.0);
  }
  EXPECT_LT(late, early);
}

TEST(Adam, DeterministicAcrossRuns) {
  auto run = [] {
    Rng rng(9);
    Tensor w = Tensor::parameter({4, 3}, random_values(12, rng));
    Tensor x = Tensor::constant({5, 4}, random_values(20, rng));
    Adam opt({w});
    for (int i = 0; i < 25; ++i) {
      opt.zero_grad();
      backward(sum(mul(matmul(x, w), matmul(x, w))));
      opt.step();
    }
    return std::vector<double>(w.values().begin(), w.values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(CosineLr, Endpoints) {
  const LRSchedule s{.lr_max = 1e-3, .lr_min = 1e-5, .total_epochs = 200};
  EXPECT_DOUBLE_EQ(cosine_lr(s, 0), 1e-3);
  EXPECT_NEAR(cosine_lr(s, 200), 1e-5, 1e-18);
  EXPECT_NEAR(cosine_lr(s, 100), (1e-3 + 1e-5) / 2, 1e-15);
  for (int e = 0; e <= 200; ++e) {
    EXPECT_GE(cosine_lr(s, e), s.lr_min - 1e-18);
    EXPECT_LE(cosine_lr(s, e), s.lr_max);
  }
}

TEST(CosineLr, RejectsOutOfRangeEpoch) {
  const LRSchedule s{};
  EXPECT_THROW(cosine_lr(s, -1), ValueError);
  EXPECT_THROW(cosine_lr(s, s.total_epochs + 1), ValueError);
}

}  // namespace
}  // namespace pcuda
