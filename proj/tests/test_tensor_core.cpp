#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "oracles/finite_diff.hpp"
#include "smoothsr/ops.hpp"

using namespace smoothsr;

namespace {

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 0.0) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t.data()[i], want[i], tol) << "index " << i;
}

Tensor leaf(Shape s, std::vector<double> v) { return Tensor(std::move(s), std::move(v), true); }

}  // namespace

TEST(Elementwise, AddsVectors) { expect_values(add(Tensor({2}, {1, 2}), Tensor({2}, {3, 4})), {4, 6}); }

TEST(Elementwise, MultiplyByZeroAnnihilates) {
  Tensor x = leaf({3}, {1.5, -2, 7});
  Tensor y = mul(x, Tensor::zeros({3}));
  expect_values(y, {0, 0, 0});
  backward(sum(y));
  expect_values(x.grad(), {0, 0, 0});
}

TEST(Elementwise, ExpDerivativeMatchesFiniteDifferences) {
  Tensor x = leaf({2}, {0.0, 1.0});
  backward(sum(exp(x)));
  const auto g = x.grad().to_vector();
  EXPECT_NEAR(g[0], 1.0, 1e-15);
  EXPECT_NEAR(g[1], std::exp(1.0), 1e-15);
  const double h = 1e-5;
  for (int i = 0; i < 2; ++i) {
    const double v = i;
    const double fd = (std::exp(v + h) - std::exp(v - h)) / (2 * h);
    EXPECT_LE(oracle::rel_err(g[i], fd), 1e-6);
  }
}

TEST(Elementwise, BroadcastsTrailingDimensions) {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3}, {10, 20, 30});
  expect_values(add(a, b), {11, 22, 33, 14, 25, 36});
  Tensor c({2, 1}, {1, 2});
  expect_values(mul(a, c), {1, 2, 3, 8, 10, 12});
}

TEST(Elementwise, RejectsIncompatibleShapesNamingBoth) {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({4}));
    FAIL() << "expected TensorError";
  } catch (const TensorError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4]"), std::string::npos);
  }
}

TEST(Elementwise, DispatcherCoversEveryKind) {
  Tensor a({2}, {2, 3}), b({2}, {4, 1});
  expect_values(elementwise(ElementwiseKind::add, a, b), {6, 4});
  expect_values(elementwise(ElementwiseKind::sub, a, b), {-2, 2});
  expect_values(elementwise(ElementwiseKind::mul, a, b), {8, 3});
  expect_values(elementwise(ElementwiseKind::div, a, b), {0.5, 3});
  expect_values(elementwise(ElementwiseKind::max, a, b), {4, 3});
  expect_values(elementwise(ElementwiseKind::pow, a, Tensor::scalar(2)), {4, 9});
  expect_values(elementwise(ElementwiseKind::log, a), {std::log(2.0), std::log(3.0)}, 1e-15);
  expect_values(elementwise(ElementwiseKind::abs, neg(a)), {2, 3});
}

TEST(Matmul, IdentityAndArithmetic) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  expect_values(matmul(eye, x), x.to_vector());
  expect_values(matmul(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2, 1}, {1, 1})), {3, 7});
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor b = Tensor::randn({4, 2}, rng, 1.0, true);
  auto r = oracle::check_gradients([&] { return sum(matmul(a, b)); }, {a, b}, 1000, rng, 1e-6);
  EXPECT_TRUE(r.ok()) << r.worst;
  EXPECT_EQ(r.checked, 20u);
}

TEST(Matmul, RejectsInnerMismatch) { EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), TensorError); }

TEST(Conv2d, AllOnesGivesNine) {
  auto y = conv2d(Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 3, 3}), 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 9.0);
}

TEST(Conv2d, ImpulseResponseIsFlippedKernel) {
  // Cross-correlation convention: a centred delta reproduces the kernel
  // rotated by 180 degrees.
  Tensor x = Tensor::zeros({1, 1, 5, 5});
  x.mutable_data()[2 * 5 + 2] = 1.0;
  Tensor w({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = conv2d(x, w, 1, 1);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) EXPECT_DOUBLE_EQ(y.at({0, 0, 1 + a, 1 + b}), w.at({0, 0, 2 - a, 2 - b}));
}

TEST(Conv2d, StridedShapeAndGradients) {
  Rng rng(11);
  Tensor x = Tensor::randn({2, 3, 8, 8}, rng, 1.0, true);
  Tensor w = Tensor::randn({4, 3, 3, 3}, rng, 0.5, true);
  Tensor bias = Tensor::randn({1, 4, 1, 1}, rng, 0.5, true);
  EXPECT_EQ(conv2d(x, w, 2, 1).shape(), (Shape{2, 4, 4, 4}));
  Tensor probe = Tensor::randn({2, 4, 4, 4}, rng);
  auto r = oracle::check_gradients([&] { return sum(mul(add(conv2d(x, w, 2, 1), bias), probe)); }, {x, w, bias},
                                   100, rng, 1e-5);
  EXPECT_TRUE(r.ok()) << r.worst;
}

TEST(Conv2d, RejectsKernelLargerThanPaddedInput) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), 1, 1), TensorError);
}

TEST(PixelShuffle, DefiningPermutation) {
  auto y = pixel_shuffle(Tensor({1, 4, 1, 1}, {1, 2, 3, 4}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  expect_values(y, {1, 2, 3, 4});
}

TEST(PixelShuffle, InverseAndSumPreserved) {
  Rng rng(3);
  Tensor x = Tensor::randn({2, 8, 3, 5}, rng);
  auto y = pixel_shuffle(x, 2);
  EXPECT_EQ(y.shape(), (Shape{2, 2, 6, 10}));
  EXPECT_EQ(pixel_unshuffle(y, 2).to_vector(), x.to_vector());
  EXPECT_NEAR(sum(y).item(), sum(x).item(), 1e-12);
  EXPECT_THROW(pixel_shuffle(Tensor::zeros({1, 6, 2, 2}), 2), TensorError);
}

TEST(UpsampleNearest, ReplicatesAndPreservesMean) {
  expect_values(upsample_nearest(Tensor({1, 1, 1, 1}, {1}), 2), {1, 1, 1, 1});
  Rng rng(5);
  Tensor x = Tensor::randn({2, 3, 4, 4}, rng, 1.0, true);
  EXPECT_EQ(upsample_nearest(x, 1).to_vector(), x.to_vector());
  auto y = upsample_nearest(x, 3);
  EXPECT_NEAR(mean(y).item(), mean(x).item(), 1e-12);
  backward(sum(y));
  for (double g : x.grad().to_vector()) EXPECT_DOUBLE_EQ(g, 9.0);
}

TEST(Normalize, ConstantInputYieldsBeta) {
  Tensor x = Tensor::full({2, 4, 3, 3}, 3.7);
  Tensor gamma({4}, {1, 2, 3, 4}), beta({4}, {0.1, 0.2, 0.3, 0.4});
  auto y = group_norm(x, 2, gamma, beta);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y.at({b, c, i, 0}), beta.data()[c]);
  Tensor rm = Tensor::zeros({4}), rv = Tensor::ones({4});
  auto z = batch_norm(x, gamma, beta, rm, rv, NormMode::train);
  EXPECT_DOUBLE_EQ(z.at({1, 3, 2, 2}), 0.4);
}

TEST(Normalize, ZeroMeanUnitVariance) {
  Rng rng(9);
  // Large input variance keeps the eps floor's bias (eps/var) below 1e-6.
  Tensor x = Tensor::randn({1, 1, 8, 8}, rng, 10.0);
  auto y = group_norm(x, 1, Tensor::ones({1}), Tensor::zeros({1}));
  const double m = mean(y).item();
  const double v = mean(square(add(y, -m))).item();
  EXPECT_NEAR(m, 0.0, 1e-6);
  EXPECT_NEAR(v, 1.0, 1e-6);
}

TEST(Normalize, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  Tensor x = Tensor::randn({2, 4, 3, 3}, rng, 1.0, true);
  Tensor gamma = Tensor::randn({4}, rng, 1.0, true);
  Tensor beta = Tensor::randn({4}, rng, 1.0, true);
  Tensor probe = Tensor::randn({2, 4, 3, 3}, rng);
  auto gn = oracle::check_gradients([&] { return sum(mul(group_norm(x, 2, gamma, beta), probe)); },
                                    {x, gamma, beta}, 100, rng, 1e-5);
  EXPECT_TRUE(gn.ok()) << gn.worst;
  Tensor rm = Tensor::zeros({4}), rv = Tensor::ones({4});
  auto bn = oracle::check_gradients(
      [&] { return sum(mul(batch_norm(x, gamma, beta, rm, rv, NormMode::train), probe)); }, {x, gamma, beta}, 100,
      rng, 1e-5);
  EXPECT_TRUE(bn.ok()) << bn.worst;
}

TEST(Normalize, RejectsIndivisibleGroups) {
  EXPECT_THROW(group_norm(Tensor::zeros({1, 6, 2, 2}), 4, Tensor::ones({6}), Tensor::zeros({6})), TensorError);
}

TEST(Normalize, EmptyBatchCannotBeConstructed) { EXPECT_THROW(Tensor::zeros({0, 4, 2, 2}), TensorError); }

TEST(Normalize, BatchNormEvalUsesRunningStatistics) {
  Tensor x({2, 1, 1, 1}, {1.0, 3.0});
  Tensor rm({1}, {1.0}), rv({1}, {4.0});
  auto y = batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, NormMode::eval);
  EXPECT_NEAR(y.data()[0], 0.0, 1e-12);
  EXPECT_NEAR(y.data()[1], 2.0 / std::sqrt(4.0 + kNormEps), 1e-12);
  batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, NormMode::train, 0.5);
  EXPECT_DOUBLE_EQ(rm.data()[0], 1.5);   // 0.5*1 + 0.5*2
  EXPECT_DOUBLE_EQ(rv.data()[0], 3.0);   // 0.5*4 + 0.5*(1 unbiased * 2)
}

TEST(Activations, Definitions) {
  expect_values(prelu(Tensor({2}, {-4, 4}), Tensor::scalar(0.25)), {-1, 4});
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0)).item(), 0.5);
  EXPECT_DOUBLE_EQ(global_avg_pool(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})).item(), 2.5);
  expect_values(relu(Tensor({3}, {-1, 0, 2})), {0, 0, 2});
}

TEST(Backward, SumAndSquare) {
  Tensor x = leaf({3}, {5, -1, 2});
  backward(sum(x));
  expect_values(x.grad(), {1, 1, 1});
  Tensor y = leaf({2}, {1, 2});
  backward(sum(square(y)));
  expect_values(y.grad(), {2, 4});
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tensor x = leaf({2}, {1, 2});
  backward(sum(mul(x, 3.0)));
  backward(sum(mul(x, 3.0)));
  expect_values(x.grad(), {6, 6});
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, RejectsNonScalarLoss) {
  Tensor x = leaf({2}, {1, 2});
  EXPECT_THROW(backward(mul(x, 2.0)), GraphError);
}

TEST(Backward, RejectsGraphAfterParameterMutation) {
  Tensor x = leaf({2}, {1, 2});
  Tensor loss = sum(square(x));
  x.mutable_data()[0] = 5.0;
  EXPECT_THROW(backward(loss), GraphError);
}

TEST(Backward, RejectsStaleTape) {
  GraphTape tape;
  Tensor x = leaf({2}, {1, 2});
  Tensor y;
  {
    auto on = tape.activate();
    y = mul(x, 2.0);
  }
  tape.reset();
  EXPECT_THROW(backward(sum(y)), GraphError);
}

TEST(Backward, TapeRecordsInTopologicalOrder) {
  GraphTape tape;
  auto on = tape.activate();
  Tensor x = leaf({2}, {1, 2});
  Tensor loss = sum(exp(mul(x, 2.0)));
  EXPECT_EQ(tape.ops(), (std::vector<std::string>{"mul_scalar", "exp", "sum"}));
  EXPECT_EQ(graph_tape_ids(loss), (std::vector<std::uint64_t>{tape.id()}));
}

TEST(Backward, AdjointsAreLinear) {
  Rng rng(21);
  Tensor x = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor w = Tensor::randn({4, 2}, rng, 1.0, true);
  auto l1 = [&] { return sum(exp(matmul(x, w))); };
  auto l2 = [&] { return sum(square(sigmoid(x))); };
  backward(add(l1(), l2()));
  const auto joint = x.grad().to_vector();
  x.zero_grad();
  backward(l1());
  backward(l2());
  const auto split = x.grad().to_vector();
  for (std::size_t i = 0; i < joint.size(); ++i) EXPECT_NEAR(joint[i], split[i], 1e-12);
}

TEST(Backward, OpsDoNotMutateInputs) {
  Rng rng(4);
  Tensor x = Tensor::randn({2, 4, 4, 4}, rng, 1.0, true);
  Tensor w = Tensor::randn({4, 4, 3, 3}, rng, 1.0, true);
  const auto xs = x.to_vector();
  const auto ws = w.to_vector();
  std::vector<std::function<Tensor()>> ops = {
      [&] { return conv2d(x, w, 1, 1); },      [&] { return pixel_shuffle(x, 2); },
      [&] { return upsample_nearest(x, 2); },  [&] { return group_norm(x, 2, Tensor::ones({4}), Tensor::zeros({4})); },
      [&] { return relu(x); },                 [&] { return abs(x); },
      [&] { return logsumexp(x); },            [&] { return permute(x, {0, 2, 3, 1}); },
      [&] { return concat({x, x}, 1); },       [&] { return narrow(x, 1, 1, 2); },
      [&] { return sigmoid(x); },              [&] { return maximum(x, w); },
  };
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i == 11) {
      EXPECT_THROW(ops[i](), TensorError);
      continue;
    }
    auto y = ops[i]();
    backward(sum(square(y)));
    EXPECT_EQ(x.to_vector(), xs) << "op " << i;
    EXPECT_EQ(w.to_vector(), ws) << "op " << i;
  }
}

// Every differentiable op against central differences: 100 random
// coordinates, h = 1e-5, fixed seed.
TEST(GradientProperty, EveryOpMatchesFiniteDifferences) {
  Rng rng(2024);
  Tensor x = Tensor::uniform({2, 4, 4, 4}, rng, -1.0, 1.0, true);
  Tensor pos = Tensor::uniform({2, 4, 4, 4}, rng, 0.5, 2.0, true);
  Tensor y = Tensor::uniform({4, 1, 1}, rng, 0.5, 1.5, true);
  Tensor w = Tensor::randn({3, 4, 3, 3}, rng, 0.5, true);
  Tensor slope = Tensor::uniform({1, 4, 1, 1}, rng, 0.1, 0.3, true);
  Tensor gamma = Tensor::uniform({4}, rng, 0.5, 1.5, true);
  Tensor beta = Tensor::randn({4}, rng, 0.5, true);
  struct Case {
    std::string name;
    std::function<Tensor()> f;
    std::vector<Tensor> params;
  };
  std::vector<Case> cases = {
      {"add", [&] { return add(x, y); }, {x, y}},
      {"sub", [&] { return sub(x, y); }, {x, y}},
      {"mul", [&] { return mul(x, y); }, {x, y}},
      {"div", [&] { return div(x, pos); }, {x, pos}},
      {"pow", [&] { return pow(pos, 2.5); }, {pos}},
      {"exp", [&] { return exp(x); }, {x}},
      {"log", [&] { return log(pos); }, {pos}},
      {"abs", [&] { return abs(x); }, {x}},
      {"max", [&] { return maximum(x, y); }, {x, y}},
      {"sqrt", [&] { return sqrt(pos); }, {pos}},
      {"sigmoid", [&] { return sigmoid(x); }, {x}},
      {"relu", [&] { return relu(x); }, {x}},
      {"prelu", [&] { return prelu(x, slope); }, {x, slope}},
      {"logsumexp", [&] { return logsumexp(x); }, {x}},
      {"sum_axes", [&] { return sum(x, {1, 3}, false); }, {x}},
      {"mean_axes", [&] { return mean(x, {0}, true); }, {x}},
      {"permute", [&] { return permute(x, {3, 1, 0, 2}); }, {x}},
      {"concat", [&] { return concat({x, pos}, 2); }, {x, pos}},
      {"narrow", [&] { return narrow(x, 3, 1, 2); }, {x}},
      {"conv2d", [&] { return conv2d(x, w, 1, 1); }, {x, w}},
      {"conv2d_s2", [&] { return conv2d(x, w, 2, 1); }, {x, w}},
      {"pixel_shuffle", [&] { return pixel_shuffle(x, 2); }, {x}},
      {"upsample", [&] { return upsample_nearest(x, 2); }, {x}},
      {"block_sum", [&] { return block_sum(x, 2); }, {x}},
      {"gap", [&] { return global_avg_pool(x); }, {x}},
      {"group_norm", [&] { return group_norm(x, 2, gamma, beta); }, {x, gamma, beta}},
  };
  for (auto& c : cases) {
    auto probe_shape = c.f().shape();
    Tensor probe = Tensor::randn(probe_shape, rng);
    auto r = oracle::check_gradients([&] { return sum(mul(c.f(), probe)); }, c.params, 100, rng, 1e-4);
    EXPECT_TRUE(r.ok()) << c.name << ": " << r.worst;
    EXPECT_LE(r.kinks, 2u) << c.name;
  }
}

TEST(DoubleBackward, LinearCriticClosedForm) {
  // D(x) = w.x; grad_x D = w; penalty (|w|-1)^2; d/dw = 2(|w|-1) w/|w|.
  Tensor w = leaf({1, 3}, {0.3, -1.2, 2.0});
  Tensor x = leaf({3, 1}, {0.5, 0.1, -0.7});
  auto gx = grad(sum(matmul(w, x)), {x}, true)[0];
  Tensor norm = sqrt(sum(square(gx)));
  Tensor penalty = square(add(norm, -1.0));
  backward(penalty);
  const double n = std::sqrt(0.09 + 1.44 + 4.0);
  const auto gw = w.grad().to_vector();
  const double wv[3] = {0.3, -1.2, 2.0};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(gw[i], 2 * (n - 1) * wv[i] / n, 1e-10);
  EXPECT_NEAR(penalty.item(), (n - 1) * (n - 1), 1e-12);
}

TEST(DoubleBackward, HalfSquaredNormAtUnitPointHasZeroPenalty) {
  Tensor x = leaf({2}, {0.6, 0.8});
  auto gx = grad(mul(sum(square(x)), 0.5), {x}, true)[0];
  expect_values(gx, {0.6, 0.8}, 1e-15);
  EXPECT_NEAR(square(add(sqrt(sum(square(gx))), -1.0)).item(), 0.0, 1e-15);
}

TEST(DoubleBackward, UnsupportedOpIsNamed) {
  Tensor x = leaf({2, 3}, {1, 2, 3, 4, 5, 6});
  try {
    grad(sum(logsumexp(x)), {x}, true);
    FAIL() << "expected UnsupportedDoubleBackward";
  } catch (const UnsupportedDoubleBackward& e) {
    EXPECT_EQ(e.op(), "logsumexp");
  }
  // First-order gradients through the same op are fine.
  EXPECT_NO_THROW(grad(sum(logsumexp(x)), {x}, false));
}

TEST(DoubleBackward, ConvCriticPenaltyMatchesFiniteDifferences) {
  Rng rng(31);
  Tensor w1 = Tensor::randn({3, 2, 3, 3}, rng, 0.4, true);
  Tensor w2 = Tensor::randn({1, 3, 3, 3}, rng, 0.4, true);
  Tensor gamma = Tensor::uniform({3}, rng, 0.5, 1.5, true);
  Tensor beta = Tensor::randn({3}, rng, 0.2, true);
  Tensor xhat = Tensor::randn({2, 2, 5, 5}, rng);
  auto penalty = [&] {
    // The penalty itself needs a gradient even when the oracle evaluates it.
    GradModeGuard on(true);
    Tensor xi = xhat.detach().set_requires_grad(true);
    Tensor h = leaky_relu(group_norm(conv2d(xi, w1, 1, 1), 3, gamma, beta), 0.2);
    Tensor score = sum(conv2d(h, w2, 2, 0));
    Tensor gx = grad(score, {xi}, true)[0];
    Tensor norms = sqrt(sum(square(gx), {1, 2, 3}, false));
    return mean(square(add(norms, -1.0)));
  };
  auto r = oracle::check_gradients(penalty, {w1, w2, gamma, beta}, 100, rng, 1e-4);
  EXPECT_TRUE(r.ok()) << r.worst;
}

// The recorded adjoint of the fused norms must agree with the plain one.
TEST(DoubleBackward, NormAdjointsAgreeAcrossModes) {
  Rng rng(77);
  Tensor x = Tensor::randn({3, 4, 5, 5}, rng, 2.0, true);
  Tensor gamma = Tensor::randn({4}, rng, 1.0, true);
  Tensor beta = Tensor::randn({4}, rng, 1.0, true);
  Tensor w = Tensor::randn({3, 4, 5, 5}, rng);
  Tensor rm = Tensor::zeros({4}), rv = Tensor::ones({4});
  for (int kind = 0; kind < 2; ++kind) {
    auto f = [&] {
      Tensor y = kind == 0 ? group_norm(x, 2, gamma, beta) : batch_norm(x, gamma, beta, rm, rv, NormMode::train);
      return sum(mul(y, w));
    };
    const auto plain = grad(f(), {x, gamma, beta}, false);
    const auto recorded = grad(f(), {x, gamma, beta}, true);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto a = plain[k].to_vector(), b = recorded[k].to_vector();
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10) << kind << " " << k;
    }
  }
}
