#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace deepfm;
using namespace testing_support;

namespace {

oracle::Vec relu(oracle::Vec v) {
  for (double& d : v) d = std::max(d, 0.0);
  return v;
}

oracle::Vec add(oracle::Vec a, const oracle::Vec& b) {
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
  return a;
}

// Eval-mode forward by explicit matrix arithmetic on the concatenated input.
oracle::Vec naive_forward(const MLPHead& head, const Matrix& e) {
  oracle::Vec h;
  for (Eigen::Index j = 0; j < e.cols(); ++j)
    for (Eigen::Index f = 0; f < e.rows(); ++f) h.push_back(e(f, j));
  for (const auto& l : head.hidden)
    h = relu(add(oracle::matvec(oracle::to_mat(l.weight), h), oracle::to_vec(l.bias)));
  return add(oracle::matvec(oracle::to_mat(head.output.weight), h),
             oracle::to_vec(head.output.bias));
}

MLPHead randomized(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes,
                   double dropout, std::uint64_t seed) {
  auto head = init_mlp(in, hidden, classes, dropout, seed);
  Rng rng(seed + 1000);
  for (auto& l : head.hidden) l.bias = random_vector(rng, l.bias.size(), 0.3);
  head.output.bias = random_vector(rng, head.output.bias.size(), 0.3);
  return head;
}

}  // namespace

TEST(MLPForward, ZeroWeightsOutputTheBias) {
  auto head = init_mlp(6, {4, 3}, 3, 0.0, 1).zeros_like();
  head.output.bias << 0.5, -1.0, 2.0;
  Rng rng(0);
  for (int t = 0; t < 5; ++t)
    EXPECT_EQ(mlp_forward(head, random_matrix(rng, 2, 3), Mode::eval, rng).scores,
              head.output.bias);
}

TEST(MLPForward, HandSizedInstanceMatchesMatrixArithmetic) {
  MLPHead head;
  head.hidden.push_back({(Matrix(2, 4) << 0.5, -0.2, 0.1, 0.3, -0.4, 0.6, 0.2, -0.1).finished(),
                         (Vector(2) << 0.1, -0.05).finished()});
  head.hidden.push_back({(Matrix(2, 2) << 1.0, -0.5, 0.25, 0.75).finished(),
                         (Vector(2) << 0.0, 0.2).finished()});
  head.output = {(Matrix(2, 2) << 0.3, -0.7, 1.1, 0.4).finished(),
                 (Vector(2) << -0.1, 0.05).finished()};
  Matrix e(2, 2);
  e << 1.0, -2.0,  //
      0.5, 3.0;
  Rng rng(0);
  const Vector y = mlp_forward(head, e, Mode::eval, rng).scores;
  const auto expected = naive_forward(head, e);
  EXPECT_NEAR(y(0), expected[0], 1e-12);
  EXPECT_NEAR(y(1), expected[1], 1e-12);

  Rng data(3);
  for (int t = 0; t < 20; ++t) {
    const auto h = randomized(12, {5, 4}, 3, 0.0, static_cast<std::uint64_t>(t));
    const Matrix ee = random_matrix(data, 3, 4);
    const Vector yy = mlp_forward(h, ee, Mode::train, rng).scores;  // rate 0: no masks
    const auto ex = naive_forward(h, ee);
    for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(yy(c), ex[static_cast<std::size_t>(c)], 1e-12);
  }
}

TEST(MLPForward, NegativePreActivationsGateEverything) {
  auto head = init_mlp(4, {3, 3}, 2, 0.0, 5);
  head.hidden[0].weight.setZero();
  head.hidden[0].bias.setConstant(-1.0);
  head.output.bias << 0.25, -0.75;
  Rng rng(1);
  const auto out = mlp_forward(head, random_matrix(rng, 2, 2), Mode::eval, rng);
  EXPECT_EQ(out.trace.activations[0].norm(), 0.0);
  EXPECT_EQ(out.scores, head.output.bias);
}

TEST(MLPForward, DropoutIsSeededAndUnbiased) {
  // One hidden layer: the output is linear in the dropped activations, so
  // its mean over masks equals the eval-mode output.
  const auto head = randomized(6, {20}, 2, 0.4, 3);
  Rng data(9);
  const Matrix e = random_matrix(data, 3, 2);
  Rng a(17), b(17);
  const auto first = mlp_forward(head, e, Mode::train, a);
  const auto second = mlp_forward(head, e, Mode::train, b);
  EXPECT_EQ(first.scores, second.scores);
  EXPECT_EQ(first.trace.masks, second.trace.masks);
  for (double v : first.trace.masks[0]) EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.6) < 1e-15);

  Rng rng(23);
  Vector mean = Vector::Zero(2);
  const int draws = 40000;
  for (int k = 0; k < draws; ++k) mean += mlp_forward(head, e, Mode::train, rng).scores;
  mean /= draws;
  Rng unused(0);
  const Vector eval = mlp_forward(head, e, Mode::eval, unused).scores;
  EXPECT_NEAR(mean(0), eval(0), 0.02 * (1.0 + std::abs(eval(0))));
  EXPECT_NEAR(mean(1), eval(1), 0.02 * (1.0 + std::abs(eval(1))));
}

TEST(MLPBackward, ZeroUpstreamGivesZeroGradients) {
  const auto head = randomized(6, {4, 4}, 3, 0.0, 2);
  Rng rng(1);
  const auto out = mlp_forward(head, random_matrix(rng, 2, 3), Mode::eval, rng);
  auto grad = head.zeros_like();
  const Matrix de = mlp_backward(head, out.trace, Vector::Zero(3), grad, 2);
  EXPECT_EQ(de.norm(), 0.0);
  std::vector<ParamView> views;
  grad.append_views(views);
  for (const auto& v : views)
    for (double d : v.values) EXPECT_EQ(d, 0.0);
}

TEST(MLPBackward, MatchesFiniteDifferencesOnEveryParameter) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto head = randomized(6, {5, 4}, 3, 0.0, static_cast<std::uint64_t>(trial));
    Matrix e = random_matrix(rng, 2, 3);
    const Vector probe = random_vector(rng, 3);
    auto loss = [&] {
      Rng unused(0);
      return probe.dot(mlp_forward(head, e, Mode::eval, unused).scores);
    };
    Rng unused(0);
    const auto out = mlp_forward(head, e, Mode::eval, unused);
    auto grad = head.zeros_like();
    Matrix de = mlp_backward(head, out.trace, probe, grad, 2);

    std::vector<ParamView> params, grads;
    head.append_views(params);
    grad.append_views(grads);
    for (std::size_t k = 0; k < params.size(); ++k)
      EXPECT_LT(oracle::max_relative_error(oracle::finite_difference(loss, params[k].values),
                                           grads[k].values),
                1e-5)
          << params[k].name;
    EXPECT_LT(
        oracle::max_relative_error(oracle::finite_difference(loss, as_span(e)), as_span(de)),
        1e-5);
  }
}

TEST(MLPBackward, InactiveUnitHasZeroIncomingGradient) {
  auto head = randomized(4, {3}, 2, 0.0, 8);
  head.hidden[0].weight.row(1).setZero();
  head.hidden[0].bias(1) = -1.0;  // unit 1 never fires
  Rng rng(2);
  const auto out = mlp_forward(head, random_matrix(rng, 2, 2), Mode::eval, rng);
  auto grad = head.zeros_like();
  mlp_backward(head, out.trace, random_vector(rng, 2), grad, 2);
  EXPECT_EQ(grad.hidden[0].weight.row(1).norm(), 0.0);
  EXPECT_EQ(grad.hidden[0].bias(1), 0.0);
}

TEST(MLPBackward, DroppedUnitsGetNoGradient) {
  const auto head = randomized(4, {30}, 2, 0.5, 8);
  Rng rng(3);
  const auto out = mlp_forward(head, random_matrix(rng, 2, 2), Mode::train, rng);
  auto grad = head.zeros_like();
  mlp_backward(head, out.trace, random_vector(rng, 2), grad, 2);
  for (Eigen::Index u = 0; u < 30; ++u)
    if (out.trace.masks[0](u) == 0.0) {
      EXPECT_EQ(grad.hidden[0].weight.row(u).norm(), 0.0);
    }
}

TEST(MLPHead, InitShapesAndErrors) {
  const auto head = init_mlp(12, {7, 0, 5}, 3, 0.2, 1);
  ASSERT_EQ(head.hidden.size(), 2u);
  EXPECT_EQ(head.hidden[0].weight.rows(), 7);
  EXPECT_EQ(head.hidden[1].weight.cols(), 7);
  EXPECT_EQ(head.output.weight.rows(), 3);
  EXPECT_EQ(head.input_width(), 12u);
  const double bound = std::sqrt(6.0 / 12.0);
  EXPECT_LE(head.hidden[0].weight.cwiseAbs().maxCoeff(), bound);
  EXPECT_THROW(init_mlp(4, {2}, 2, 1.0, 1), ShapeError);
  Rng rng(0);
  EXPECT_THROW(mlp_forward(head, Matrix::Zero(2, 2), Mode::eval, rng), ShapeError);
}
