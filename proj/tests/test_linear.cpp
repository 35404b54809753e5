#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace deepfm;
using namespace testing_support;

TEST(LinearInteractions, ExpandedWidth) {
  EXPECT_EQ(expanded_width(2, true), 3u);
  EXPECT_EQ(expanded_width(109, true), 109u + 5886u);
  EXPECT_EQ(expanded_width(109, true), 5995u);
  EXPECT_EQ(expanded_width(109, false), 109u);
  EXPECT_EQ(LinearInteractionModel(109, 3, true).expanded_width(), 5995u);
}

TEST(LinearInteractions, ExpansionListsEveryProductOnce) {
  const LinearInteractionModel model(4, 2, true);
  const Vector x = (Vector(4) << 2, 3, 5, 7).finished();
  const Vector z = model.expand(x);
  const std::vector<double> expected = {2, 3, 5, 7, 6, 10, 14, 15, 21, 35};
  ASSERT_EQ(z.size(), 10);
  for (Eigen::Index k = 0; k < 10; ++k) EXPECT_EQ(z(k), expected[static_cast<std::size_t>(k)]);
  EXPECT_THROW(model.expand(Vector::Zero(3)), ShapeError);
}

TEST(LinearInteractions, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  LinearInteractionModel model(4, 3, true);
  model.parameters().bias = random_vector(rng, 3);
  model.parameters().weights = random_matrix(rng, 3, 10, 0.5);
  EncodedSet batch;
  for (std::size_t k = 0; k < 5; ++k) {
    batch.inputs.push_back(random_vector(rng, 4));
    batch.labels.push_back(k % 3);
    batch.patient_ids.push_back(std::to_string(k));
  }
  const Regularization reg{0.01, 0.02};
  auto grad = model.zero_gradient();
  loss_and_gradient(model, batch, reg, grad);
  auto f = [&] { return loss(model, batch, reg); };
  auto params = model.parameter_views();
  auto grads = model.views_of(grad);
  for (std::size_t k = 0; k < params.size(); ++k)
    EXPECT_LT(oracle::max_relative_error(oracle::finite_difference(f, params[k].values),
                                         grads[k].values),
              1e-5)
        << params[k].name;
}

TEST(LinearInteractions, LearnsPureProductRule) {
  // y = [x1 * x2 > 0]: invisible to a linear model, one weight for the
  // expanded one.
  Rng rng(3);
  auto make = [&](std::size_t n, const std::string& prefix) {
    EncodedSet s;
    for (std::size_t k = 0; k < n; ++k) {
      Vector x = random_vector(rng, 2, 2.0);
      s.inputs.push_back(x);
      s.labels.push_back(x(0) * x(1) > 0 ? 1 : 0);
      s.patient_ids.push_back(prefix + std::to_string(k));
    }
    return s;
  };
  const auto train_set = make(600, "t");
  const auto val = make(300, "v");
  TrainConfig c;
  c.learning_rate = 0.05;
  c.batch_size = 32;
  c.max_epochs = 200;
  c.patience = 20;
  const auto fitted = fit_linear_interactions(train_set, val, c, 2, true);
  EXPECT_GT(fitted.log.best_val_balanced_accuracy, 0.95);
  const auto plain = fit_linear_interactions(train_set, val, c, 2, false);
  EXPECT_LT(plain.log.best_val_balanced_accuracy, 0.75);
}
