#include "support.hpp"

#include <gtest/gtest.h>

using namespace deepfm;
using namespace testing_support;

namespace {

// Two continuous features, label = [x0 + x1 > 0], with a margin.
EncodedSet separable(std::size_t n, std::uint64_t seed, const std::string& prefix) {
  Rng rng(seed);
  EncodedSet s;
  while (s.size() < n) {
    Vector x = random_vector(rng, 2, 2.0);
    if (std::abs(x(0) + x(1)) < 0.2) continue;
    s.inputs.push_back(x);
    s.labels.push_back(x(0) + x(1) > 0 ? 1 : 0);
    s.patient_ids.push_back(prefix + std::to_string(s.size()));
  }
  return s;
}

TrainConfig quick() {
  TrainConfig c;
  c.learning_rate = 0.02;
  c.embedding_dim = 2;
  c.hidden = {8, 8};
  c.batch_size = 16;
  c.max_epochs = 60;
  c.patience = 60;
  c.dropout_rate = 0.1;
  c.seed = 4;
  return c;
}

}  // namespace

TEST(Train, SeparableToyReachesPerfectTrainingAccuracy) {
  const auto schema = shared(continuous_schema(2, 2));
  const auto train_set = separable(200, 1, "t");
  const auto val = separable(100, 2, "v");
  for (auto v : {Variant::deepfm, Variant::fm_only, Variant::dnn_only}) {
    const auto c = quick();
    const auto result = train(DeepFMModel(schema, v, c), train_set, val, c);
    EXPECT_DOUBLE_EQ(evaluate_balanced_accuracy(result.model, train_set), 1.0) << to_string(v);
  }
}

TEST(Train, ZeroLearningRateChangesNothing) {
  const auto schema = shared(continuous_schema(2, 2));
  const auto train_set = separable(100, 1, "t");
  const auto val = separable(50, 2, "v");
  auto c = quick();
  c.learning_rate = 0.0;
  c.max_epochs = 5;
  c.patience = 10;
  const DeepFMModel initial(schema, Variant::deepfm, c);
  for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd}) {
    c.optimizer = opt;
    auto result = train(initial, train_set, val, c);
    auto before = const_cast<DeepFMModel&>(initial).parameter_views();
    auto after = result.model.parameter_views();
    for (std::size_t k = 0; k < before.size(); ++k)
      EXPECT_TRUE(std::equal(before[k].values.begin(), before[k].values.end(),
                             after[k].values.begin()))
          << before[k].name;
    ASSERT_EQ(result.log.epochs.size(), 5u);
    for (const auto& e : result.log.epochs)
      EXPECT_EQ(e.val_balanced_accuracy, result.log.epochs.front().val_balanced_accuracy);
    EXPECT_EQ(result.log.best_epoch, 0u);
  }
}

TEST(Train, SameSeedSameLog) {
  const auto schema = shared(continuous_schema(2, 2));
  const auto train_set = separable(150, 1, "t");
  const auto val = separable(60, 2, "v");
  const auto c = quick();
  const auto a = train(DeepFMModel(schema, Variant::deepfm, c), train_set, val, c);
  const auto b = train(DeepFMModel(schema, Variant::deepfm, c), train_set, val, c);
  EXPECT_EQ(a.log.to_csv(), b.log.to_csv());
  EXPECT_EQ(a.model.parameters().fm.linear, b.model.parameters().fm.linear);
  auto c2 = c;
  c2.seed = 5;
  const auto d = train(DeepFMModel(schema, Variant::deepfm, c2), train_set, val, c2);
  EXPECT_NE(a.log.to_csv(), d.log.to_csv());
}

TEST(Train, EarlyStoppingKeepsFirstBestEpoch) {
  const auto schema = shared(continuous_schema(2, 2));
  const auto train_set = separable(150, 1, "t");
  const auto val = separable(60, 2, "v");
  auto c = quick();
  c.patience = 3;
  c.max_epochs = 100;
  const auto r = train(DeepFMModel(schema, Variant::fm_only, c), train_set, val, c);
  ASSERT_FALSE(r.log.epochs.empty());
  double best = -1.0;
  std::size_t first = 0;
  for (const auto& e : r.log.epochs)
    if (e.val_balanced_accuracy > best) {
      best = e.val_balanced_accuracy;
      first = e.epoch;
    }
  if (best > 0.0 && r.log.best_epoch > 0) {
    EXPECT_EQ(r.log.best_epoch, first);
    EXPECT_EQ(r.log.best_val_balanced_accuracy, best);
  }
  EXPECT_DOUBLE_EQ(evaluate_balanced_accuracy(r.model, val), r.log.best_val_balanced_accuracy);
  EXPECT_LE(r.log.epochs.size(), r.log.best_epoch + c.patience);
}

TEST(Train, DivergenceRaisesNumericalError) {
  const auto schema = shared(continuous_schema(2, 2));
  const auto train_set = separable(50, 1, "t");
  const auto val = separable(20, 2, "v");
  auto c = quick();
  c.optimizer = OptimizerKind::sgd;
  c.learning_rate = 1e300;
  EXPECT_THROW(train(DeepFMModel(schema, Variant::deepfm, c), train_set, val, c),
               NumericalError);
}

TEST(Train, RejectsLeakyOrEmptyInputs) {
  const auto schema = shared(continuous_schema(2, 2));
  const auto train_set = separable(20, 1, "p");
  const auto c = quick();
  EXPECT_THROW(train(DeepFMModel(schema, Variant::deepfm, c), train_set, train_set, c),
               DataError);
  EXPECT_THROW(train(DeepFMModel(schema, Variant::deepfm, c), EncodedSet{}, train_set, c),
               DataError);
  auto bad = c;
  bad.batch_size = 0;
  EXPECT_THROW(
      train(DeepFMModel(schema, Variant::deepfm, bad), train_set, separable(5, 2, "v"), bad),
      DataError);
}
