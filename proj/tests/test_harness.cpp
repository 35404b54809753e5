#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace deepfm;
using namespace testing_support;

namespace {

Sample visit(const std::string& pid, std::size_t v, std::size_t label,
             std::vector<std::optional<double>> values) {
  return {pid, pid + "_V" + std::to_string(v), v == 0, std::move(values), label};
}

/// Patients whose label is the argmax of three standard-normal features,
/// so a linear score separates the classes exactly.
std::vector<Sample> argmax_cohort(std::size_t patients, std::uint64_t seed, bool shuffle) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Sample> out;
  for (std::size_t p = 0; p < patients; ++p) {
    std::vector<std::optional<double>> x(3);
    double best = -1e300;
    std::size_t label = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      x[k] = normal(rng);
      if (*x[k] > best) {
        best = *x[k];
        label = k;
      }
    }
    out.push_back(visit("P" + std::to_string(1000 + p), 0, label, x));
  }
  if (shuffle) {
    std::vector<std::size_t> labels;
    for (const auto& s : out) labels.push_back(s.label);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t k = 0; k < out.size(); ++k) out[k].label = labels[k];
  }
  return out;
}

TrainConfig small_config() {
  TrainConfig c;
  c.learning_rate = 0.01;
  c.embedding_dim = 4;
  c.hidden = {16, 16};
  c.dropout_rate = 0.1;
  c.batch_size = 32;
  c.max_epochs = 80;
  c.patience = 8;
  return c;
}

void expect_partition(const FoldPlan& plan, const std::vector<Sample>& samples) {
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& f : plan.folds) {
    total += f.size();
    seen.insert(f.begin(), f.end());
  }
  EXPECT_EQ(seen.size(), total) << "a patient sits in two folds";
  EXPECT_EQ(seen, patient_set(samples));
}

void expect_safe_split(const DataSplit& split) {
  const auto tr = patient_set(split.train);
  const auto va = patient_set(split.validation);
  const auto te = patient_set(split.test);
  for (const auto& id : va) EXPECT_FALSE(tr.count(id)) << id;
  for (const auto& id : te) EXPECT_FALSE(tr.count(id) || va.count(id)) << id;
  for (const auto& s : split.validation) EXPECT_TRUE(s.is_baseline);
  for (const auto& s : split.test) EXPECT_TRUE(s.is_baseline);
  EXPECT_EQ(va.size(), split.validation.size());
  EXPECT_EQ(te.size(), split.test.size());
}

}  // namespace

TEST(Folds, SymmetricStrataBalanceExactly) {
  const auto schema = mixed_schema();
  std::vector<Sample> samples;
  // Six (class, sex) strata of 100 patients, each with the same ages.
  for (std::size_t label = 0; label < 3; ++label)
    for (std::size_t sex = 0; sex < 2; ++sex)
      for (std::size_t r = 0; r < 100; ++r) {
        const std::string pid = "P" + std::to_string(label) + std::to_string(sex) +
                                (r < 10 ? "0" : "") + std::to_string(r);
        samples.push_back(visit(pid, 0, label,
                                {60.0 + static_cast<double>(r / 5), static_cast<double>(sex), 0.0,
                                 0.0, 0.0, 0.0, std::nullopt}));
      }
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto plan = make_folds(samples, schema, 5, seed);
    EXPECT_EQ(plan.balance.class_share, 0.0);
    EXPECT_EQ(plan.balance.sex_share, 0.0);
    EXPECT_NEAR(plan.balance.mean_age_years, 0.0, 1e-12);
    for (const auto& f : plan.folds) EXPECT_EQ(f.size(), 120u);
    expect_partition(plan, samples);
  }
}

TEST(Folds, ReferenceShapedCohortMeetsTolerances) {
  const auto cohort = generate(CohortSpec{});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto plan = make_folds(cohort.samples, cohort.schema, 5, seed);
    EXPECT_TRUE(plan.balance.within({})) << plan.balance.describe();
    expect_partition(plan, cohort.samples);
  }
}

TEST(Folds, SeededAndReproducible) {
  const auto cohort = generate(small_spec(200, 3));
  const auto a = make_folds(cohort.samples, cohort.schema, 5, 11);
  const auto b = make_folds(cohort.samples, cohort.schema, 5, 11);
  const auto c = make_folds(cohort.samples, cohort.schema, 5, 12);
  EXPECT_EQ(a.folds, b.folds);
  EXPECT_NE(a.folds, c.folds);
  const auto back = fold_plan_from_json(nlohmann::json::parse(fold_plan_to_json(a).dump()));
  EXPECT_EQ(back.folds, a.folds);
  EXPECT_EQ(back.seed, a.seed);
  EXPECT_THROW(fold_plan_from_json(nlohmann::json::object()), DataError);
}

TEST(Folds, InfeasibleBalanceIsReportedWithDeviations) {
  const auto schema = mixed_schema();
  std::vector<Sample> samples;
  for (std::size_t k = 0; k < 7; ++k)
    samples.push_back(visit("P" + std::to_string(k), 0, k % 3,
                            {50.0 + 10.0 * static_cast<double>(k), static_cast<double>(k % 2), 0.0,
                             0.0, 0.0, 0.0, 0.0}));
  try {
    make_folds(samples, schema, 5, 0);
    FAIL() << "expected FoldBalanceError";
  } catch (const FoldBalanceError& e) {
    EXPECT_FALSE(e.achieved().within({}));
    EXPECT_NE(std::string(e.what()).find("class share dev"), std::string::npos);
  }
  EXPECT_THROW(make_folds(samples, schema, 1, 0), DataError);
  samples.push_back(visit("P0", 0, 0, samples.front().values));
  EXPECT_THROW(make_folds(samples, schema, 2, 0, {1, 1, 100}), DataError);
}

TEST(Splits, DisjointAcrossManySeeds) {
  const auto cohort = generate(CohortSpec{});
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto plan = make_folds(cohort.samples, cohort.schema, 5, seed);
    for (std::size_t f = 0; f < plan.size(); ++f) expect_safe_split(expand_training(plan, f, cohort.samples));
  }
}

TEST(Splits, LongitudinalVisitsOnlyInTraining) {
  const auto schema = mixed_schema();
  std::vector<Sample> samples;
  for (std::size_t p = 0; p < 60; ++p) {
    const std::string pid = "P" + std::to_string(100 + p);
    const std::size_t visits = 1 + p % 5;
    for (std::size_t v = 0; v < visits; ++v)
      samples.push_back(visit(pid, v, p % 3,
                              {70.0, static_cast<double>(p / 3 % 2), 0.0, 0.0, 0.0, 0.0, 1.0}));
  }
  std::map<std::string, std::size_t> visits_of;
  for (const auto& s : samples) ++visits_of[s.patient_id];
  const auto plan = make_folds(samples, schema, 5, 1, {1.0, 1.0, 100.0});
  for (std::size_t f = 0; f < plan.size(); ++f) {
    const auto split = expand_training(plan, f, samples);
    expect_safe_split(split);
    std::map<std::string, std::size_t> train_count, test_count;
    for (const auto& s : split.train) ++train_count[s.patient_id];
    for (const auto& s : split.test) ++test_count[s.patient_id];
    for (const auto& [pid, n] : train_count) EXPECT_EQ(n, visits_of[pid]) << pid;
    for (const auto& [pid, n] : test_count) EXPECT_EQ(n, 1u) << pid;
    EXPECT_EQ(test_count.size(), plan.folds[f].size());
    EXPECT_EQ(train_count.size() + split.validation.size() + split.test.size(), 60u);
  }
  EXPECT_THROW(expand_training(plan, 5, samples), DataError);
}

TEST(Search, SpaceMatchesTheTableBounds) {
  Rng rng(1);
  const auto deep = SearchSpace::for_kind(ModelKind::deepfm);
  const auto dnn = SearchSpace::for_kind(ModelKind::dnn_only);
  const auto lin = SearchSpace::for_kind(ModelKind::linear_interactions);
  oracle::Vec log_lr;
  for (int k = 0; k < 10000; ++k) {
    const auto c = deep.sample(rng, {});
    ASSERT_EQ(c.hidden.size(), 2u);
    for (auto h : c.hidden) EXPECT_TRUE(h >= 1 && h <= 400);
    EXPECT_TRUE(c.embedding_dim >= 1 && c.embedding_dim <= 20);
    EXPECT_TRUE(c.learning_rate >= 1e-4 && c.learning_rate <= 0.9);
    EXPECT_TRUE(c.dropout_rate >= 0.1 && c.dropout_rate <= 0.9);
    EXPECT_TRUE(c.l1_weight >= 1e-4 && c.l1_weight <= 0.9);
    log_lr.push_back(std::log(c.learning_rate));
  }
  // 1% critical value of the one-sample KS statistic is about 1.63 / sqrt(n).
  EXPECT_LT(oracle::ks_uniform(log_lr, std::log(1e-4), std::log(0.9)), 1.63 / 100.0);
  for (int k = 0; k < 1000; ++k) {
    const auto c = dnn.sample(rng, {});
    ASSERT_EQ(c.hidden.size(), 3u);
    EXPECT_LE(c.hidden[2], 400u);
    const auto l = lin.sample(rng, {});
    EXPECT_TRUE(l.l2_weight >= 1e-4 && l.l2_weight <= 9.0);
  }
}

TEST(Search, BudgetOneReturnsTheSingleSample) {
  const auto cohort = generate(small_spec(150, 2));
  const auto schema = shared(cohort.schema);
  const auto plan = make_folds(cohort.samples, *schema, 5, 1);
  const auto fold = prepare_fold(expand_training(plan, 0, cohort.samples), schema);
  TrainConfig base;
  base.max_epochs = 3;
  base.patience = 3;
  const auto space = SearchSpace::for_kind(ModelKind::linear);
  const auto out = hyperparameter_search(space, fold, ModelKind::linear, 1, 77, 0, base);
  Rng rng(77);
  auto expected = space.sample(rng, base);
  expected.seed = out.best_config.seed;
  EXPECT_EQ(config_to_json(out.best_config), config_to_json(expected));
  EXPECT_EQ(out.trials.size(), 1u);
  EXPECT_EQ(out.best_trial, 0u);
  EXPECT_THROW(hyperparameter_search(space, fold, ModelKind::linear, 0, 77), DataError);
}

TEST(Search, SeedDeterminesTheTrialLogAndFirstBestWins) {
  const auto cohort = generate(small_spec(150, 2));
  const auto schema = shared(cohort.schema);
  const auto plan = make_folds(cohort.samples, *schema, 5, 1);
  const auto fold = prepare_fold(expand_training(plan, 0, cohort.samples), schema);
  TrainConfig base;
  base.max_epochs = 4;
  base.patience = 4;
  const auto space = SearchSpace::for_kind(ModelKind::fm_only);
  auto run = [&](std::uint64_t seed) {
    return hyperparameter_search(space, fold, ModelKind::fm_only, 4, seed, 0, base);
  };
  auto dump = [](const SearchOutcome& o) {
    std::string s;
    for (const auto& t : o.trials)
      s += config_to_json(t.config).dump() + format_double(t.val_balanced_accuracy) + "\n";
    return s;
  };
  const auto a = run(5), b = run(5), c = run(6);
  EXPECT_EQ(dump(a), dump(b));
  EXPECT_NE(dump(a), dump(c));
  for (const auto* o : {&a, &c}) {
    double best = -1.0;
    std::size_t first = 0;
    for (const auto& t : o->trials)
      if (!t.diverged && t.val_balanced_accuracy > best) {
        best = t.val_balanced_accuracy;
        first = t.trial;
      }
    EXPECT_EQ(o->best_trial, first);
    EXPECT_EQ(o->best.log.best_val_balanced_accuracy, best);
  }
}

TEST(Benchmark, LearnableLabelsScoreHighEverywhere) {
  const auto samples = argmax_cohort(800, 1, false);
  const auto schema = shared(continuous_schema(3, 3));
  const auto meta = shared(parse_schema(
      "classes c0 c1 c2\ncontinuous f00\ncontinuous f01\ncontinuous f02\n"
      "group g members=f01,f02\n"));
  BenchmarkOptions opt;
  opt.seed = 3;
  const std::vector<ModelKind> kinds = {ModelKind::deepfm, ModelKind::deepfm_meta,
                                        ModelKind::fm_only, ModelKind::dnn_only,
                                        ModelKind::linear_interactions, ModelKind::linear};
  for (auto k : kinds) {
    opt.fixed[k] = small_config();
    opt.fixed[k].max_epochs = 200;
    opt.fixed[k].patience = 20;
  }
  opt.fixed[ModelKind::dnn_only].hidden = {16, 16, 8};
  const auto report = run_benchmark(samples, schema, meta, kinds, opt);
  EXPECT_EQ(report.entries.size(), kinds.size() * 5);
  for (auto k : kinds) EXPECT_GT(report.summary(k).median, 0.9) << to_string(k);
}

TEST(Benchmark, ShuffledLabelsScoreAtChance) {
  const auto samples = argmax_cohort(1500, 2, true);
  const auto schema = shared(continuous_schema(3, 3));
  BenchmarkOptions opt;
  opt.seed = 4;
  const std::vector<ModelKind> kinds = {ModelKind::deepfm, ModelKind::fm_only,
                                        ModelKind::dnn_only, ModelKind::linear_interactions};
  for (auto k : kinds) opt.fixed[k] = small_config();
  opt.fixed[ModelKind::dnn_only].hidden = {16, 16, 8};
  const auto report = run_benchmark(samples, schema, nullptr, kinds, opt);
  for (auto k : kinds) EXPECT_NEAR(report.summary(k).median, 1.0 / 3.0, 0.05) << to_string(k);
}

TEST(Benchmark, ParallelRunMatchesSerialRun) {
  const auto samples = argmax_cohort(200, 5, false);
  const auto schema = shared(continuous_schema(3, 3));
  BenchmarkOptions opt;
  opt.seed = 9;
  opt.budget = 2;
  opt.base = small_config();
  opt.base.max_epochs = 10;
  const std::vector<ModelKind> kinds = {ModelKind::fm_only, ModelKind::linear};
  const auto serial = run_benchmark(samples, schema, nullptr, kinds, opt);
  opt.jobs = 3;
  const auto parallel = run_benchmark(samples, schema, nullptr, kinds, opt);
  EXPECT_EQ(serial.to_json().dump(), parallel.to_json().dump());
  EXPECT_EQ(serial.trials_csv(), parallel.trials_csv());
}

TEST(Benchmark, MetaVariantNeedsAGroupSchema) {
  const auto samples = argmax_cohort(50, 5, false);
  const auto schema = shared(continuous_schema(3, 3));
  BenchmarkOptions opt;
  EXPECT_THROW(run_benchmark(samples, schema, nullptr, {ModelKind::deepfm_meta}, opt),
               SchemaError);
  EXPECT_THROW(run_benchmark(samples, schema, shared(continuous_schema(4, 3)),
                             {ModelKind::deepfm}, opt),
               SchemaError);
}
