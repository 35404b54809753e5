#pragma once

// Evaluation protocol: balanced patient-level folds built from baseline
// visits, longitudinal expansion of the training split only, random search
// over the hyperparameter table, and per-variant benchmark reports.

#include "deepfm/checkpoint.hpp"
#include "deepfm/trainer.hpp"

#include <atomic>
#include <exception>
#include <filesystem>
#include <map>
#include <thread>
#include <variant>

namespace deepfm {

// ---------------------------------------------------------------- folds

struct FoldTolerance {
  double class_share = 0.05;
  double sex_share = 0.05;
  double mean_age_years = 2.0;
};

/// Largest absolute deviation of any fold from the global figures.
struct FoldBalance {
  double class_share = 0.0;
  double sex_share = 0.0;
  double mean_age_years = 0.0;

  bool within(const FoldTolerance& tol) const {
    return class_share <= tol.class_share && sex_share <= tol.sex_share &&
           mean_age_years <= tol.mean_age_years;
  }
  std::string describe() const {
    return "class share dev " + format_double(class_share) + ", sex share dev " +
           format_double(sex_share) + ", mean age dev " + format_double(mean_age_years) + " y";
  }
};

class FoldBalanceError : public DataError {
 public:
  FoldBalanceError(const FoldBalance& achieved, const std::string& message)
      : DataError(message + " (" + achieved.describe() + ")"), achieved_(achieved) {}
  const FoldBalance& achieved() const noexcept { return achieved_; }

 private:
  FoldBalance achieved_;
};

struct FoldPlan {
  std::vector<std::vector<std::string>> folds;  // patient ids per fold, sorted
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  FoldBalance balance;

  std::size_t size() const { return folds.size(); }
};

/// Baseline facts used for balancing. Age and sex come from the columns
/// tagged "age" (continuous) and "sex" (categorical); either may be absent.
struct PatientBaseline {
  std::string patient_id;
  std::size_t label = 0;
  std::optional<std::size_t> sex;
  std::optional<double> age;
};

inline std::vector<PatientBaseline> baseline_patients(const std::vector<Sample>& samples,
                                                      const FeatureSchema& schema) {
  std::optional<std::size_t> age_col, sex_col;
  for (std::size_t k = 0; k < schema.num_columns(); ++k) {
    const auto& c = schema.columns()[k];
    if (!age_col && c.has_tag("age") && c.kind == FeatureKind::continuous) age_col = k;
    if (!sex_col && c.has_tag("sex") && c.kind == FeatureKind::categorical) sex_col = k;
  }
  std::map<std::string, std::size_t> visits, baselines;
  std::vector<PatientBaseline> out;
  for (const auto& s : samples) {
    ++visits[s.patient_id];
    if (!s.is_baseline) continue;
    if (++baselines[s.patient_id] > 1)
      throw DataError("patient '" + s.patient_id + "' has more than one baseline visit");
    PatientBaseline p{s.patient_id, s.label, std::nullopt, std::nullopt};
    if (sex_col && s.values[*sex_col]) p.sex = static_cast<std::size_t>(*s.values[*sex_col]);
    if (age_col && s.values[*age_col]) p.age = *s.values[*age_col];
    out.push_back(std::move(p));
  }
  for (const auto& [id, n] : visits)
    if (!baselines.count(id)) throw DataError("patient '" + id + "' has no baseline visit");
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
  return out;
}

inline FoldBalance measure_balance(const std::vector<PatientBaseline>& patients,
                                   const std::vector<std::size_t>& fold_of, std::size_t k,
                                   std::size_t classes) {
  struct Tally {
    std::vector<double> cls;
    double n = 0, male = 0, sexed = 0, age_sum = 0, aged = 0;
  };
  std::vector<Tally> fold(k + 1, Tally{std::vector<double>(classes, 0.0)});
  for (std::size_t p = 0; p < patients.size(); ++p) {
    for (std::size_t slot : {fold_of[p], k}) {
      auto& t = fold[slot];
      t.n += 1;
      t.cls[patients[p].label] += 1;
      if (patients[p].sex) {
        t.sexed += 1;
        t.male += *patients[p].sex == 1 ? 1 : 0;
      }
      if (patients[p].age) {
        t.aged += 1;
        t.age_sum += *patients[p].age;
      }
    }
  }
  const auto& g = fold[k];
  FoldBalance b;
  for (std::size_t f = 0; f < k; ++f) {
    const auto& t = fold[f];
    if (t.n == 0) {
      b.class_share = b.sex_share = 1.0;
      continue;
    }
    for (std::size_t c = 0; c < classes; ++c)
      b.class_share = std::max(b.class_share, std::abs(t.cls[c] / t.n - g.cls[c] / g.n));
    if (t.sexed > 0 && g.sexed > 0)
      b.sex_share = std::max(b.sex_share, std::abs(t.male / t.sexed - g.male / g.sexed));
    if (t.aged > 0 && g.aged > 0)
      b.mean_age_years =
          std::max(b.mean_age_years, std::abs(t.age_sum / t.aged - g.age_sum / g.aged));
  }
  return b;
}

/// Greedy balanced assignment: patients sorted by (class, sex, age) go one by
/// one to the fold holding the fewest patients of their (class, sex) stratum,
/// then the fewest patients overall, then a seeded per-stratum fold order.
inline FoldPlan make_folds(const std::vector<Sample>& samples, const FeatureSchema& schema,
                           std::size_t k = 5, std::uint64_t seed = 0,
                           const FoldTolerance& tolerance = {}) {
  if (k < 2) throw DataError("make_folds: need at least two folds");
  const auto patients = baseline_patients(samples, schema);
  if (patients.size() < k)
    throw DataError("make_folds: " + std::to_string(patients.size()) +
                    " patients cannot fill " + std::to_string(k) + " folds");

  Rng rng(seed);
  std::vector<std::uint64_t> jitter(patients.size());
  for (auto& j : jitter) j = rng();
  std::vector<std::size_t> order(patients.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto sex_key = [](const PatientBaseline& p) { return p.sex ? *p.sex + 1 : 0; };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = patients[a];
    const auto& pb = patients[b];
    const auto ka = std::make_tuple(pa.label, sex_key(pa), pa.age.value_or(0.0), jitter[a]);
    const auto kb = std::make_tuple(pb.label, sex_key(pb), pb.age.value_or(0.0), jitter[b]);
    return ka < kb;
  });

  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> stratum_counts;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> stratum_rank;
  std::vector<std::size_t> totals(k, 0), fold_of(patients.size(), 0);
  for (std::size_t idx : order) {
    const auto key = std::make_pair(patients[idx].label, sex_key(patients[idx]));
    auto& counts = stratum_counts[key];
    auto& rank = stratum_rank[key];
    if (counts.empty()) {
      counts.assign(k, 0);
      rank.resize(k);
      std::iota(rank.begin(), rank.end(), std::size_t{0});
      std::shuffle(rank.begin(), rank.end(), rng);
    }
    std::size_t best = 0;
    for (std::size_t f = 1; f < k; ++f) {
      const auto kf = std::make_tuple(counts[f], totals[f], rank[f]);
      const auto kb = std::make_tuple(counts[best], totals[best], rank[best]);
      if (kf < kb) best = f;
    }
    ++counts[best];
    ++totals[best];
    fold_of[idx] = best;
  }

  FoldPlan plan;
  plan.seed = seed;
  plan.folds.resize(k);
  for (std::size_t p = 0; p < patients.size(); ++p)
    plan.folds[fold_of[p]].push_back(patients[p].patient_id);
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  plan.balance = measure_balance(patients, fold_of, k, schema.num_classes());
  if (!plan.balance.within(tolerance))
    throw FoldBalanceError(plan.balance, "make_folds: balance tolerances not achievable");
  return plan;
}

struct DataSplit {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
};

inline std::set<std::string> patient_set(const std::vector<Sample>& samples) {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.patient_id);
  return ids;
}

inline void assert_no_leakage(const DataSplit& split) {
  const auto tr = patient_set(split.train);
  const auto va = patient_set(split.validation);
  const auto te = patient_set(split.test);
  for (const auto& id : va)
    if (tr.count(id)) throw DataError("leakage: patient '" + id + "' in train and validation");
  for (const auto& id : te)
    if (tr.count(id) || va.count(id))
      throw DataError("leakage: patient '" + id + "' in test and another split");
}

/// Test: baseline visits of fold `fold_index`. The other patients are split
/// (stratified by class, seeded) into validation (baseline visits only) and
/// train (every visit).
inline DataSplit expand_training(const FoldPlan& plan, std::size_t fold_index,
                                 const std::vector<Sample>& samples) {
  if (fold_index >= plan.size()) throw DataError("expand_training: fold index out of range");
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t f = 0; f < plan.size(); ++f)
    for (const auto& id : plan.folds[f]) fold_of[id] = f;

  std::map<std::size_t, std::vector<std::string>> remaining_by_class;
  for (const auto& s : samples) {
    if (!s.is_baseline) continue;
    auto it = fold_of.find(s.patient_id);
    if (it == fold_of.end())
      throw DataError("expand_training: patient '" + s.patient_id + "' not in fold plan");
    if (it->second != fold_index) remaining_by_class[s.label].push_back(s.patient_id);
  }
  Rng rng(derive_seed(plan.seed, 1000 + fold_index));
  std::set<std::string> validation_ids;
  for (auto& [label, ids] : remaining_by_class) {
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto take = static_cast<std::size_t>(
        std::llround(plan.validation_fraction * static_cast<double>(ids.size())));
    validation_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
  }

  DataSplit split;
  for (const auto& s : samples) {
    const std::size_t f = fold_of.at(s.patient_id);
    if (f == fold_index) {
      if (s.is_baseline) split.test.push_back(s);
    } else if (validation_ids.count(s.patient_id)) {
      if (s.is_baseline) split.validation.push_back(s);
    } else {
      split.train.push_back(s);
    }
  }
  assert_no_leakage(split);
  return split;
}

inline nlohmann::json fold_plan_to_json(const FoldPlan& plan) {
  return {{"seed", plan.seed},
          {"validation_fraction", plan.validation_fraction},
          {"balance",
           {{"class_share", plan.balance.class_share},
            {"sex_share", plan.balance.sex_share},
            {"mean_age_years", plan.balance.mean_age_years}}},
          {"folds", plan.folds}};
}

inline FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  try {
    FoldPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.validation_fraction = j.at("validation_fraction").get<double>();
    plan.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
    const auto& b = j.at("balance");
    plan.balance = {b.at("class_share").get<double>(), b.at("sex_share").get<double>(),
                    b.at("mean_age_years").get<double>()};
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("fold plan: ") + e.what());
  }
}

// ---------------------------------------------------------------- search

enum class ModelKind { deepfm, deepfm_meta, fm_only, dnn_only, linear_interactions, linear };

inline constexpr ModelKind kAllModelKinds[] = {ModelKind::deepfm,   ModelKind::deepfm_meta,
                                               ModelKind::fm_only,  ModelKind::dnn_only,
                                               ModelKind::linear_interactions,
                                               ModelKind::linear};

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::deepfm: return "deepfm";
    case ModelKind::deepfm_meta: return "deepfm_meta";
    case ModelKind::fm_only: return "fm_only";
    case ModelKind::dnn_only: return "dnn_only";
    case ModelKind::linear_interactions: return "linear_interactions";
    case ModelKind::linear: return "linear";
  }
  return "?";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
  for (auto k : kAllModelKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::string model_kind_names() {
  std::string out;
  for (auto k : kAllModelKinds) {
    if (!out.empty()) out += ", ";
    out += to_string(k);
  }
  return out;
}

struct IntRange {
  std::size_t lo = 0, hi = 0;  // inclusive
  std::size_t sample(Rng& rng) const {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }
};

struct LogRange {
  double lo = 1.0, hi = 1.0;
  double sample(Rng& rng) const {
    return std::exp(uniform(rng, std::log(lo), std::log(hi)));
  }
};

/// Hyperparameter table: U = uniform integer, LU = log-uniform.
struct SearchSpace {
  std::optional<IntRange> hidden1, hidden2, hidden3, embedding_dim;
  LogRange learning_rate{1e-4, 0.9};
  LogRange l1{1e-4, 0.9};
  LogRange l2{1e-4, 0.9};
  std::optional<LogRange> dropout;

  static SearchSpace for_kind(ModelKind kind) {
    SearchSpace s;
    switch (kind) {
      case ModelKind::deepfm:
      case ModelKind::deepfm_meta:
        s.hidden1 = IntRange{1, 400};
        s.hidden2 = IntRange{1, 400};
        s.embedding_dim = IntRange{1, 20};
        s.dropout = LogRange{0.1, 0.9};
        break;
      case ModelKind::fm_only: s.embedding_dim = IntRange{1, 20}; break;
      case ModelKind::dnn_only:
        s.hidden1 = IntRange{1, 400};
        s.hidden2 = IntRange{1, 400};
        s.hidden3 = IntRange{0, 400};
        s.embedding_dim = IntRange{1, 20};
        s.dropout = LogRange{0.1, 0.9};
        break;
      case ModelKind::linear_interactions:
      case ModelKind::linear:
        s.l1 = LogRange{1e-4, 9.0};
        s.l2 = LogRange{1e-4, 9.0};
        break;
    }
    return s;
  }

  /// Draws every present dimension in a fixed order onto a copy of `base`.
  TrainConfig sample(Rng& rng, const TrainConfig& base) const {
    TrainConfig c = base;
    std::vector<std::size_t> hidden;
    if (hidden1) hidden.push_back(hidden1->sample(rng));
    if (hidden2) hidden.push_back(hidden2->sample(rng));
    if (hidden3) hidden.push_back(hidden3->sample(rng));
    if (!hidden.empty()) c.hidden = hidden;
    if (embedding_dim) c.embedding_dim = embedding_dim->sample(rng);
    c.learning_rate = learning_rate.sample(rng);
    c.l1_weight = l1.sample(rng);
    c.l2_weight = l2.sample(rng);
    if (dropout) c.dropout_rate = dropout->sample(rng);
    return c;
  }
};

using AnyModel = std::variant<DeepFMModel, LinearInteractionModel>;

inline double evaluate_balanced_accuracy(const AnyModel& model, const EncodedSet& data) {
  return std::visit([&](const auto& m) { return evaluate_balanced_accuracy(m, data); }, model);
}

/// A fold's splits encoded with standardization fitted on its training split.
struct PreparedFold {
  std::shared_ptr<const FeatureSchema> schema;
  Standardizer standardizer;
  EncodedSet train, validation, test;
};

inline PreparedFold prepare_fold(const DataSplit& split,
                                 std::shared_ptr<const FeatureSchema> schema) {
  PreparedFold f;
  f.standardizer = fit_standardizer(split.train, *schema);
  f.train = encode_all(split.train, *schema, f.standardizer);
  f.validation = encode_all(split.validation, *schema, f.standardizer);
  f.test = encode_all(split.test, *schema, f.standardizer);
  f.schema = std::move(schema);
  return f;
}

struct FittedModel {
  AnyModel model;
  TrainingLog log;
};

inline FittedModel fit_model(ModelKind kind, const PreparedFold& fold, const TrainConfig& config) {
  auto wrap = [](auto&& r) { return FittedModel{AnyModel(std::move(r.model)), std::move(r.log)}; };
  const std::size_t classes = fold.schema->num_classes();
  switch (kind) {
    case ModelKind::deepfm:
    case ModelKind::deepfm_meta:
      return wrap(train(DeepFMModel(fold.schema, Variant::deepfm, config), fold.train,
                        fold.validation, config));
    case ModelKind::fm_only:
      return wrap(train(DeepFMModel(fold.schema, Variant::fm_only, config), fold.train,
                        fold.validation, config));
    case ModelKind::dnn_only:
      return wrap(train(DeepFMModel(fold.schema, Variant::dnn_only, config), fold.train,
                        fold.validation, config));
    case ModelKind::linear_interactions:
      return wrap(fit_linear_interactions(fold.train, fold.validation, config, classes, true));
    case ModelKind::linear:
      return wrap(fit_linear_interactions(fold.train, fold.validation, config, classes, false));
  }
  throw Error("fit_model: unknown model kind");
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"l1_weight", c.l1_weight},
          {"l2_weight", c.l2_weight},
          {"dropout_rate", c.dropout_rate},
          {"embedding_dim", c.embedding_dim},
          {"hidden", c.hidden},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
          {"interaction", to_string(c.interaction)}};
}

inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.l1_weight = j.value("l1_weight", c.l1_weight);
  c.l2_weight = j.value("l2_weight", c.l2_weight);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  if (j.contains("optimizer")) {
    const auto o = j.at("optimizer").get<std::string>();
    if (o != "adam" && o != "sgd") throw DataError("config: optimizer must be adam or sgd");
    c.optimizer = o == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
  }
  if (j.contains("interaction")) {
    const auto f = j.at("interaction").get<std::string>();
    if (f != "embedding_dot" && f != "literal")
      throw DataError("config: interaction must be embedding_dot or literal");
    c.interaction = f == "literal" ? InteractionForm::literal : InteractionForm::embedding_dot;
  }
  return c;
}

struct TrialRecord {
  std::size_t fold = 0;
  std::size_t trial = 0;
  TrainConfig config;
  double val_balanced_accuracy = 0.0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  bool diverged = false;
  std::string message;
};

struct SearchOutcome {
  TrainConfig best_config;
  std::size_t best_trial = 0;
  FittedModel best;
  std::vector<TrialRecord> trials;
};

/// Seeded random search on one fold: `budget` configs sampled from `space`,
/// each trained on the fold's train split and scored on its validation split.
/// The first trial reaching the top validation score wins.
inline SearchOutcome hyperparameter_search(const SearchSpace& space, const PreparedFold& fold,
                                           ModelKind kind, std::size_t budget,
                                           std::uint64_t seed, std::size_t fold_index = 0,
                                           const TrainConfig& base = {}) {
  if (budget == 0) throw DataError("hyperparameter_search: budget must be >= 1");
  Rng rng(seed);
  std::optional<SearchOutcome> out;
  std::vector<TrialRecord> trials;
  for (std::size_t t = 0; t < budget; ++t) {
    TrainConfig config = space.sample(rng, base);
    config.seed = derive_seed(seed, 5000 + t);
    TrialRecord rec;
    rec.fold = fold_index;
    rec.trial = t;
    rec.config = config;
    try {
      auto fitted = fit_model(kind, fold, config);
      rec.val_balanced_accuracy = fitted.log.best_val_balanced_accuracy;
      rec.epochs_run = fitted.log.epochs.size();
      rec.best_epoch = fitted.log.best_epoch;
      if (!out || rec.val_balanced_accuracy > out->best.log.best_val_balanced_accuracy)
        out = SearchOutcome{config, t, std::move(fitted), {}};
    } catch (const NumericalError& e) {
      rec.diverged = true;
      rec.message = e.what();
    }
    trials.push_back(std::move(rec));
  }
  if (!out)
    throw NumericalError("hyperparameter_search: all " + std::to_string(budget) +
                         " trials diverged");
  out->trials = std::move(trials);
  return std::move(*out);
}

// ---------------------------------------------------------------- benchmark

/// Runs `count` independent tasks on up to `jobs` threads. Results must be
/// written into pre-sized per-index slots; the first failure (by index) is
/// rethrown after all threads finish.
template <class F>
void parallel_for(std::size_t count, std::size_t jobs, F&& task) {
  std::vector<std::exception_ptr> errors(count);
  auto run = [&](std::size_t i) {
    try {
      task(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min(jobs, count); ++w)
      workers.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) run(i);
      });
    for (auto& w : workers) w.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct BenchmarkOptions {
  std::size_t folds = 5;
  std::size_t budget = 30;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  TrainConfig base;  // batch size, epochs, patience and anything the search leaves alone
  /// Kinds listed here skip the search and train once with the given config.
  std::map<ModelKind, TrainConfig> fixed;
  std::optional<std::filesystem::path> checkpoint_dir;
};

struct FoldEntry {
  ModelKind kind = ModelKind::deepfm;
  std::size_t fold = 0;
  TrainConfig config;
  double val_balanced_accuracy = 0.0;
  double test_balanced_accuracy = 0.0;
  std::shared_ptr<const FittedModel> fitted;  // not serialized
  std::shared_ptr<const PreparedFold> data;   // not serialized
};

struct KindSummary {
  ModelKind kind = ModelKind::deepfm;
  double median = 0.0, mean = 0.0, min = 0.0, max = 0.0, stddev = 0.0;
};

inline std::string csv_quote(std::string_view text) {
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

struct EvalReport {
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  std::uint64_t schema_hash = 0;
  FoldBalance balance;
  FoldPlan plan;
  std::vector<FoldEntry> entries;
  std::vector<KindSummary> summaries;
  std::vector<std::pair<ModelKind, TrialRecord>> trials;

  const KindSummary& summary(ModelKind k) const {
    for (const auto& s : summaries)
      if (s.kind == k) return s;
    throw Error("no summary for " + std::string(to_string(k)));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["budget"] = budget;
    j["schema_hash"] = hex64(schema_hash);
    j["fold_balance"] = {{"class_share", balance.class_share},
                         {"sex_share", balance.sex_share},
                         {"mean_age_years", balance.mean_age_years}};
    j["folds"] = nlohmann::json::array();
    for (const auto& e : entries)
      j["folds"].push_back({{"variant", to_string(e.kind)},
                            {"fold", e.fold},
                            {"config", config_to_json(e.config)},
                            {"val_balanced_accuracy", e.val_balanced_accuracy},
                            {"test_balanced_accuracy", e.test_balanced_accuracy}});
    j["summary"] = nlohmann::json::array();
    for (const auto& s : summaries)
      j["summary"].push_back({{"variant", to_string(s.kind)},
                              {"median", s.median},
                              {"mean", s.mean},
                              {"min", s.min},
                              {"max", s.max},
                              {"stddev", s.stddev}});
    return j;
  }

  std::string folds_csv() const {
    std::string out = "variant,fold,val_balanced_accuracy,test_balanced_accuracy\n";
    for (const auto& e : entries)
      out += std::string(to_string(e.kind)) + "," + std::to_string(e.fold) + "," +
             format_double(e.val_balanced_accuracy) + "," +
             format_double(e.test_balanced_accuracy) + "\n";
    return out;
  }

  std::string summary_csv() const {
    std::string out = "variant,median,mean,min,max,stddev\n";
    for (const auto& s : summaries)
      out += std::string(to_string(s.kind)) + "," + format_double(s.median) + "," +
             format_double(s.mean) + "," + format_double(s.min) + "," + format_double(s.max) +
             "," + format_double(s.stddev) + "\n";
    return out;
  }

  std::string trials_csv() const {
    std::string out =
        "variant,fold,trial,val_balanced_accuracy,epochs_run,best_epoch,diverged,config\n";
    for (const auto& [kind, t] : trials)
      out += std::string(to_string(kind)) + "," + std::to_string(t.fold) + "," +
             std::to_string(t.trial) + "," + format_double(t.val_balanced_accuracy) + "," +
             std::to_string(t.epochs_run) + "," + std::to_string(t.best_epoch) + "," +
             (t.diverged ? "1" : "0") + "," + csv_quote(config_to_json(t.config).dump()) + "\n";
    return out;
  }
};

inline KindSummary summarize(ModelKind kind, const std::vector<double>& scores) {
  KindSummary s{kind};
  s.median = median(scores);
  s.min = *std::min_element(scores.begin(), scores.end());
  s.max = *std::max_element(scores.begin(), scores.end());
  s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  double sq = 0.0;
  for (double v : scores) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(scores.size()));
  return s;
}

inline void require_same_columns(const FeatureSchema& a, const FeatureSchema& b) {
  if (a.num_columns() != b.num_columns())
    throw SchemaError("meta schema must declare the same data columns as the plain schema");
  for (std::size_t k = 0; k < a.num_columns(); ++k)
    if (a.columns()[k].name != b.columns()[k].name || a.columns()[k].kind != b.columns()[k].kind)
      throw SchemaError("meta schema column '" + b.columns()[k].name +
                        "' differs from plain schema column '" + a.columns()[k].name + "'");
  if (a.class_labels() != b.class_labels())
    throw SchemaError("meta schema class labels differ from plain schema");
}

/// Full protocol for every requested kind on the same fold plan. deepfm_meta
/// runs the deepfm engine on `meta_schema`.
inline EvalReport run_benchmark(const std::vector<Sample>& samples,
                                std::shared_ptr<const FeatureSchema> schema,
                                std::shared_ptr<const FeatureSchema> meta_schema,
                                const std::vector<ModelKind>& kinds,
                                const BenchmarkOptions& options) {
  if (kinds.empty()) throw DataError("run_benchmark: no variants requested");
  if (meta_schema) require_same_columns(*schema, *meta_schema);
  for (auto k : kinds)
    if (k == ModelKind::deepfm_meta && !meta_schema)
      throw SchemaError("deepfm_meta needs a schema with group features");

  const FoldPlan plan = make_folds(samples, *schema, options.folds, derive_seed(options.seed, 1));
  std::vector<DataSplit> splits;
  for (std::size_t f = 0; f < plan.size(); ++f)
    splits.push_back(expand_training(plan, f, samples));

  struct Task {
    ModelKind kind;
    std::size_t fold;
  };
  std::vector<Task> tasks;
  for (auto k : kinds)
    for (std::size_t f = 0; f < plan.size(); ++f) tasks.push_back({k, f});

  std::vector<FoldEntry> entries(tasks.size());
  std::vector<std::vector<TrialRecord>> trial_logs(tasks.size());
  parallel_for(tasks.size(), options.jobs, [&](std::size_t i) {
    const auto [kind, f] = tasks[i];
    const auto& s = kind == ModelKind::deepfm_meta ? meta_schema : schema;
    auto fold = std::make_shared<const PreparedFold>(prepare_fold(splits[f], s));
    const std::uint64_t task_seed =
        derive_seed(options.seed, 100 * static_cast<std::uint64_t>(kind) + f + 7);
    FoldEntry& e = entries[i];
    e.kind = kind;
    e.fold = f;
    e.data = fold;
    if (auto it = options.fixed.find(kind); it != options.fixed.end()) {
      TrainConfig config = it->second;
      config.seed = task_seed;
      auto fitted = fit_model(kind, *fold, config);
      e.config = config;
      e.val_balanced_accuracy = fitted.log.best_val_balanced_accuracy;
      trial_logs[i].push_back({f, 0, config, e.val_balanced_accuracy, fitted.log.epochs.size(),
                               fitted.log.best_epoch, false, std::string()});
      e.fitted = std::make_shared<const FittedModel>(std::move(fitted));
    } else {
      auto outcome = hyperparameter_search(SearchSpace::for_kind(kind), *fold, kind,
                                           options.budget, task_seed, f, options.base);
      e.config = outcome.best_config;
      e.val_balanced_accuracy = outcome.best.log.best_val_balanced_accuracy;
      trial_logs[i] = std::move(outcome.trials);
      e.fitted = std::make_shared<const FittedModel>(std::move(outcome.best));
    }
    e.test_balanced_accuracy = evaluate_balanced_accuracy(e.fitted->model, fold->test);
    if (options.checkpoint_dir) {
      const auto path = *options.checkpoint_dir /
                        (std::string(to_string(kind)) + "_fold" + std::to_string(f) + ".ckpt");
      std::visit(
          [&](const auto& m) {
            if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DeepFMModel>)
              save_checkpoint(m, path.string(), &fold->standardizer);
            else
              save_checkpoint(m, *fold->schema, path.string(), &fold->standardizer);
          },
          e.fitted->model);
    }
  });

  EvalReport report;
  report.seed = options.seed;
  report.budget = options.budget;
  report.schema_hash = schema->hash();
  report.balance = plan.balance;
  report.plan = plan;
  report.entries = std::move(entries);
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (auto& t : trial_logs[i]) report.trials.emplace_back(tasks[i].kind, std::move(t));
  for (auto k : kinds) {
    std::vector<double> scores;
    for (const auto& e : report.entries)
      if (e.kind == k) scores.push_back(e.test_balanced_accuracy);
    report.summaries.push_back(summarize(k, scores));
  }
  return report;
}

}  // namespace deepfm
