// deepfm: generate cohorts, plan folds, train, search, cross-validate and
// explain models from the command line.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 data, schema,
// parse or checkpoint error, 4 numerical failure (diverged training).
//
// Every command writes <out>/manifest.json; `deepfm replay --manifest` re-runs
// the recorded command and reproduces its reports and checkpoints byte for byte.

#include "deepfm/deepfm.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace deepfm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Args {
  std::string command;
  std::string schema, meta_schema, data, spec, out, config, base, folds_file, manifest;
  std::vector<std::string> variants, checkpoints;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t budget = 30;
  std::size_t jobs = 1;
  std::size_t top_k = 10;
  std::size_t k = 5;
  std::size_t fold = 0;
};

json args_to_json(const Args& a) {
  return {{"command", a.command},   {"schema", a.schema},           {"meta_schema", a.meta_schema},
          {"data", a.data},         {"spec", a.spec},               {"out", a.out},
          {"config", a.config},     {"base", a.base},               {"folds", a.folds_file},
          {"variants", a.variants}, {"checkpoints", a.checkpoints}, {"seed", a.seed},
          {"seed_given", a.seed_given}, {"budget", a.budget},       {"jobs", a.jobs},
          {"top_k", a.top_k},       {"k", a.k},                     {"fold", a.fold}};
}

Args args_from_json(const json& j) {
  Args a;
  a.command = j.at("command").get<std::string>();
  a.schema = j.at("schema").get<std::string>();
  a.meta_schema = j.at("meta_schema").get<std::string>();
  a.data = j.at("data").get<std::string>();
  a.spec = j.at("spec").get<std::string>();
  a.out = j.at("out").get<std::string>();
  a.config = j.at("config").get<std::string>();
  a.base = j.at("base").get<std::string>();
  a.folds_file = j.at("folds").get<std::string>();
  a.variants = j.at("variants").get<std::vector<std::string>>();
  a.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  a.seed = j.at("seed").get<std::uint64_t>();
  a.seed_given = j.at("seed_given").get<bool>();
  a.budget = j.at("budget").get<std::size_t>();
  a.jobs = j.at("jobs").get<std::size_t>();
  a.top_k = j.at("top_k").get<std::size_t>();
  a.k = j.at("k").get<std::size_t>();
  a.fold = j.at("fold").get<std::size_t>();
  return a;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::string absolute(const std::string& path) {
  return path.empty() ? path : fs::absolute(path).lexically_normal().string();
}

/// Collects what a command read and wrote, then emits the manifest.
class Run {
 public:
  explicit Run(Args args) : args_(std::move(args)), start_(std::chrono::steady_clock::now()) {
    if (args_.out.empty()) throw UsageError("--out is required");
    fs::create_directories(args_.out);
  }

  const Args& args() const { return args_; }
  /// For commands whose seed may come from an input file instead of --seed.
  void set_seed(std::uint64_t seed) {
    args_.seed = seed;
    args_.seed_given = true;
  }
  fs::path out() const { return args_.out; }

  void input(const std::string& path) {
    inputs_.push_back({{"path", absolute(path)}, {"fnv1a64", hex64(fnv1a64(read_file(path)))}});
  }

  void write(const std::string& name, const std::string& text) {
    const fs::path path = out() / name;
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw DataError("failed writing '" + path.string() + "'");
    record(name);
  }

  void record(const std::string& name) { outputs_.push_back(name); }

  json config = json::object();
  std::optional<std::uint64_t> schema_hash;

  void finish() {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json stored = args_to_json(args_);
    for (const char* key : {"schema", "meta_schema", "data", "spec", "config", "base", "folds"})
      stored[key] = absolute(stored[key].get<std::string>());
    json checkpoints = json::array();
    for (const auto& c : args_.checkpoints) checkpoints.push_back(absolute(c));
    stored["checkpoints"] = checkpoints;
    stored["out"] = absolute(args_.out);
    json m = {{"command", args_.command},
              {"args", stored},
              {"config", config},
              {"seed", args_.seed},
              {"schema_hash", schema_hash ? json(hex64(*schema_hash)) : json(nullptr)},
              {"inputs", inputs_},
              {"outputs", outputs_},
              {"version", std::string(kVersion)},
              {"duration_seconds", seconds}};
    std::ofstream f(out() / "manifest.json", std::ios::binary);
    f << m.dump(2) << '\n';
  }

 private:
  Args args_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
};

ModelKind parse_kind(const std::string& name) {
  if (auto k = parse_model_kind(name)) return *k;
  throw UsageError("unknown variant '" + name + "'; valid variants: " + model_kind_names());
}

std::shared_ptr<const FeatureSchema> require_schema(Run& run, const std::string& path,
                                                    const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  run.input(path);
  return std::make_shared<const FeatureSchema>(load_schema(path));
}

std::vector<Sample> require_data(Run& run, const FeatureSchema& schema) {
  if (run.args().data.empty()) throw UsageError("--data is required");
  run.input(run.args().data);
  return load_dataset(run.args().data, schema);
}

TrainConfig config_from_file(Run& run, const std::string& path, TrainConfig base = {}) {
  if (path.empty()) return base;
  run.input(path);
  return config_from_json(read_json(path), base);
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  return ss.str();
}

// ---------------------------------------------------------------- commands

void cmd_generate(Run& run) {
  const auto& a = run.args();
  if (a.spec.empty()) throw UsageError("--spec is required");
  run.input(a.spec);
  CohortSpec spec = cohort_spec_from_json(read_json(a.spec));
  if (a.seed_given) spec.seed = a.seed;
  run.set_seed(spec.seed);
  run.config = cohort_spec_to_json(spec);
  const Cohort cohort = generate(spec);
  run.schema_hash = cohort.schema.hash();

  run.write("schema.txt", cohort.schema.to_text());
  run.write("data.csv", dataset_to_text(cohort.samples, cohort.schema));
  run.write("ground_truth.json", cohort.truth.to_json().dump(2) + "\n");
  const auto summary = describe(cohort.samples, cohort.schema);
  run.write("summary.csv", summary.to_csv(cohort.schema));
  if (cohort.meta_schema) run.write("schema_meta.txt", cohort.meta_schema->to_text());

  std::cout << "generated " << summary.samples << " visits of " << summary.patients
            << " patients, " << cohort.schema.num_features() << " features\n";
  for (std::size_t c = 0; c < summary.class_counts.size(); ++c)
    std::cout << "  " << std::left << std::setw(8) << cohort.schema.class_labels()[c]
              << summary.class_counts[c] << "\n";
}

FoldPlan plan_for(const std::vector<Sample>& samples, const FeatureSchema& schema,
                  const Args& a) {
  // Same derivation as run_benchmark, so `folds`, `train` and `cv` agree.
  return make_folds(samples, schema, a.k, derive_seed(a.seed, 1));
}

void cmd_folds(Run& run) {
  const auto schema = require_schema(run, run.args().schema, "--schema");
  const auto samples = require_data(run, *schema);
  run.schema_hash = schema->hash();
  const FoldPlan plan = plan_for(samples, *schema, run.args());
  run.write("fold_plan.json", fold_plan_to_json(plan).dump(2) + "\n");

  std::string csv = "patient_id,fold\n";
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (std::size_t f = 0; f < plan.size(); ++f)
    for (const auto& id : plan.folds[f]) rows.emplace_back(id, f);
  std::sort(rows.begin(), rows.end());
  for (const auto& [id, f] : rows) csv += id + "," + std::to_string(f) + "\n";
  run.write("folds.csv", csv);

  std::cout << "fold  patients\n";
  for (std::size_t f = 0; f < plan.size(); ++f)
    std::cout << std::left << std::setw(6) << f << plan.folds[f].size() << "\n";
  std::cout << plan.balance.describe() << "\n";
}

struct FoldInputs {
  std::shared_ptr<const FeatureSchema> schema;
  PreparedFold fold;
  ModelKind kind;
};

FoldInputs single_fold(Run& run) {
  const auto& a = run.args();
  if (a.variants.size() != 1) throw UsageError("exactly one --variant is required");
  const ModelKind kind = parse_kind(a.variants.front());
  const auto schema = require_schema(run, a.schema, "--schema");
  auto model_schema = schema;
  if (kind == ModelKind::deepfm_meta) {
    model_schema = require_schema(run, a.meta_schema, "--meta-schema (deepfm_meta)");
    require_same_columns(*schema, *model_schema);
  }
  const auto samples = require_data(run, *schema);
  run.schema_hash = model_schema->hash();
  const FoldPlan plan = plan_for(samples, *schema, a);
  if (a.fold >= plan.size()) throw UsageError("--fold out of range");
  return {model_schema, prepare_fold(expand_training(plan, a.fold, samples), model_schema), kind};
}

void save_fitted(Run& run, const FittedModel& fitted, const PreparedFold& fold,
                 const std::string& name) {
  const std::string path = (run.out() / name).string();
  std::visit(
      [&](const auto& m) {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DeepFMModel>)
          save_checkpoint(m, path, &fold.standardizer);
        else
          save_checkpoint(m, *fold.schema, path, &fold.standardizer);
      },
      fitted.model);
  run.record(name);
}

json fold_metrics(const FittedModel& fitted, const PreparedFold& fold) {
  return {{"val_balanced_accuracy", fitted.log.best_val_balanced_accuracy},
          {"test_balanced_accuracy", evaluate_balanced_accuracy(fitted.model, fold.test)},
          {"best_epoch", fitted.log.best_epoch},
          {"epochs_run", fitted.log.epochs.size()},
          {"train_samples", fold.train.size()},
          {"validation_samples", fold.validation.size()},
          {"test_samples", fold.test.size()}};
}

void cmd_train(Run& run) {
  auto in = single_fold(run);
  TrainConfig config = config_from_file(run, run.args().config);
  config.seed = derive_seed(run.args().seed, 2);
  run.config = config_to_json(config);
  const auto fitted = fit_model(in.kind, in.fold, config);
  save_fitted(run, fitted, in.fold, "model.ckpt");
  run.write("training_log.csv", fitted.log.to_csv());
  const auto metrics = fold_metrics(fitted, in.fold);
  run.write("metrics.json", metrics.dump(2) + "\n");
  std::cout << to_string(in.kind) << " fold " << run.args().fold << ": val "
            << fixed(metrics["val_balanced_accuracy"]) << ", test "
            << fixed(metrics["test_balanced_accuracy"]) << " (best epoch "
            << fitted.log.best_epoch << ")\n";
}

void cmd_search(Run& run) {
  auto in = single_fold(run);
  const TrainConfig base = config_from_file(run, run.args().base);
  run.config = {{"base", config_to_json(base)}, {"budget", run.args().budget}};
  auto outcome = hyperparameter_search(SearchSpace::for_kind(in.kind), in.fold, in.kind,
                                       run.args().budget, derive_seed(run.args().seed, 3),
                                       run.args().fold, base);
  EvalReport trials;
  for (auto& t : outcome.trials) trials.trials.emplace_back(in.kind, t);
  run.write("trials.csv", trials.trials_csv());
  run.write("best_config.json", config_to_json(outcome.best_config).dump(2) + "\n");
  save_fitted(run, outcome.best, in.fold, "model.ckpt");
  auto metrics = fold_metrics(outcome.best, in.fold);
  metrics["best_trial"] = outcome.best_trial;
  run.write("metrics.json", metrics.dump(2) + "\n");
  std::cout << "trial  val_bacc  diverged\n";
  for (const auto& t : outcome.trials)
    std::cout << std::left << std::setw(7) << t.trial << std::setw(10)
              << fixed(t.val_balanced_accuracy) << (t.diverged ? "yes" : "no") << "\n";
  std::cout << "best trial " << outcome.best_trial << ", test balanced accuracy "
            << fixed(metrics["test_balanced_accuracy"]) << "\n";
}

void cmd_benchmark(Run& run, bool single_variant) {
  const auto& a = run.args();
  std::vector<std::string> names = a.variants;
  if (single_variant && names.size() != 1)
    throw UsageError("cv takes exactly one --variant; valid variants: " + model_kind_names());
  if (names.empty()) {
    names = {"deepfm", "fm_only", "dnn_only", "linear_interactions"};
    if (!a.meta_schema.empty()) names.insert(names.begin() + 1, "deepfm_meta");
  }
  std::vector<ModelKind> kinds;
  for (const auto& n : names) kinds.push_back(parse_kind(n));

  const auto schema = require_schema(run, a.schema, "--schema");
  std::shared_ptr<const FeatureSchema> meta;
  if (!a.meta_schema.empty()) meta = require_schema(run, a.meta_schema, "--meta-schema");
  const auto samples = require_data(run, *schema);
  run.schema_hash = schema->hash();

  BenchmarkOptions options;
  options.folds = a.k;
  options.budget = a.budget;
  options.seed = a.seed;
  options.jobs = a.jobs;
  options.base = config_from_file(run, a.base);
  if (!a.config.empty()) {
    const TrainConfig fixed_config = config_from_file(run, a.config, options.base);
    for (auto k : kinds) options.fixed[k] = fixed_config;
  }
  options.checkpoint_dir = run.out() / "checkpoints";
  fs::create_directories(*options.checkpoint_dir);
  run.config = {{"base", config_to_json(options.base)},
                {"fixed", a.config.empty() ? json(nullptr)
                                           : config_to_json(options.fixed.begin()->second)},
                {"budget", options.budget},
                {"folds", options.folds}};

  const EvalReport report = run_benchmark(samples, schema, meta, kinds, options);
  for (const auto& e : report.entries)
    run.record("checkpoints/" + std::string(to_string(e.kind)) + "_fold" +
               std::to_string(e.fold) + ".ckpt");
  run.write("report.json", report.to_json().dump(2) + "\n");
  run.write("folds.csv", report.folds_csv());
  run.write("summary.csv", report.summary_csv());
  run.write("trials.csv", report.trials_csv());
  run.write("fold_plan.json", fold_plan_to_json(report.plan).dump(2) + "\n");

  std::cout << std::left << std::setw(22) << "variant" << std::setw(9) << "median"
            << std::setw(9) << "mean" << std::setw(9) << "min" << "max\n";
  for (const auto& s : report.summaries)
    std::cout << std::left << std::setw(22) << to_string(s.kind) << std::setw(9)
              << fixed(s.median) << std::setw(9) << fixed(s.mean) << std::setw(9)
              << fixed(s.min) << fixed(s.max) << "\n";
}

void cmd_explain(Run& run) {
  const auto& a = run.args();
  if (a.checkpoints.empty()) throw UsageError("at least one --checkpoint is required");
  std::shared_ptr<const FeatureSchema> expected;
  if (!a.schema.empty()) expected = require_schema(run, a.schema, "--schema");

  std::vector<DeepFMModel> models;
  std::vector<Standardizer> scalers;
  for (const auto& path : a.checkpoints) {
    run.input(path);
    models.push_back(load_checkpoint(path, expected ? expected.get() : nullptr));
    if (models.back().schema().hash() != models.front().schema().hash())
      throw CheckpointError("checkpoint '" + path + "' was trained on schema " +
                            hex64(models.back().schema().hash()) + ", refusing to mix it with " +
                            hex64(models.front().schema().hash()));
    auto st = load_checkpoint_standardizer(path);
    if (!st) throw CheckpointError("checkpoint '" + path + "' carries no standardizer");
    scalers.push_back(std::move(*st));
  }
  const FeatureSchema& schema = models.front().schema();
  run.schema_hash = schema.hash();
  const auto samples = require_data(run, schema);

  // Test inputs per checkpoint: baseline visits of its fold when a fold plan
  // is given (checkpoint k <-> fold k), otherwise every baseline visit.
  std::optional<FoldPlan> plan;
  if (!a.folds_file.empty()) {
    run.input(a.folds_file);
    plan = fold_plan_from_json(read_json(a.folds_file));
    if (plan->size() != models.size())
      throw UsageError("--folds lists " + std::to_string(plan->size()) + " folds but " +
                       std::to_string(models.size()) + " checkpoints were given");
  }
  std::vector<std::vector<Vector>> inputs(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    std::set<std::string> ids;
    if (plan) ids.insert(plan->folds[k].begin(), plan->folds[k].end());
    for (const auto& s : samples)
      if (s.is_baseline && (!plan || ids.count(s.patient_id)))
        inputs[k].push_back(encode(s, schema, scalers[k]));
    if (inputs[k].empty()) throw DataError("explain: no baseline visits for checkpoint " +
                                           std::to_string(k));
  }

  std::vector<const DeepFMModel*> ptrs;
  std::vector<std::pair<const DeepFMModel*, const std::vector<Vector>*>> pairs;
  for (std::size_t k = 0; k < models.size(); ++k) {
    ptrs.push_back(&models[k]);
    pairs.emplace_back(&models[k], &inputs[k]);
  }
  const auto linear = linear_importance(ptrs);
  const auto interactions = interaction_report(pairs);
  run.write("linear_importance.csv", linear.to_csv());
  run.write("interaction_importance.csv", interactions.to_csv());

  json summary = {{"folds", models.size()}, {"top_k", a.top_k}, {"classes", json::array()}};
  for (std::size_t c = 0; c < schema.num_classes(); ++c) {
    const auto& lc = linear.classes[c];
    const auto& ic = interactions.aggregated[c];
    json lin = json::array(), inter = json::array();
    for (std::size_t r = 0; r < std::min(a.top_k, lc.ranked.size()); ++r)
      lin.push_back({{"name", lc.ranked[r].name},
                     {"mean_weight", lc.ranked[r].mean_weight},
                     {"share", lc.ranked[r].share}});
    for (std::size_t r = 0; r < std::min(a.top_k, ic.ranked.size()); ++r)
      inter.push_back({{"pair", ic.ranked[r].name},
                       {"mean_share", ic.ranked[r].mean_share},
                       {"signed_mean", ic.ranked[r].signed_mean}});
    summary["classes"].push_back({{"label", lc.label},
                                  {"top_k_linear_share", lc.top_k_share(a.top_k)},
                                  {"rest_share", ic.rest_share},
                                  {"linear", lin},
                                  {"interactions", inter}});

    std::cout << "class " << lc.label << ": " << a.top_k << " most important linear features\n";
    for (const auto& row : lin)
      std::cout << "  " << std::left << std::setw(32) << row["name"].get<std::string>()
                << std::right << std::setw(10) << fixed(row["mean_weight"]) << "\n";
    std::cout << "class " << lc.label << ": " << a.top_k << " most important interactions\n";
    for (const auto& row : inter)
      std::cout << "  " << std::left << std::setw(40) << row["pair"].get<std::string>()
                << std::right << std::setw(10) << fixed(row["mean_share"]) << "\n";
  }
  run.write("explain_summary.json", summary.dump(2) + "\n");
}

void dispatch(const Args& a) {
  Run run(a);
  if (a.command == "generate") cmd_generate(run);
  else if (a.command == "folds") cmd_folds(run);
  else if (a.command == "train") cmd_train(run);
  else if (a.command == "search") cmd_search(run);
  else if (a.command == "cv") cmd_benchmark(run, true);
  else if (a.command == "benchmark") cmd_benchmark(run, false);
  else if (a.command == "explain") cmd_explain(run);
  else throw UsageError("unknown command '" + a.command + "'");
  run.finish();
}

void replay(const std::string& manifest_path, const std::string& out_override) {
  const json m = read_json(manifest_path);
  Args a;
  try {
    a = args_from_json(m.at("args"));
    if (m.at("version").get<std::string>() != kVersion)
      std::cerr << "warning: manifest written by version " << m.at("version").get<std::string>()
                << ", replaying with " << kVersion << "\n";
    for (const auto& in : m.at("inputs")) {
      const auto path = in.at("path").get<std::string>();
      if (hex64(fnv1a64(read_file(path))) != in.at("fnv1a64").get<std::string>())
        std::cerr << "warning: input '" << path << "' changed since the recorded run\n";
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest '") + manifest_path + "': " + e.what());
  }
  if (!out_override.empty()) a.out = out_override;
  dispatch(a);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepFM tabular classification toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Args a;
  if (const char* env = std::getenv("DEEPFM_JOBS")) {
    std::size_t jobs = 0;
    if (parse_int(env, jobs) && jobs > 0) a.jobs = jobs;
  }

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", a.seed, "Seed for all randomness"); };
  auto add_out = [&](CLI::App* c) {
    c->add_option("--out", a.out, "Output directory")->required();
  };
  auto add_inputs = [&](CLI::App* c) {
    c->add_option("--schema", a.schema, "Schema file")->required();
    c->add_option("--data", a.data, "Dataset CSV")->required();
  };

  auto* gen = app.add_subcommand("generate", "Generate a synthetic cohort");
  gen->add_option("--spec", a.spec, "Cohort spec (JSON)")->required();
  add_seed(gen);
  add_out(gen);

  auto* folds = app.add_subcommand("folds", "Plan balanced patient-level folds");
  add_inputs(folds);
  folds->add_option("--folds-count", a.k, "Number of folds")->check(CLI::Range(2, 100));
  add_seed(folds);
  add_out(folds);

  auto* train_cmd = app.add_subcommand("train", "Train one model on one fold");
  auto* search_cmd = app.add_subcommand("search", "Random hyperparameter search on one fold");
  for (auto* c : {train_cmd, search_cmd}) {
    add_inputs(c);
    c->add_option("--meta-schema", a.meta_schema, "Schema with group features (deepfm_meta)");
    c->add_option("--variant", a.variants, "Model variant")->required()->expected(1);
    c->add_option("--fold", a.fold, "Test fold index");
    c->add_option("--folds-count", a.k, "Number of folds")->check(CLI::Range(2, 100));
    add_seed(c);
    add_out(c);
  }
  train_cmd->add_option("--config", a.config, "Training config (JSON)");
  search_cmd->add_option("--budget", a.budget, "Trials")->check(CLI::PositiveNumber);
  search_cmd->add_option("--base", a.base, "Base config for settings the search leaves alone");

  auto* cv = app.add_subcommand("cv", "Full cross-validation for one variant");
  auto* bench = app.add_subcommand("benchmark", "Cross-validate several variants on one plan");
  for (auto* c : {cv, bench}) {
    add_inputs(c);
    c->add_option("--meta-schema", a.meta_schema, "Schema with group features (deepfm_meta)");
    c->add_option("--budget", a.budget, "Search trials per fold")->check(CLI::PositiveNumber);
    c->add_option("--jobs", a.jobs, "Parallel fold tasks (default $DEEPFM_JOBS or 1)")
        ->check(CLI::PositiveNumber);
    c->add_option("--config", a.config, "Fixed training config (JSON); skips the search");
    c->add_option("--base", a.base, "Base config for settings the search leaves alone");
    c->add_option("--folds-count", a.k, "Number of folds")->check(CLI::Range(2, 100));
    add_seed(c);
    add_out(c);
  }
  cv->add_option("--variant", a.variants, "Model variant")->required()->expected(1);
  bench->add_option("--variant", a.variants, "Model variants (repeatable; default all)");

  auto* explain = app.add_subcommand("explain", "Linear and interaction importance reports");
  explain->add_option("--checkpoint", a.checkpoints, "Fold checkpoints (repeatable)")->required();
  explain->add_option("--data", a.data, "Dataset CSV")->required();
  explain->add_option("--schema", a.schema, "Expected schema; mismatching checkpoints are refused");
  explain->add_option("--folds", a.folds_file, "Fold plan JSON: checkpoint k explains fold k");
  explain->add_option("--top-k", a.top_k, "Rows per class on the console")
      ->check(CLI::PositiveNumber);
  add_seed(explain);
  add_out(explain);

  std::string out_override;
  auto* rep = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rep->add_option("--manifest", a.manifest, "manifest.json of an earlier run")->required();
  rep->add_option("--out", out_override, "Write to this directory instead of the recorded one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (rep->parsed()) {
      replay(a.manifest, out_override);
    } else {
      const auto* sub = app.get_subcommands().front();
      a.command = sub->get_name();
      a.seed_given = sub->count("--seed") > 0;
      dispatch(a);
    }
    return kExitOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const FoldBalanceError& e) {
    std::cerr << "fold balance error: " << e.what() << "\n";
    return kExitData;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kExitOther;
  }
}
