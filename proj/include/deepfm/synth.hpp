#pragma once

// Synthetic cohorts shaped like the reference study (three diagnostic
// classes, demographics, regional volumes and thicknesses, a CSF triple that
// is often missing, genetic markers, longitudinal visits) with planted
// linear and pairwise effects on the class scores as ground truth.

#include "deepfm/dataset.hpp"
#include "deepfm/metrics.hpp"

#include <json.hpp>

#include <numeric>

namespace deepfm {

enum class Demographics { full, minimal, none };

struct SchemaTemplate {
  std::size_t volume = 20;
  std::size_t thickness = 34;
  std::size_t csf = 3;      // at most 3: abeta, tau, ptau
  std::size_t genetic = 41;  // apoe + snp_01..
  Demographics demographics = Demographics::full;
  std::size_t generic = 0;  // extra standard-normal features x_00..
  std::size_t volume_groups = 0;  // > 0: also emit a meta schema grouping volumes
};

struct PlantedLinear {
  std::string feature;
  std::size_t class_index = 0;
  double coefficient = 0.0;
};

struct PlantedPair {
  std::string feature_a;
  std::string feature_b;
  std::size_t class_index = 0;
  double coefficient = 0.0;
};

/// Planted effects act on generator-standardized values, so a coefficient
/// means the same for age in years as for a standard-normal volume.
struct CohortSpec {
  std::size_t n_patients = 1492;
  double mean_visits = 6844.0 / 1492.0;
  std::size_t max_visits = 15;
  std::vector<std::string> class_labels = {"AD", "MCI", "CN"};
  std::vector<double> class_priors = {1536.0 / 6844.0, 3131.0 / 6844.0, 2177.0 / 6844.0};
  SchemaTemplate schema;
  std::vector<PlantedLinear> planted_linear;
  std::vector<PlantedPair> planted_pairs;
  double csf_missing_rate = 1.0 - 1863.0 / 6844.0;
  double noise_scale = 0.5;
  double drift_scale = 0.05;
  double dirichlet_alpha = 2.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_patients == 0) throw DataError("cohort spec: n_patients must be positive");
    if (mean_visits < 1.0 || max_visits < 1)
      throw DataError("cohort spec: mean_visits and max_visits must be >= 1");
    if (class_labels.size() < 2 || class_labels.size() != class_priors.size())
      throw DataError("cohort spec: need >= 2 class labels with one prior each");
    double sum = 0.0;
    for (double p : class_priors) {
      if (!(p > 0.0)) throw DataError("cohort spec: class priors must be positive");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw DataError("cohort spec: class priors must sum to 1");
    if (!(csf_missing_rate >= 0.0 && csf_missing_rate <= 1.0))
      throw DataError("cohort spec: csf_missing_rate must lie in [0, 1]");
    if (!(noise_scale >= 0.0) || !(drift_scale >= 0.0) || !(dirichlet_alpha > 0.0))
      throw DataError("cohort spec: noise, drift and alpha must be nonnegative/positive");
    if (schema.csf > 3) throw DataError("cohort spec: at most 3 CSF features");
    if (schema.volume_groups > schema.volume)
      throw DataError("cohort spec: more volume groups than volume features");
    for (const auto& p : planted_linear)
      if (!std::isfinite(p.coefficient) || p.class_index >= class_labels.size())
        throw DataError("cohort spec: bad planted linear effect on '" + p.feature + "'");
    for (const auto& p : planted_pairs)
      if (!std::isfinite(p.coefficient) || p.class_index >= class_labels.size() ||
          p.feature_a == p.feature_b)
        throw DataError("cohort spec: bad planted pair '" + p.feature_a + "', '" + p.feature_b +
                        "'");
  }
};

inline std::string_view to_string(Demographics d) {
  switch (d) {
    case Demographics::full: return "full";
    case Demographics::minimal: return "minimal";
    case Demographics::none: return "none";
  }
  return "?";
}

inline nlohmann::json cohort_spec_to_json(const CohortSpec& s) {
  nlohmann::json lin = nlohmann::json::array(), pairs = nlohmann::json::array();
  for (const auto& p : s.planted_linear)
    lin.push_back({{"feature", p.feature}, {"class", p.class_index}, {"coefficient", p.coefficient}});
  for (const auto& p : s.planted_pairs)
    pairs.push_back({{"a", p.feature_a},
                     {"b", p.feature_b},
                     {"class", p.class_index},
                     {"coefficient", p.coefficient}});
  return {{"n_patients", s.n_patients},
          {"mean_visits", s.mean_visits},
          {"max_visits", s.max_visits},
          {"class_labels", s.class_labels},
          {"class_priors", s.class_priors},
          {"schema",
           {{"volume", s.schema.volume},
            {"thickness", s.schema.thickness},
            {"csf", s.schema.csf},
            {"genetic", s.schema.genetic},
            {"demographics", to_string(s.schema.demographics)},
            {"generic", s.schema.generic},
            {"volume_groups", s.schema.volume_groups}}},
          {"planted_linear", lin},
          {"planted_pairs", pairs},
          {"csf_missing_rate", s.csf_missing_rate},
          {"noise_scale", s.noise_scale},
          {"drift_scale", s.drift_scale},
          {"dirichlet_alpha", s.dirichlet_alpha},
          {"seed", s.seed}};
}

/// Missing keys keep their defaults; unknown keys are errors.
inline CohortSpec cohort_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "n_patients",     "mean_visits",   "max_visits",       "class_labels", "class_priors",
      "schema",         "planted_linear", "planted_pairs",   "csf_missing_rate",
      "noise_scale",    "drift_scale",   "dirichlet_alpha",  "seed"};
  if (!j.is_object()) throw DataError("cohort spec: top level must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw DataError("cohort spec: unknown key '" + key + "'");
  CohortSpec s;
  try {
    s.n_patients = j.value("n_patients", s.n_patients);
    s.mean_visits = j.value("mean_visits", s.mean_visits);
    s.max_visits = j.value("max_visits", s.max_visits);
    s.class_labels = j.value("class_labels", s.class_labels);
    s.class_priors = j.value("class_priors", s.class_priors);
    if (j.contains("schema")) {
      const auto& t = j.at("schema");
      static const std::set<std::string> schema_keys = {
          "volume", "thickness", "csf", "genetic", "demographics", "generic", "volume_groups"};
      for (const auto& [key, value] : t.items())
        if (!schema_keys.count(key)) throw DataError("cohort spec: unknown schema key '" + key + "'");
      s.schema.volume = t.value("volume", s.schema.volume);
      s.schema.thickness = t.value("thickness", s.schema.thickness);
      s.schema.csf = t.value("csf", s.schema.csf);
      s.schema.genetic = t.value("genetic", s.schema.genetic);
      s.schema.generic = t.value("generic", s.schema.generic);
      s.schema.volume_groups = t.value("volume_groups", s.schema.volume_groups);
      const auto demo = t.value("demographics", std::string("full"));
      if (demo == "full") s.schema.demographics = Demographics::full;
      else if (demo == "minimal") s.schema.demographics = Demographics::minimal;
      else if (demo == "none") s.schema.demographics = Demographics::none;
      else throw DataError("cohort spec: demographics must be full, minimal or none");
    }
    for (const auto& p : j.value("planted_linear", nlohmann::json::array()))
      s.planted_linear.push_back({p.at("feature").get<std::string>(),
                                  p.at("class").get<std::size_t>(),
                                  p.at("coefficient").get<double>()});
    for (const auto& p : j.value("planted_pairs", nlohmann::json::array()))
      s.planted_pairs.push_back({p.at("a").get<std::string>(), p.at("b").get<std::string>(),
                                 p.at("class").get<std::size_t>(),
                                 p.at("coefficient").get<double>()});
    s.csf_missing_rate = j.value("csf_missing_rate", s.csf_missing_rate);
    s.noise_scale = j.value("noise_scale", s.noise_scale);
    s.drift_scale = j.value("drift_scale", s.drift_scale);
    s.dirichlet_alpha = j.value("dirichlet_alpha", s.dirichlet_alpha);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("cohort spec: ") + e.what());
  }
  s.validate();
  return s;
}

struct GroundTruth {
  std::vector<PlantedLinear> planted_linear;
  std::vector<PlantedPair> planted_pairs;
  std::vector<double> class_offsets;
  std::vector<double> class_priors;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    CohortSpec tmp;
    tmp.planted_linear = planted_linear;
    tmp.planted_pairs = planted_pairs;
    const auto spec = cohort_spec_to_json(tmp);
    return {{"planted_linear", spec.at("planted_linear")},
            {"planted_pairs", spec.at("planted_pairs")},
            {"class_offsets", class_offsets},
            {"class_priors", class_priors},
            {"seed", seed}};
  }
};

struct Cohort {
  FeatureSchema schema;
  std::optional<FeatureSchema> meta_schema;
  std::vector<Sample> samples;
  GroundTruth truth;
};

namespace detail {

/// Generator-side distribution of a continuous column (original units).
struct ContinuousLaw {
  double mean = 0.0, sd = 1.0, lo = -INFINITY, hi = INFINITY;
  bool drifts = true;
  double per_visit = 0.0;  // deterministic change per visit (age)
};

struct Blueprint {
  std::vector<FeatureSpec> declarations;
  std::vector<ContinuousLaw> laws;  // per column, unused for categoricals
  std::vector<FeatureSpec> groups;
  std::size_t groups_after = 0;  // declaration index the group lines follow
};

inline Blueprint blueprint(const SchemaTemplate& t) {
  Blueprint b;
  auto cont = [&](std::string name, std::vector<std::string> tags, ContinuousLaw law = {},
                  MissingPolicy policy = MissingPolicy::reject) {
    b.declarations.push_back({std::move(name), FeatureKind::continuous, {}, {}, policy,
                              std::move(tags)});
    b.laws.push_back(law);
  };
  auto cat = [&](std::string name, std::vector<std::string> categories,
                 std::vector<std::string> tags) {
    b.declarations.push_back({std::move(name), FeatureKind::categorical, std::move(categories),
                              {}, MissingPolicy::reject, std::move(tags)});
    b.laws.push_back({});
  };
  auto num = [](const char* prefix, std::size_t k) {
    std::string s = std::to_string(k);
    return std::string(prefix) + (s.size() < 2 ? "0" + s : s);
  };

  if (t.demographics != Demographics::none) {
    cont("age", {"demographic", "age"}, {73.8, 7.0, 54.4, 91.4, false, 0.5});
    cat("gender", {"female", "male"}, {"demographic", "sex"});
  }
  if (t.demographics == Demographics::full) {
    cont("education", {"demographic"}, {16.0, 2.8, 4.0, 20.0, false, 0.0});
    cat("ethnicity", {"hispanic", "not_hispanic"}, {"demographic"});
    cat("race", {"white", "black", "asian", "other"}, {"demographic"});
    cat("marital_status", {"married", "widowed", "divorced", "never_married"}, {"demographic"});
    cat("handedness", {"right", "left"}, {"demographic"});
    cont("intracranial_volume", {"demographic"});
    cont("bmi", {"demographic"});
    cont("systolic_bp", {"demographic"});
    cont("diastolic_bp", {"demographic"});
  }
  const std::size_t group_size =
      t.volume_groups ? (t.volume + t.volume_groups - 1) / t.volume_groups : 0;
  for (std::size_t k = 0; k < t.volume; ++k) {
    std::vector<std::string> tags = {"volume"};
    if (group_size) tags.push_back("region_" + std::to_string(k / group_size));
    cont(num("volume_", k), tags);
  }
  if (t.volume_groups) {
    b.groups_after = b.declarations.size();
    for (std::size_t g = 0; g * group_size < t.volume; ++g) {
      FeatureSpec grp{"region_" + std::to_string(g), FeatureKind::group, {}, {},
                      MissingPolicy::reject, {"volume", "meta"}};
      for (std::size_t k = g * group_size; k < std::min(t.volume, (g + 1) * group_size); ++k)
        grp.members.push_back(num("volume_", k));
      b.groups.push_back(std::move(grp));
    }
  }
  for (std::size_t k = 0; k < t.thickness; ++k) cont(num("thickness_", k), {"thickness"});
  static const char* csf_names[] = {"abeta", "tau", "ptau"};
  for (std::size_t k = 0; k < t.csf; ++k)
    cont(csf_names[k], {"csf"}, {}, MissingPolicy::zero_impute);
  if (t.genetic > 0) cat("apoe", {"e2e2", "e2e3", "e2e4", "e3e3", "e3e4", "e4e4"}, {"genetic"});
  for (std::size_t k = 1; k < t.genetic; ++k) cat(num("snp_", k), {"0", "1", "2"}, {"genetic"});
  for (std::size_t k = 0; k < t.generic; ++k) cont(num("x_", k), {"generic"});
  return b;
}

inline std::size_t sample_categorical(const std::vector<double>& probs, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return probs.size() - 1;
}

}  // namespace detail

inline Cohort generate(const CohortSpec& spec) {
  spec.validate();
  const auto bp = detail::blueprint(spec.schema);
  if (bp.declarations.empty()) throw DataError("cohort spec: template declares no features");

  Cohort cohort{FeatureSchema(bp.declarations, spec.class_labels), std::nullopt, {}, {}};
  if (!bp.groups.empty()) {
    auto decls = bp.declarations;
    decls.insert(decls.begin() + static_cast<std::ptrdiff_t>(bp.groups_after), bp.groups.begin(),
                 bp.groups.end());
    cohort.meta_schema = FeatureSchema(std::move(decls), spec.class_labels);
  }
  const auto& schema = cohort.schema;
  const auto& columns = schema.columns();
  const std::size_t ncol = columns.size();
  const std::size_t classes = spec.class_labels.size();

  auto continuous_column = [&](const std::string& name) {
    auto idx = schema.column_index(name);
    if (!idx || columns[*idx].kind != FeatureKind::continuous)
      throw DataError("cohort spec: planted effect references '" + name +
                      "', which is not a continuous feature of the template");
    return *idx;
  };
  struct Linear { std::size_t col, cls; double coef; };
  struct Pair { std::size_t a, b, cls; double coef; };
  std::vector<Linear> linear;
  std::vector<Pair> pairs;
  for (const auto& p : spec.planted_linear)
    linear.push_back({continuous_column(p.feature), p.class_index, p.coefficient});
  for (const auto& p : spec.planted_pairs)
    pairs.push_back({continuous_column(p.feature_a), continuous_column(p.feature_b), p.class_index,
                     p.coefficient});

  // Cohort-level category probabilities from a symmetric Dirichlet.
  Rng cohort_rng(derive_seed(spec.seed, 1));
  std::vector<std::vector<double>> cat_probs(ncol);
  for (std::size_t k = 0; k < ncol; ++k) {
    if (columns[k].kind != FeatureKind::categorical) continue;
    std::gamma_distribution<double> gamma(spec.dirichlet_alpha, 1.0);
    double sum = 0.0;
    for (std::size_t c = 0; c < columns[k].cardinality(); ++c) {
      cat_probs[k].push_back(gamma(cohort_rng));
      sum += cat_probs[k].back();
    }
    for (auto& p : cat_probs[k]) p /= sum;
  }

  // Baseline values (z-scale for continuous) and latent scores per patient.
  const std::size_t np = spec.n_patients;
  std::vector<std::vector<double>> base_z(np, std::vector<double>(ncol, 0.0));
  std::vector<std::vector<double>> drift(np, std::vector<double>(ncol, 0.0));
  std::vector<Vector> latent(np, Vector::Zero(static_cast<Eigen::Index>(classes)));
  std::vector<std::size_t> visits(np, 1);
  for (std::size_t p = 0; p < np; ++p) {
    Rng rng(derive_seed(spec.seed, 100 + p));
    std::normal_distribution<double> normal;
    for (std::size_t k = 0; k < ncol; ++k) {
      if (columns[k].kind == FeatureKind::categorical) {
        base_z[p][k] = static_cast<double>(detail::sample_categorical(cat_probs[k], uniform01(rng)));
      } else {
        const auto& law = bp.laws[k];
        double z = normal(rng);
        const double lo = (law.lo - law.mean) / law.sd, hi = (law.hi - law.mean) / law.sd;
        base_z[p][k] = std::clamp(z, lo, hi);
        drift[p][k] = normal(rng);
      }
    }
    for (const auto& l : linear)
      latent[p](static_cast<Eigen::Index>(l.cls)) += l.coef * base_z[p][l.col];
    for (const auto& q : pairs)
      latent[p](static_cast<Eigen::Index>(q.cls)) += q.coef * base_z[p][q.a] * base_z[p][q.b];
    for (std::size_t c = 0; c < classes; ++c)
      latent[p](static_cast<Eigen::Index>(c)) += spec.noise_scale * normal(rng);
    std::poisson_distribution<int> extra(std::max(spec.mean_visits - 1.0, 1e-12));
    visits[p] = std::min<std::size_t>(spec.max_visits, 1 + static_cast<std::size_t>(extra(rng)));
  }

  // Per-class offsets so the mean class probability matches the priors.
  Vector offsets(static_cast<Eigen::Index>(classes));
  for (std::size_t c = 0; c < classes; ++c)
    offsets(static_cast<Eigen::Index>(c)) = std::log(spec.class_priors[c]);
  for (int iter = 0; iter < 200; ++iter) {
    Vector mean_p = Vector::Zero(offsets.size());
    for (std::size_t p = 0; p < np; ++p) mean_p += softmax(latent[p] + offsets);
    mean_p /= static_cast<double>(np);
    double worst = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      worst = std::max(worst, std::abs(mean_p(ci) - spec.class_priors[c]));
      offsets(ci) += std::log(spec.class_priors[c] / mean_p(ci));
    }
    if (worst < 1e-10) break;
  }

  // Labels by inverse-CDF sampling from softmax(score); the uniforms are
  // stratified over patients (each marginally uniform) to keep realized class
  // counts close to their expectation.
  Rng label_rng(derive_seed(spec.seed, 2));
  std::vector<std::size_t> strata(np);
  std::iota(strata.begin(), strata.end(), std::size_t{0});
  std::shuffle(strata.begin(), strata.end(), label_rng);
  std::vector<std::size_t> labels(np);
  for (std::size_t p = 0; p < np; ++p) {
    const double u = (static_cast<double>(strata[p]) + uniform01(label_rng)) /
                     static_cast<double>(np);
    const Vector prob = softmax(latent[p] + offsets);
    labels[p] = detail::sample_categorical(std::vector<double>(prob.data(), prob.data() + prob.size()), u);
  }

  // Visits.
  const int id_width = static_cast<int>(std::to_string(np).size());
  auto padded = [](std::size_t v, int width) {
    std::string s = std::to_string(v);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
  };
  for (std::size_t p = 0; p < np; ++p) {
    Rng rng(derive_seed(spec.seed, 1'000'000 + p));
    std::normal_distribution<double> normal;
    const std::string pid = "P" + padded(p + 1, id_width);
    for (std::size_t v = 0; v < visits[p]; ++v) {
      Sample s;
      s.patient_id = pid;
      s.visit_id = pid + "_V" + padded(v, 2);
      s.is_baseline = v == 0;
      s.label = labels[p];
      s.values.assign(ncol, std::nullopt);
      const bool csf_missing = uniform01(rng) < spec.csf_missing_rate;
      for (std::size_t k = 0; k < ncol; ++k) {
        if (columns[k].kind == FeatureKind::categorical) {
          s.values[k] = base_z[p][k];
          continue;
        }
        const auto& law = bp.laws[k];
        double z = base_z[p][k];
        if (law.drifts && v > 0)
          z += spec.drift_scale * (static_cast<double>(v) * drift[p][k] + normal(rng));
        double value = law.mean + law.sd * z + law.per_visit * static_cast<double>(v);
        if (columns[k].has_tag("csf") && csf_missing) continue;
        s.values[k] = value;
      }
      cohort.samples.push_back(std::move(s));
    }
  }

  cohort.truth.planted_linear = spec.planted_linear;
  cohort.truth.planted_pairs = spec.planted_pairs;
  cohort.truth.class_offsets.assign(offsets.data(), offsets.data() + offsets.size());
  cohort.truth.class_priors = spec.class_priors;
  cohort.truth.seed = spec.seed;
  return cohort;
}

struct ColumnSummary {
  std::string name;
  double mean = 0.0;
  double stddev = 0.0;
  double missing_rate = 0.0;
};

struct CohortSummary {
  std::size_t samples = 0;
  std::size_t patients = 0;
  std::vector<std::size_t> class_counts;
  std::vector<ColumnSummary> columns;

  std::string to_csv(const FeatureSchema& schema) const {
    std::string out = "kind,name,count_or_mean,stddev,missing_rate\n";
    for (std::size_t c = 0; c < class_counts.size(); ++c)
      out += "class," + schema.class_labels()[c] + "," + std::to_string(class_counts[c]) + ",,\n";
    for (const auto& col : columns)
      out += "column," + col.name + "," + format_double(col.mean) + "," +
             format_double(col.stddev) + "," + format_double(col.missing_rate) + "\n";
    return out;
  }
};

/// Class counts and per-column statistics (population std, over present
/// values; categorical columns summarize the category index).
inline CohortSummary describe(const std::vector<Sample>& samples, const FeatureSchema& schema) {
  if (samples.empty()) throw DataError("describe: empty sample list");
  CohortSummary out;
  out.samples = samples.size();
  out.class_counts.assign(schema.num_classes(), 0);
  std::set<std::string> patients;
  for (const auto& s : samples) {
    ++out.class_counts.at(s.label);
    patients.insert(s.patient_id);
  }
  out.patients = patients.size();
  for (std::size_t k = 0; k < schema.num_columns(); ++k) {
    ColumnSummary col{schema.columns()[k].name};
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples)
      if (s.values[k]) {
        sum += *s.values[k];
        ++n;
      }
    if (n) {
      col.mean = sum / static_cast<double>(n);
      for (const auto& s : samples)
        if (s.values[k]) sq += (*s.values[k] - col.mean) * (*s.values[k] - col.mean);
      col.stddev = std::sqrt(sq / static_cast<double>(n));
    }
    col.missing_rate = 1.0 - static_cast<double>(n) / static_cast<double>(samples.size());
    out.columns.push_back(std::move(col));
  }
  return out;
}

}  // namespace deepfm
