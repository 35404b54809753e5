#pragma once

#include "deepfm/deepfm.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace testing_support {

using namespace deepfm;

inline std::shared_ptr<const FeatureSchema> shared(FeatureSchema s) {
  return std::make_shared<const FeatureSchema>(std::move(s));
}

/// n continuous features f00.. and `classes` class labels c0..
inline FeatureSchema continuous_schema(std::size_t n, std::size_t classes = 3) {
  std::string text = "classes";
  for (std::size_t c = 0; c < classes; ++c) text += " c" + std::to_string(c);
  text += "\n";
  for (std::size_t i = 0; i < n; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "f%02zu", i);
    text += std::string("continuous ") + name + "\n";
  }
  return parse_schema(text);
}

/// Continuous, categorical and grouped features together.
inline FeatureSchema mixed_schema() {
  return parse_schema(R"(classes a b c
continuous age tags=age
categorical sex categories=f,m tags=sex
continuous v1
continuous v2
continuous v3
group lobe members=v1,v2
categorical gene cardinality=3
continuous csf missing=zero_impute
)");
}

inline Vector random_vector(Rng& rng, Eigen::Index size, double scale = 1.0) {
  Vector v(size);
  for (Eigen::Index k = 0; k < size; ++k) v(k) = uniform(rng, -scale, scale);
  return v;
}

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = uniform(rng, -scale, scale);
  return m;
}

/// A valid input vector for `schema`: standard-normal-ish continuous slots,
/// one-hot categorical blocks.
inline Vector random_input(const FeatureSchema& schema, Rng& rng) {
  Vector x = Vector::Zero(static_cast<Eigen::Index>(schema.input_width()));
  for (std::size_t i = 0; i < schema.num_features(); ++i) {
    const auto& f = schema.features()[i];
    const auto off = static_cast<Eigen::Index>(schema.offset(i));
    if (f.kind == FeatureKind::categorical) {
      const auto pick = std::uniform_int_distribution<std::size_t>(0, f.cardinality() - 1)(rng);
      x(off + static_cast<Eigen::Index>(pick)) = 1.0;
    } else {
      for (std::size_t k = 0; k < f.width(); ++k)
        x(off + static_cast<Eigen::Index>(k)) = uniform(rng, -1.5, 1.5);
    }
  }
  return x;
}

/// Model with every active parameter group randomized (so no gradient is
/// trivially zero).
inline DeepFMModel random_model(std::shared_ptr<const FeatureSchema> schema, Variant variant,
                                TrainConfig config, std::uint64_t seed) {
  config.seed = seed;
  DeepFMModel model(std::move(schema), variant, config);
  Rng rng(derive_seed(seed, 99));
  auto& p = model.parameters();
  if (model.uses_fm()) {
    p.fm.bias = random_vector(rng, p.fm.bias.size(), 0.3);
    p.fm.linear = random_matrix(rng, p.fm.linear.rows(), p.fm.linear.cols(), 0.5);
    p.fm.metric = random_matrix(rng, p.fm.metric.rows(), p.fm.metric.cols(), 1.0);
  }
  if (model.uses_mlp())
    for (auto& l : p.mlp.hidden) l.bias = random_vector(rng, l.bias.size(), 0.2);
  return model;
}

/// Small cohort spec with a lean schema, for fast protocol tests.
inline CohortSpec small_spec(std::size_t patients, std::uint64_t seed) {
  CohortSpec s;
  s.n_patients = patients;
  s.schema = SchemaTemplate{4, 4, 3, 3, Demographics::minimal, 0, 0};
  s.seed = seed;
  return s;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("deepfm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
