#pragma once

// Interpretability reports read straight off the FM head.
//
// Linear importance: per class, the linear weight of every encoded input
// column, averaged over fold models. share = mean|w| / sum of mean|w|.
//
// Interaction importance: per sample x and class c,
//   share_ij(x) = |p_ij| / (sum_{a<b} |p_ab| + |r|)
// where p_ij is the (i, j) pair's contribution to the class score and r is
// everything else in that score (bias, linear term, deep head). Shares are
// averaged over samples; the signed mean of p_ij is reported alongside.

#include "deepfm/harness.hpp"

namespace deepfm {

struct FeatureWeight {
  std::string name;
  std::size_t column = 0;
  double mean_weight = 0.0;
  double share = 0.0;
  std::vector<double> fold_weights;
};

struct ClassImportance {
  std::size_t class_index = 0;
  std::string label;
  std::vector<FeatureWeight> ranked;  // by mean signed weight, descending

  /// Sum of the k largest shares.
  double top_k_share(std::size_t k) const {
    std::vector<double> shares;
    for (const auto& f : ranked) shares.push_back(f.share);
    std::sort(shares.rbegin(), shares.rend());
    k = std::min(k, shares.size());
    return std::accumulate(shares.begin(), shares.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
  }
};

struct ImportanceReport {
  std::size_t folds = 0;
  std::uint64_t schema_hash = 0;
  std::vector<ClassImportance> classes;

  std::string to_csv() const {
    std::string out = "class,name,mean_share,signed_mean,fold\n";
    for (const auto& c : classes)
      for (const auto& f : c.ranked) {
        out += c.label + "," + f.name + "," + format_double(f.share) + "," +
               format_double(f.mean_weight) + ",mean\n";
        for (std::size_t k = 0; k < f.fold_weights.size(); ++k)
          out += c.label + "," + f.name + ",," + format_double(f.fold_weights[k]) + "," +
                 std::to_string(k) + "\n";
      }
    return out;
  }
};

inline const FMHead& require_fm(const DeepFMModel& model) {
  if (!model.uses_fm())
    throw SchemaError("model variant " + std::string(to_string(model.variant())) +
                      " has no FM head to interpret");
  return model.parameters().fm;
}

inline ImportanceReport linear_importance(const std::vector<const DeepFMModel*>& models) {
  if (models.empty()) throw DataError("linear_importance: no models");
  const auto& schema = models.front()->schema();
  for (const auto* m : models) {
    if (m->schema().hash() != schema.hash())
      throw SchemaError("linear_importance: fold models were trained on different schemas");
    require_fm(*m);
  }
  const auto names = schema.input_names();
  const auto folds = static_cast<double>(models.size());
  ImportanceReport report{models.size(), schema.hash(), {}};
  for (std::size_t c = 0; c < schema.num_classes(); ++c) {
    ClassImportance ci{c, schema.class_labels()[c], {}};
    std::vector<double> mean_abs(names.size(), 0.0);
    for (std::size_t d = 0; d < names.size(); ++d) {
      FeatureWeight fw{names[d], d, 0.0, 0.0, {}};
      for (const auto* m : models) {
        const double w = m->parameters().fm.linear(static_cast<Eigen::Index>(c),
                                                   static_cast<Eigen::Index>(d));
        fw.fold_weights.push_back(w);
        fw.mean_weight += w / folds;
        mean_abs[d] += std::abs(w) / folds;
      }
      ci.ranked.push_back(std::move(fw));
    }
    const double total = std::accumulate(mean_abs.begin(), mean_abs.end(), 0.0);
    for (std::size_t d = 0; d < names.size(); ++d)
      ci.ranked[d].share =
          total > 0.0 ? mean_abs[d] / total : 1.0 / static_cast<double>(names.size());
    std::stable_sort(ci.ranked.begin(), ci.ranked.end(),
                     [](const auto& a, const auto& b) { return a.mean_weight > b.mean_weight; });
    report.classes.push_back(std::move(ci));
  }
  return report;
}

struct SampleShares {
  Vector pair_shares;  // (0,1), (0,2), ..., (n-2,n-1)
  double rest_share = 0.0;
  Vector pair_contributions;
  double rest = 0.0;
};

inline SampleShares interaction_shares(const DeepFMModel& model, const Vector& x, std::size_t c) {
  const auto& fm = require_fm(model);
  if (c >= model.num_classes()) throw ShapeError("interaction_shares: class out of range");
  const auto parts = model.decompose(x);
  SampleShares s;
  s.pair_contributions = fm_all_pair_contributions(fm, parts.pair_embeddings, c);
  const auto ci = static_cast<Eigen::Index>(c);
  s.rest = parts.linear(ci) + parts.deep(ci);
  const double denom = s.pair_contributions.cwiseAbs().sum() + std::abs(s.rest);
  if (denom > 0.0) {
    s.pair_shares = s.pair_contributions.cwiseAbs() / denom;
    s.rest_share = std::abs(s.rest) / denom;
  } else {
    s.pair_shares = Vector::Zero(s.pair_contributions.size());
    s.rest_share = 1.0;
  }
  return s;
}

struct PairImportance {
  std::size_t i = 0, j = 0;
  std::string name;
  double mean_share = 0.0;
  double signed_mean = 0.0;
};

struct ClassInteractions {
  std::size_t class_index = 0;
  std::string label;
  std::size_t samples = 0;
  double rest_share = 0.0;
  std::vector<PairImportance> ranked;  // by mean share, descending

  std::optional<std::size_t> rank_of(std::string_view a, std::string_view b) const {
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const auto& p = ranked[r];
      if (p.name == std::string(a) + " × " + std::string(b) ||
          p.name == std::string(b) + " × " + std::string(a))
        return r;
    }
    return std::nullopt;
  }
};

inline std::string pair_name(const FeatureSchema& schema, std::size_t i, std::size_t j) {
  return schema.features()[i].name + " × " + schema.features()[j].name;
}

inline ClassInteractions interaction_importance(const DeepFMModel& model,
                                                const std::vector<Vector>& samples,
                                                std::size_t c) {
  if (samples.empty()) throw DataError("interaction_importance: empty test set");
  const auto& schema = model.schema();
  const std::size_t n = schema.num_features();
  const auto pairs = static_cast<Eigen::Index>(n * (n - 1) / 2);
  Vector share_sum = Vector::Zero(pairs), signed_sum = Vector::Zero(pairs);
  double rest_sum = 0.0;
  for (const auto& x : samples) {
    const auto s = interaction_shares(model, x, c);
    share_sum += s.pair_shares;
    signed_sum += s.pair_contributions;
    rest_sum += s.rest_share;
  }
  const auto count = static_cast<double>(samples.size());
  ClassInteractions out{c, schema.class_labels().at(c), samples.size(), rest_sum / count, {}};
  out.ranked.reserve(static_cast<std::size_t>(pairs));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j, ++k)
      out.ranked.push_back({i, j, pair_name(schema, i, j), share_sum(k) / count,
                            signed_sum(k) / count});
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const auto& a, const auto& b) { return a.mean_share > b.mean_share; });
  return out;
}

/// Per-fold and fold-averaged interaction rankings for every class.
struct InteractionReport {
  std::uint64_t schema_hash = 0;
  std::vector<std::vector<ClassInteractions>> per_fold;  // [fold][class]
  std::vector<ClassInteractions> aggregated;             // mean over folds

  std::string to_csv() const {
    std::string out = "class,name,mean_share,signed_mean,fold\n";
    auto emit = [&](const ClassInteractions& ci, const std::string& fold) {
      for (const auto& p : ci.ranked)
        out += ci.label + "," + p.name + "," + format_double(p.mean_share) + "," +
               format_double(p.signed_mean) + "," + fold + "\n";
      out += ci.label + ",<rest>," + format_double(ci.rest_share) + ",," + fold + "\n";
    };
    for (const auto& ci : aggregated) emit(ci, "mean");
    for (std::size_t f = 0; f < per_fold.size(); ++f)
      for (const auto& ci : per_fold[f]) emit(ci, std::to_string(f));
    return out;
  }
};

/// One (model, test inputs) pair per fold; all models share one schema.
inline InteractionReport interaction_report(
    const std::vector<std::pair<const DeepFMModel*, const std::vector<Vector>*>>& folds) {
  if (folds.empty()) throw DataError("interaction_report: no folds");
  const auto& schema = folds.front().first->schema();
  InteractionReport report{schema.hash(), {}, {}};
  for (const auto& [model, inputs] : folds) {
    if (model->schema().hash() != schema.hash())
      throw SchemaError("interaction_report: fold models were trained on different schemas");
    std::vector<ClassInteractions> classes;
    for (std::size_t c = 0; c < schema.num_classes(); ++c)
      classes.push_back(interaction_importance(*model, *inputs, c));
    report.per_fold.push_back(std::move(classes));
  }
  const auto nf = static_cast<double>(folds.size());
  for (std::size_t c = 0; c < schema.num_classes(); ++c) {
    std::map<std::pair<std::size_t, std::size_t>, PairImportance> acc;
    ClassInteractions agg{c, schema.class_labels()[c], 0, 0.0, {}};
    for (const auto& fold : report.per_fold) {
      const auto& ci = fold[c];
      agg.samples += ci.samples;
      agg.rest_share += ci.rest_share / nf;
      for (const auto& p : ci.ranked) {
        auto& a = acc.try_emplace({p.i, p.j}, PairImportance{p.i, p.j, p.name}).first->second;
        a.mean_share += p.mean_share / nf;
        a.signed_mean += p.signed_mean / nf;
      }
    }
    for (auto& [key, p] : acc) agg.ranked.push_back(std::move(p));
    std::stable_sort(agg.ranked.begin(), agg.ranked.end(),
                     [](const auto& a, const auto& b) { return a.mean_share > b.mean_share; });
    report.aggregated.push_back(std::move(agg));
  }
  return report;
}

/// Interaction report for a model whose schema uses group (meta) features;
/// pairs are named after the groups.
inline InteractionReport meta_interaction_importance(const DeepFMModel& model,
                                                     const std::vector<Vector>& samples) {
  const auto& features = model.schema().features();
  if (std::none_of(features.begin(), features.end(),
                   [](const auto& f) { return f.kind == FeatureKind::group; }))
    throw SchemaError("meta_interaction_importance: schema has no group features");
  return interaction_report({{&model, &samples}});
}

}  // namespace deepfm
