#pragma once

// DeepFM: shared embeddings feeding an FM head and a deep head, fused by a
// softmax over the summed per-class scores. The fm_only and dnn_only
// variants drop one head and are otherwise the same code path.

#include "deepfm/dataset.hpp"
#include "deepfm/embedding.hpp"
#include "deepfm/fm_head.hpp"
#include "deepfm/mlp_head.hpp"

#include <memory>
#include <optional>

namespace deepfm {

enum class Variant { deepfm, fm_only, dnn_only };

/// How the pairwise term consumes embeddings. `embedding_dot` uses
/// sum_{i<j} <e_i, e_j>. `literal` additionally multiplies each pair by
/// x_i x_j (x_i taken as the sum of feature i's encoded slice), i.e. the
/// formula read with e_i already containing x_i; kept for comparison only.
enum class InteractionForm { embedding_dot, literal };

enum class OptimizerKind { adam, sgd };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::deepfm: return "deepfm";
    case Variant::fm_only: return "fm_only";
    case Variant::dnn_only: return "dnn_only";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "deepfm") return Variant::deepfm;
  if (s == "fm_only") return Variant::fm_only;
  if (s == "dnn_only") return Variant::dnn_only;
  return std::nullopt;
}

inline std::string_view to_string(InteractionForm f) {
  return f == InteractionForm::literal ? "literal" : "embedding_dot";
}

struct TrainConfig {
  double learning_rate = 1e-3;
  double l1_weight = 0.0;
  double l2_weight = 0.0;
  double dropout_rate = 0.1;
  std::size_t embedding_dim = 8;
  std::vector<std::size_t> hidden = {64, 64};  // h1, h2 (, h3 for dnn_only)
  std::size_t batch_size = 128;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  InteractionForm interaction = InteractionForm::embedding_dot;
};

struct DeepFMParameters {
  EmbeddingBank embeddings;
  FMHead fm;
  MLPHead mlp;
};

class DeepFMModel {
 public:
  using Parameters = DeepFMParameters;

  DeepFMModel(std::shared_ptr<const FeatureSchema> schema, Variant variant,
              const TrainConfig& config)
      : schema_(std::move(schema)), variant_(variant), form_(config.interaction) {
    const auto& s = *schema_;
    const std::size_t m = config.embedding_dim;
    const std::size_t n = s.num_features();
    const std::size_t c = s.num_classes();
    params_.embeddings = init_embeddings(s, m, derive_seed(config.seed, 11));
    params_.fm = init_fm_head(c, s.input_width(), m);

    std::vector<std::size_t> layers;
    for (std::size_t h : config.hidden)
      if (h > 0) layers.push_back(h);
    if (variant_ == Variant::deepfm && layers.size() != 2)
      throw ShapeError("deepfm uses exactly two hidden layers, got " +
                       std::to_string(layers.size()));
    if (variant_ == Variant::dnn_only && (layers.empty() || layers.size() > 3))
      throw ShapeError("dnn_only takes one to three hidden layers");
    if (variant_ == Variant::fm_only) layers.clear();
    params_.mlp = init_mlp(n * m, layers, c,
                           variant_ == Variant::fm_only ? 0.0 : config.dropout_rate,
                           derive_seed(config.seed, 12));
    if (variant_ == Variant::fm_only) params_.mlp = params_.mlp.zeros_like();
    if (variant_ == Variant::dnn_only) params_.fm = params_.fm.zeros_like();
  }

  DeepFMModel(std::shared_ptr<const FeatureSchema> schema, Variant variant, InteractionForm form,
              Parameters params)
      : schema_(std::move(schema)), variant_(variant), form_(form), params_(std::move(params)) {
    validate();
  }

  const FeatureSchema& schema() const { return *schema_; }
  std::shared_ptr<const FeatureSchema> schema_ptr() const { return schema_; }
  Variant variant() const { return variant_; }
  InteractionForm interaction_form() const { return form_; }
  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }
  std::size_t num_classes() const { return schema_->num_classes(); }
  bool uses_fm() const { return variant_ != Variant::dnn_only; }
  bool uses_mlp() const { return variant_ != Variant::fm_only; }

  void validate() const {
    check_bank(params_.embeddings, *schema_);
    const auto c = static_cast<Eigen::Index>(num_classes());
    const auto m = static_cast<Eigen::Index>(params_.embeddings.dim);
    if (params_.fm.bias.size() != c || params_.fm.linear.rows() != c ||
        params_.fm.linear.cols() != static_cast<Eigen::Index>(schema_->input_width()) ||
        params_.fm.metric.rows() != c || params_.fm.metric.cols() != m)
      throw ShapeError("fm head shape inconsistent with schema/embedding length");
    if (params_.mlp.input_width() != schema_->num_features() * params_.embeddings.dim ||
        params_.mlp.output.bias.size() != c)
      throw ShapeError("mlp head shape inconsistent with schema/embedding length");
  }

  Matrix embed(const Vector& x) const { return deepfm::embed(params_.embeddings, x, *schema_); }

  /// Embeddings as seen by the pairwise term (identity unless the literal form is on).
  Matrix interaction_embeddings(const Vector& x, const Matrix& e) const {
    if (form_ == InteractionForm::embedding_dot) return e;
    return e * feature_scales(x).asDiagonal();
  }

  /// Per-class score pieces: bias + linear, pairwise interaction, deep head.
  struct ScoreParts {
    Vector linear;
    Vector interaction;
    Vector deep;
    Matrix pair_embeddings;
    Vector total() const { return linear + interaction + deep; }
  };

  ScoreParts decompose(const Vector& x) const {
    const Matrix e = embed(x);
    const auto c = static_cast<Eigen::Index>(num_classes());
    ScoreParts parts{Vector::Zero(c), Vector::Zero(c), Vector::Zero(c),
                     interaction_embeddings(x, e)};
    if (uses_fm()) {
      parts.linear = params_.fm.bias + params_.fm.linear * x;
      parts.interaction = fm_interaction(params_.fm, parts.pair_embeddings);
    }
    if (uses_mlp()) {
      Rng unused(0);
      parts.deep = mlp_forward(params_.mlp, e, Mode::eval, unused).scores;
    }
    return parts;
  }

  Vector scores(const Vector& x) const {
    const Matrix e = embed(x);
    Vector out = Vector::Zero(static_cast<Eigen::Index>(num_classes()));
    if (uses_fm()) out += fm_forward(params_.fm, x, interaction_embeddings(x, e));
    if (uses_mlp()) {
      Rng unused(0);
      out += mlp_forward(params_.mlp, e, Mode::eval, unused).scores;
    }
    return out;
  }

  Vector predict_proba(const Vector& x) const {
    const Vector s = scores(x);
    if (!s.allFinite())
      throw NumericalError("predict_proba: non-finite class score; " + parameter_diagnostics());
    return softmax(s);
  }

  std::size_t predict(const Vector& x) const { return argmax(scores(x)); }

  /// Adds weight * d(-log p_label)/d(theta) into `grad`; returns -log p_label.
  double accumulate_gradient(const Vector& x, std::size_t label, double weight, Parameters& grad,
                             Rng& rng, Mode mode = Mode::train) const {
    const Matrix e = embed(x);
    const auto c = static_cast<Eigen::Index>(num_classes());
    Vector s = Vector::Zero(c);
    Matrix pe;
    if (uses_fm()) {
      pe = interaction_embeddings(x, e);
      s += fm_forward(params_.fm, x, pe);
    }
    std::optional<MLPOutput> deep;
    if (uses_mlp()) {
      deep = mlp_forward(params_.mlp, e, mode, rng);
      s += deep->scores;
    }
    const auto y = static_cast<Eigen::Index>(label);
    const double nll = -log_softmax_at(s, y);
    Vector upstream = softmax(s);
    upstream(y) -= 1.0;
    upstream *= weight;

    Matrix de = Matrix::Zero(e.rows(), e.cols());
    if (uses_fm()) {
      de += fm_backward(params_.fm, x, pe, upstream, grad.fm);
      if (form_ == InteractionForm::literal) de = de * feature_scales(x).asDiagonal();
    }
    if (uses_mlp()) de += mlp_backward(params_.mlp, deep->trace, upstream, grad.mlp, e.rows());
    accumulate_embedding_gradient(*schema_, x, de, grad.embeddings);
    return nll;
  }

  Parameters zero_gradient() const {
    return {params_.embeddings.zeros_like(), params_.fm.zeros_like(), params_.mlp.zeros_like()};
  }

  /// Views over the parameters this variant actually uses, in a fixed order.
  std::vector<ParamView> views_of(Parameters& p) const {
    std::vector<ParamView> views;
    p.embeddings.append_views(views);
    if (uses_fm()) p.fm.append_views(views);
    if (uses_mlp()) p.mlp.append_views(views);
    return views;
  }

  std::vector<ParamView> parameter_views() { return views_of(params_); }

  std::string parameter_diagnostics() const {
    auto views = views_of(const_cast<Parameters&>(params_));
    std::string out = "parameter max |value|:";
    for (const auto& v : views) {
      double mx = 0.0;
      bool finite = true;
      for (double d : v.values) {
        finite = finite && std::isfinite(d);
        mx = std::max(mx, std::abs(d));
      }
      out += " " + v.name + "=" + (finite ? format_double(mx) : std::string("non-finite"));
    }
    return out;
  }

 private:
  Vector feature_scales(const Vector& x) const {
    Vector scales(static_cast<Eigen::Index>(schema_->num_features()));
    for (std::size_t i = 0; i < schema_->num_features(); ++i)
      scales(static_cast<Eigen::Index>(i)) =
          x.segment(static_cast<Eigen::Index>(schema_->offset(i)),
                    static_cast<Eigen::Index>(schema_->width(i)))
              .sum();
    return scales;
  }

  std::shared_ptr<const FeatureSchema> schema_;
  Variant variant_;
  InteractionForm form_;
  Parameters params_;
};

}  // namespace deepfm
