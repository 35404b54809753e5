#pragma once

// Loss, regularization and the mini-batch training loop shared by every
// model type. Models plug in through the TrainableModel concept.

#include "deepfm/dataset.hpp"
#include "deepfm/linear.hpp"
#include "deepfm/metrics.hpp"
#include "deepfm/model.hpp"

#include <concepts>
#include <numeric>
#include <set>

namespace deepfm {

template <class M>
concept TrainableModel =
    std::copy_constructible<M> &&
    requires(M& m, const M& cm, const Vector& x, typename M::Parameters& g, Rng& rng) {
      { cm.scores(x) } -> std::convertible_to<Vector>;
      { cm.predict(x) } -> std::convertible_to<std::size_t>;
      { cm.num_classes() } -> std::convertible_to<std::size_t>;
      { cm.zero_gradient() } -> std::same_as<typename M::Parameters>;
      { cm.accumulate_gradient(x, std::size_t{}, 1.0, g, rng, Mode::train) }
          -> std::convertible_to<double>;
      { cm.views_of(g) } -> std::same_as<std::vector<ParamView>>;
      { m.parameter_views() } -> std::same_as<std::vector<ParamView>>;
      { cm.parameter_diagnostics() } -> std::convertible_to<std::string>;
    };

struct Regularization {
  double l1 = 0.0;
  double l2 = 0.0;
};

inline Regularization regularization_of(const TrainConfig& config) {
  return {config.l1_weight, config.l2_weight};
}

/// l1 * sum|theta| + l2 * sum theta^2 over regularized (non-bias) tensors.
template <TrainableModel M>
double regularization_penalty(const M& model, Regularization reg) {
  if (reg.l1 == 0.0 && reg.l2 == 0.0) return 0.0;
  double penalty = 0.0;
  for (const auto& v : const_cast<M&>(model).parameter_views()) {
    if (!v.regularized) continue;
    for (double t : v.values) penalty += reg.l1 * std::abs(t) + reg.l2 * t * t;
  }
  return penalty;
}

template <TrainableModel M>
void add_regularization_gradient(M& model, typename M::Parameters& grad, Regularization reg) {
  if (reg.l1 == 0.0 && reg.l2 == 0.0) return;
  auto params = model.parameter_views();
  auto grads = model.views_of(grad);
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].regularized) continue;
    auto p = params[k].values;
    auto g = grads[k].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double sign = p[i] > 0.0 ? 1.0 : (p[i] < 0.0 ? -1.0 : 0.0);
      g[i] += reg.l1 * sign + 2.0 * reg.l2 * p[i];
    }
  }
}

/// Mean cross-entropy over `batch` (no dropout) plus the regularization penalty.
template <TrainableModel M>
double loss(const M& model, const EncodedSet& batch, Regularization reg = {}) {
  if (batch.empty()) throw DataError("loss: empty batch");
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k)
    total -= log_softmax_at(model.scores(batch.inputs[k]),
                            static_cast<Eigen::Index>(batch.labels[k]));
  return total / static_cast<double>(batch.size()) + regularization_penalty(model, reg);
}

/// Same value as loss(); fills `grad` (overwritten) with its gradient.
template <TrainableModel M>
double loss_and_gradient(const M& model, const EncodedSet& batch, Regularization reg,
                         typename M::Parameters& grad, Mode mode = Mode::eval,
                         std::uint64_t dropout_seed = 0) {
  if (batch.empty()) throw DataError("loss_and_gradient: empty batch");
  grad = model.zero_gradient();
  Rng rng(dropout_seed);
  const double w = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k)
    total += model.accumulate_gradient(batch.inputs[k], batch.labels[k], w, grad, rng, mode);
  add_regularization_gradient(const_cast<M&>(model), grad, reg);
  return total * w + regularization_penalty(model, reg);
}

template <TrainableModel M>
std::vector<std::size_t> predict_all(const M& model, const EncodedSet& data) {
  std::vector<std::size_t> out;
  out.reserve(data.size());
  for (const auto& x : data.inputs) out.push_back(model.predict(x));
  return out;
}

template <TrainableModel M>
double evaluate_balanced_accuracy(const M& model, const EncodedSet& data) {
  return balanced_accuracy(predict_all(model, data), data.labels, model.num_classes());
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_balanced_accuracy = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0: the initial parameters were never beaten
  double best_val_balanced_accuracy = 0.0;

  std::string to_csv() const {
    std::string out = "epoch,train_loss,val_balanced_accuracy\n";
    for (const auto& r : epochs)
      out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
             format_double(r.val_balanced_accuracy) + "\n";
    return out;
  }
};

template <class M>
struct TrainResult {
  M model;
  TrainingLog log;
};

/// Adam (beta 0.9/0.999, eps 1e-8) or plain gradient descent.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {}

  void step(std::vector<ParamView>& params, const std::vector<ParamView>& grads) {
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.values.size(), 0.0);
        second_.emplace_back(p.values.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k].values;
      auto g = grads[k].values;
      if (kind_ == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
        continue;
      }
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEpsilon);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  OptimizerKind kind_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

inline void check_disjoint_patients(const EncodedSet& a, const EncodedSet& b,
                                    std::string_view what) {
  std::set<std::string> ids(a.patient_ids.begin(), a.patient_ids.end());
  for (const auto& id : b.patient_ids)
    if (ids.count(id))
      throw DataError(std::string(what) + ": patient '" + id + "' appears in both sets");
}

/// Mini-batch training with early stopping on validation balanced accuracy.
/// Returns the best-validation snapshot (first epoch reaching the maximum).
template <TrainableModel M>
TrainResult<M> train(M model, const EncodedSet& train_set, const EncodedSet& validation,
                     const TrainConfig& config) {
  if (train_set.empty()) throw DataError("train: empty training set");
  if (validation.empty()) throw DataError("train: empty validation set");
  if (config.batch_size == 0 || config.max_epochs == 0 || config.patience == 0)
    throw DataError("train: batch_size, max_epochs and patience must be positive");
  check_disjoint_patients(train_set, validation, "train/validation");

  const Regularization reg = regularization_of(config);
  Optimizer optimizer(config.optimizer, config.learning_rate);
  Rng shuffle_rng(derive_seed(config.seed, 21));
  Rng dropout_rng(derive_seed(config.seed, 22));

  TrainResult<M> result{model, {}};
  result.log.best_val_balanced_accuracy = evaluate_balanced_accuracy(model, validation);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto grad = model.zero_gradient();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double w = 1.0 / static_cast<double>(stop - start);
      grad = model.zero_gradient();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k)
        batch_loss += model.accumulate_gradient(train_set.inputs[order[k]],
                                                train_set.labels[order[k]], w, grad,
                                                dropout_rng, Mode::train);
      batch_loss = batch_loss * w + regularization_penalty(model, reg);
      if (!std::isfinite(batch_loss))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                             ", batch starting at " + std::to_string(start) +
                             ": non-finite loss; " + model.parameter_diagnostics());
      add_regularization_gradient(model, grad, reg);
      auto params = model.parameter_views();
      optimizer.step(params, model.views_of(grad));
      epoch_loss += batch_loss * static_cast<double>(stop - start);
    }
    for (const auto& v : model.parameter_views())
      if (!all_finite(v.values))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                             ": non-finite parameters; " + model.parameter_diagnostics());

    const double val = evaluate_balanced_accuracy(model, validation);
    result.log.epochs.push_back({epoch, epoch_loss / static_cast<double>(order.size()), val});
    if (val > result.log.best_val_balanced_accuracy) {
      result.log.best_val_balanced_accuracy = val;
      result.log.best_epoch = epoch;
      result.model = model;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  return result;
}

inline TrainResult<LinearInteractionModel> fit_linear_interactions(
    const EncodedSet& train_set, const EncodedSet& validation, const TrainConfig& config,
    std::size_t classes, bool pairwise = true) {
  if (train_set.empty()) throw DataError("fit_linear_interactions: empty training set");
  LinearInteractionModel model(static_cast<std::size_t>(train_set.inputs.front().size()),
                               classes, pairwise);
  return train(std::move(model), train_set, validation, config);
}

}  // namespace deepfm
