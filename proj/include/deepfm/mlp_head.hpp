#pragma once

// Deep head: ReLU hidden layers over CONCAT(e_1..e_n), inverted dropout on
// every hidden activation in train mode, then a linear projection to C
// logits.

#include "deepfm/common.hpp"

namespace deepfm {

enum class Mode { train, eval };

struct DenseLayer {
  Matrix weight;
  Vector bias;
};

struct MLPHead {
  std::vector<DenseLayer> hidden;
  DenseLayer output;
  double dropout_rate = 0.0;

  std::size_t input_width() const {
    return static_cast<std::size_t>(hidden.empty() ? output.weight.cols()
                                                   : hidden.front().weight.cols());
  }

  MLPHead zeros_like() const {
    MLPHead z;
    z.dropout_rate = dropout_rate;
    for (const auto& l : hidden)
      z.hidden.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                          Vector::Zero(l.bias.size())});
    z.output = {Matrix::Zero(output.weight.rows(), output.weight.cols()),
                Vector::Zero(output.bias.size())};
    return z;
  }

  void append_views(std::vector<ParamView>& views) {
    for (std::size_t k = 0; k < hidden.size(); ++k) {
      const auto tag = "mlp.hidden[" + std::to_string(k) + "]";
      views.push_back({tag + ".weight", as_span(hidden[k].weight), true});
      views.push_back({tag + ".bias", as_span(hidden[k].bias), false});
    }
    views.push_back({"mlp.output.weight", as_span(output.weight), true});
    views.push_back({"mlp.output.bias", as_span(output.bias), false});
  }
};

/// He-uniform weights, zero biases. Zero-sized entries in `hidden_sizes`
/// are skipped (an optional layer switched off).
inline MLPHead init_mlp(std::size_t input_width, const std::vector<std::size_t>& hidden_sizes,
                        std::size_t classes, double dropout_rate, std::uint64_t seed) {
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ShapeError("init_mlp: dropout rate must be in [0, 1)");
  Rng rng(seed);
  auto layer = [&](std::size_t rows, std::size_t cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(cols));
    DenseLayer l{Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)),
                 Vector::Zero(static_cast<Eigen::Index>(rows))};
    for (Eigen::Index k = 0; k < l.weight.size(); ++k)
      l.weight.data()[k] = uniform(rng, -bound, bound);
    return l;
  };
  MLPHead head;
  head.dropout_rate = dropout_rate;
  std::size_t width = input_width;
  for (std::size_t h : hidden_sizes) {
    if (h == 0) continue;
    head.hidden.push_back(layer(h, width));
    width = h;
  }
  head.output = layer(classes, width);
  return head;
}

/// Values cached by the forward pass for backpropagation. masks[k] holds the
/// scaled keep mask (0 or 1/keep) of hidden layer k; empty in eval mode.
struct MLPTrace {
  Vector input;
  std::vector<Vector> pre_activations;
  std::vector<Vector> activations;  // after ReLU and dropout
  std::vector<Vector> masks;
};

struct MLPOutput {
  Vector scores;
  MLPTrace trace;
};

inline MLPOutput mlp_forward(const MLPHead& head, const Matrix& e, Mode mode, Rng& rng) {
  if (static_cast<std::size_t>(e.size()) != head.input_width())
    throw ShapeError("mlp_forward: concatenated embedding width " + std::to_string(e.size()) +
                     ", expected " + std::to_string(head.input_width()));
  MLPOutput out;
  auto& t = out.trace;
  t.input = Eigen::Map<const Vector>(e.data(), e.size());
  const double keep = 1.0 - head.dropout_rate;
  const bool drop = mode == Mode::train && head.dropout_rate > 0.0;
  const Vector* current = &t.input;
  for (const auto& layer : head.hidden) {
    Vector z = layer.weight * *current + layer.bias;
    Vector a = z.cwiseMax(0.0);
    if (drop) {
      Vector mask(a.size());
      for (Eigen::Index k = 0; k < mask.size(); ++k)
        mask(k) = uniform01(rng) < keep ? 1.0 / keep : 0.0;
      a.array() *= mask.array();
      t.masks.push_back(std::move(mask));
    }
    t.pre_activations.push_back(std::move(z));
    t.activations.push_back(std::move(a));
    current = &t.activations.back();
  }
  out.scores = head.output.weight * *current + head.output.bias;
  return out;
}

/// Accumulates parameter gradients into `grad`; returns dL/de as m x n
/// (same shape as the embedded input).
inline Matrix mlp_backward(const MLPHead& head, const MLPTrace& trace, const Vector& upstream,
                           MLPHead& grad, Eigen::Index m) {
  if (upstream.size() != head.output.bias.size()) throw ShapeError("mlp_backward: upstream");
  if (trace.activations.size() != head.hidden.size() ||
      (!trace.masks.empty() && trace.masks.size() != head.hidden.size()))
    throw ShapeError("mlp_backward: trace does not match network depth");
  const Vector& last = head.hidden.empty() ? trace.input : trace.activations.back();
  grad.output.weight.noalias() += upstream * last.transpose();
  grad.output.bias += upstream;
  Vector delta = head.output.weight.transpose() * upstream;
  for (std::size_t k = head.hidden.size(); k-- > 0;) {
    if (!trace.masks.empty()) delta.array() *= trace.masks[k].array();
    // ReLU'(0) := 0
    delta.array() *= (trace.pre_activations[k].array() > 0.0).cast<double>();
    const Vector& in = k == 0 ? trace.input : trace.activations[k - 1];
    grad.hidden[k].weight.noalias() += delta * in.transpose();
    grad.hidden[k].bias += delta;
    delta = head.hidden[k].weight.transpose() * delta;
  }
  return Eigen::Map<const Matrix>(delta.data(), m, delta.size() / m);
}

}  // namespace deepfm
