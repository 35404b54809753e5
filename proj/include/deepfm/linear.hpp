#pragma once

// Multinomial logistic regression baselines. With `pairwise` on, the input
// is expanded to [x, x_a * x_b for all a < b] so every pairwise interaction
// gets an explicit weight; with it off this is plain softmax regression.

#include "deepfm/mlp_head.hpp"

namespace deepfm {

inline std::size_t expanded_width(std::size_t input_width, bool pairwise) {
  return pairwise ? input_width + input_width * (input_width - 1) / 2 : input_width;
}

class LinearInteractionModel {
 public:
  struct Parameters {
    Vector bias;     // C
    Matrix weights;  // C x expanded width

    void append_views(std::vector<ParamView>& views) {
      views.push_back({"linear.bias", as_span(bias), false});
      views.push_back({"linear.weights", as_span(weights), true});
    }
  };

  LinearInteractionModel(std::size_t input_width, std::size_t classes, bool pairwise)
      : input_width_(input_width), pairwise_(pairwise) {
    const auto c = static_cast<Eigen::Index>(classes);
    params_.bias = Vector::Zero(c);
    params_.weights =
        Matrix::Zero(c, static_cast<Eigen::Index>(deepfm::expanded_width(input_width, pairwise)));
  }

  LinearInteractionModel(std::size_t input_width, bool pairwise, Parameters params)
      : input_width_(input_width), pairwise_(pairwise), params_(std::move(params)) {
    if (params_.weights.cols() !=
            static_cast<Eigen::Index>(deepfm::expanded_width(input_width_, pairwise_)) ||
        params_.weights.rows() != params_.bias.size())
      throw ShapeError("linear model: parameter shapes inconsistent");
  }

  std::size_t input_width() const { return input_width_; }
  bool pairwise() const { return pairwise_; }
  std::size_t expanded_width() const { return deepfm::expanded_width(input_width_, pairwise_); }
  std::size_t num_classes() const { return static_cast<std::size_t>(params_.bias.size()); }
  Parameters& parameters() { return params_; }
  const Parameters& parameters() const { return params_; }

  Vector expand(const Vector& x) const {
    if (x.size() != static_cast<Eigen::Index>(input_width_))
      throw ShapeError("linear model: input width mismatch");
    if (!pairwise_) return x;
    Vector z(static_cast<Eigen::Index>(expanded_width()));
    const auto d = x.size();
    z.head(d) = x;
    Eigen::Index k = d;
    for (Eigen::Index a = 0; a < d; ++a) {
      const auto rest = d - a - 1;
      z.segment(k, rest) = x(a) * x.tail(rest);
      k += rest;
    }
    return z;
  }

  Vector scores(const Vector& x) const { return params_.bias + params_.weights * expand(x); }
  Vector predict_proba(const Vector& x) const { return softmax(scores(x)); }
  std::size_t predict(const Vector& x) const { return argmax(scores(x)); }

  double accumulate_gradient(const Vector& x, std::size_t label, double weight, Parameters& grad,
                             Rng&, Mode = Mode::train) const {
    const Vector z = expand(x);
    const Vector s = params_.bias + params_.weights * z;
    const auto y = static_cast<Eigen::Index>(label);
    Vector upstream = softmax(s);
    upstream(y) -= 1.0;
    upstream *= weight;
    grad.bias += upstream;
    grad.weights.noalias() += upstream * z.transpose();
    return -log_softmax_at(s, y);
  }

  Parameters zero_gradient() const {
    return {Vector::Zero(params_.bias.size()),
            Matrix::Zero(params_.weights.rows(), params_.weights.cols())};
  }

  std::vector<ParamView> views_of(Parameters& p) const {
    std::vector<ParamView> views;
    p.append_views(views);
    return views;
  }

  std::vector<ParamView> parameter_views() { return views_of(params_); }

  std::string parameter_diagnostics() const {
    return "linear max |weight|=" + format_double(params_.weights.cwiseAbs().maxCoeff()) +
           " max |bias|=" + format_double(params_.bias.cwiseAbs().maxCoeff());
  }

 private:
  std::size_t input_width_;
  bool pairwise_;
  Parameters params_;
};

}  // namespace deepfm
