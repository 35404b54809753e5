#pragma once

// Factorization machine head. Per class c:
//
//   y_c = bias_c + <linear_c, x> + sum_f metric_cf * 0.5 * (S_f^2 - Q_f)
//
// with S_f = sum_i e_if and Q_f = sum_i e_if^2 over the embedded features.
// The bracket equals sum_{i<j} e_if e_jf, so the interaction term costs
// O(mn) and S, Q are shared by all classes.

#include "deepfm/common.hpp"

namespace deepfm {

struct FMHead {
  Vector bias;    // C
  Matrix linear;  // C x D
  Matrix metric;  // C x m, per-class diagonal weighting of the embedding space

  std::size_t num_classes() const { return static_cast<std::size_t>(bias.size()); }

  FMHead zeros_like() const {
    return {Vector::Zero(bias.size()), Matrix::Zero(linear.rows(), linear.cols()),
            Matrix::Zero(metric.rows(), metric.cols())};
  }

  void append_views(std::vector<ParamView>& views) {
    views.push_back({"fm.bias", as_span(bias), false});
    views.push_back({"fm.linear", as_span(linear), true});
    views.push_back({"fm.metric", as_span(metric), true});
  }
};

/// Zero bias and linear weights, all-ones interaction metric.
inline FMHead init_fm_head(std::size_t classes, std::size_t input_width, std::size_t m) {
  const auto c = static_cast<Eigen::Index>(classes);
  return {Vector::Zero(c), Matrix::Zero(c, static_cast<Eigen::Index>(input_width)),
          Matrix::Ones(c, static_cast<Eigen::Index>(m))};
}

namespace detail {
inline void check_fm_shapes(const FMHead& head, const Vector& x, const Matrix& e) {
  if (x.size() != head.linear.cols())
    throw ShapeError("fm: input width " + std::to_string(x.size()) + ", expected " +
                     std::to_string(head.linear.cols()));
  if (e.rows() != head.metric.cols())
    throw ShapeError("fm: embedding length " + std::to_string(e.rows()) + ", expected " +
                     std::to_string(head.metric.cols()));
}
}  // namespace detail

/// Per-dimension pairwise sums 0.5 * (S_f^2 - Q_f).
inline Vector pairwise_sums(const Matrix& e) {
  const Vector s = e.rowwise().sum();
  const Vector q = e.array().square().rowwise().sum();
  return 0.5 * (s.array().square() - q.array()).matrix();
}

/// Interaction term per class, O(mn).
inline Vector fm_interaction(const FMHead& head, const Matrix& e) {
  if (e.rows() != head.metric.cols()) throw ShapeError("fm_interaction: embedding length");
  return head.metric * pairwise_sums(e);
}

inline Vector fm_forward(const FMHead& head, const Vector& x, const Matrix& e) {
  detail::check_fm_shapes(head, x, e);
  return head.bias + head.linear * x + fm_interaction(head, e);
}

/// Contribution of the (i, j) pair to class c's interaction term.
inline double fm_pair_contribution(const FMHead& head, const Matrix& e, std::size_t i,
                                   std::size_t j, std::size_t c) {
  const auto n = static_cast<std::size_t>(e.cols());
  if (i >= j || j >= n) throw ShapeError("fm_pair_contribution: need i < j < n");
  if (c >= head.num_classes()) throw ShapeError("fm_pair_contribution: class out of range");
  const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
  return (head.metric.row(static_cast<Eigen::Index>(c)).transpose().array() *
          e.col(ii).array() * e.col(jj).array())
      .sum();
}

/// All pair contributions for class c, in (0,1), (0,2), ..., (n-2,n-1) order.
inline Vector fm_all_pair_contributions(const FMHead& head, const Matrix& e, std::size_t c) {
  const auto n = e.cols();
  const Matrix weighted =
      head.metric.row(static_cast<Eigen::Index>(c)).transpose().asDiagonal() * e;
  const Matrix gram = e.transpose() * weighted;
  Vector out(n * (n - 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) out(k++) = gram(i, j);
  return out;
}

/// Accumulates parameter gradients into `grad` and returns dL/de (m x n).
inline Matrix fm_backward(const FMHead& head, const Vector& x, const Matrix& e,
                          const Vector& upstream, FMHead& grad) {
  detail::check_fm_shapes(head, x, e);
  if (upstream.size() != head.bias.size()) throw ShapeError("fm_backward: upstream length");
  grad.bias += upstream;
  grad.linear.noalias() += upstream * x.transpose();
  grad.metric.noalias() += upstream * pairwise_sums(e).transpose();
  // dL/de_if = (sum_c g_c v_cf) (S_f - e_if)
  const Vector weight = head.metric.transpose() * upstream;
  const Vector s = e.rowwise().sum();
  Matrix de = (-e).colwise() + s;
  de.array().colwise() *= weight.array();
  return de;
}

}  // namespace deepfm
