#pragma once

#include "deepfm/schema.hpp"

namespace deepfm {

/// Per-feature embedding matrices A_i (m x d_i). Embedded vectors are
/// returned as an m x n matrix whose column i is e_i = A_i x_i, so the
/// column-major storage is already CONCAT(e_1, ..., e_n).
struct EmbeddingBank {
  std::size_t dim = 0;
  std::vector<Matrix> matrices;

  std::size_t num_features() const { return matrices.size(); }

  EmbeddingBank zeros_like() const {
    EmbeddingBank z{dim, {}};
    for (const auto& a : matrices) z.matrices.push_back(Matrix::Zero(a.rows(), a.cols()));
    return z;
  }

  void append_views(std::vector<ParamView>& views) {
    for (std::size_t i = 0; i < matrices.size(); ++i)
      views.push_back({"embedding[" + std::to_string(i) + "]", as_span(matrices[i]), true});
  }
};

/// Entries i.i.d. uniform on [-1/sqrt(m), 1/sqrt(m)].
inline EmbeddingBank init_embeddings(const FeatureSchema& schema, std::size_t m,
                                     std::uint64_t seed) {
  if (m == 0) throw ShapeError("init_embeddings: embedding length must be >= 1");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(m));
  EmbeddingBank bank{m, {}};
  for (std::size_t i = 0; i < schema.num_features(); ++i) {
    Matrix a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(schema.width(i)));
    for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = uniform(rng, -bound, bound);
    bank.matrices.push_back(std::move(a));
  }
  return bank;
}

inline void check_bank(const EmbeddingBank& bank, const FeatureSchema& schema) {
  if (bank.num_features() != schema.num_features())
    throw ShapeError("embedding bank has " + std::to_string(bank.num_features()) +
                     " matrices, schema has " + std::to_string(schema.num_features()) +
                     " features");
  for (std::size_t i = 0; i < bank.num_features(); ++i)
    if (bank.matrices[i].rows() != static_cast<Eigen::Index>(bank.dim) ||
        bank.matrices[i].cols() != static_cast<Eigen::Index>(schema.width(i)))
      throw ShapeError("embedding matrix " + std::to_string(i) + " has wrong shape");
}

inline Matrix embed(const EmbeddingBank& bank, const Vector& x, const FeatureSchema& schema) {
  if (x.size() != static_cast<Eigen::Index>(schema.input_width()))
    throw ShapeError("embed: input width " + std::to_string(x.size()) + ", expected " +
                     std::to_string(schema.input_width()));
  const auto m = static_cast<Eigen::Index>(bank.dim);
  Matrix e(m, static_cast<Eigen::Index>(bank.num_features()));
  for (std::size_t i = 0; i < bank.num_features(); ++i) {
    const auto& a = bank.matrices[i];
    e.col(static_cast<Eigen::Index>(i)).noalias() =
        a * x.segment(static_cast<Eigen::Index>(schema.offset(i)), a.cols());
  }
  return e;
}

/// Accumulates dL/dA_i += (dL/de_i) x_i^T into `grad`.
inline void accumulate_embedding_gradient(const FeatureSchema& schema, const Vector& x,
                                          const Matrix& upstream, EmbeddingBank& grad) {
  for (std::size_t i = 0; i < grad.num_features(); ++i) {
    auto& g = grad.matrices[i];
    const auto xi = x.segment(static_cast<Eigen::Index>(schema.offset(i)), g.cols());
    g.noalias() += upstream.col(static_cast<Eigen::Index>(i)) * xi.transpose();
  }
}

struct EmbeddingGradients {
  std::vector<Matrix> d_matrices;  // dL/dA_i
  Vector d_input;                  // dL/dx
};

inline EmbeddingGradients embed_jacobians(const EmbeddingBank& bank, const Vector& x,
                                          const FeatureSchema& schema, const Matrix& upstream) {
  if (x.size() != static_cast<Eigen::Index>(schema.input_width()))
    throw ShapeError("embed_jacobians: input width mismatch");
  if (upstream.rows() != static_cast<Eigen::Index>(bank.dim) ||
      upstream.cols() != static_cast<Eigen::Index>(bank.num_features()))
    throw ShapeError("embed_jacobians: upstream must be m x n");
  EmbeddingBank grad = bank.zeros_like();
  accumulate_embedding_gradient(schema, x, upstream, grad);
  EmbeddingGradients out{std::move(grad.matrices), Vector::Zero(x.size())};
  for (std::size_t i = 0; i < bank.num_features(); ++i) {
    const auto& a = bank.matrices[i];
    out.d_input.segment(static_cast<Eigen::Index>(schema.offset(i)), a.cols()).noalias() =
        a.transpose() * upstream.col(static_cast<Eigen::Index>(i));
  }
  return out;
}

}  // namespace deepfm
