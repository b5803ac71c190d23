#pragma once

#include <Eigen/Core>

#include "fsed/rng.hpp"

namespace fsed {

/// Trainable embedding map from patch space to embedding space.
///
///   linear:    F_A(x) = A x
///   logistic:  F_A(x)_i = 1 / (1 + exp((A x)_i))
///
/// The logistic form keeps the +Ax argument; since A is learned this is
/// equivalent to the conventional sigmoid up to A <-> -A.
struct EmbeddingModel {
    enum class Kind { Linear, Logistic };

    Kind kind = Kind::Logistic;
    Eigen::MatrixXd A;  // out_dim x in_dim

    int out_dim() const { return static_cast<int>(A.rows()); }
    int in_dim() const { return static_cast<int>(A.cols()); }
};

const char* to_string(EmbeddingModel::Kind kind);
EmbeddingModel::Kind model_kind_from_string(const std::string& name);

/// Entries of A drawn i.i.d. uniform on [-1/sqrt(in_dim), +1/sqrt(in_dim)].
EmbeddingModel init_model(EmbeddingModel::Kind kind, int out_dim, int in_dim,
                          Rng& rng);

Eigen::VectorXd embed(const EmbeddingModel& model, const Eigen::VectorXd& x);

/// Row-wise embedding of a batch (one item per row); identical to applying
/// embed() to every row in order.
Eigen::MatrixXd embed_batch(const EmbeddingModel& model,
                            const Eigen::MatrixXd& X);

}  // namespace fsed
