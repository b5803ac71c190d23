#include "fsed/embedding.hpp"

#include <cmath>
#include <string>

#include "fsed/errors.hpp"

namespace fsed {

namespace {

// 1 / (1 + exp(z)) without overflow for large |z|.
double inverse_logistic(double z) {
    if (z >= 0) {
        const double t = std::exp(-z);
        return t / (1.0 + t);
    }
    return 1.0 / (1.0 + std::exp(z));
}

}  // namespace

const char* to_string(EmbeddingModel::Kind kind) {
    return kind == EmbeddingModel::Kind::Linear ? "linear" : "logistic";
}

EmbeddingModel::Kind model_kind_from_string(const std::string& name) {
    if (name == "linear") return EmbeddingModel::Kind::Linear;
    if (name == "logistic") return EmbeddingModel::Kind::Logistic;
    throw DataError("unknown model kind: " + name);
}

EmbeddingModel init_model(EmbeddingModel::Kind kind, int out_dim, int in_dim,
                          Rng& rng) {
    if (out_dim <= 0) throw DataError("out_dim must be positive");
    if (in_dim <= 0) throw DataError("in_dim must be positive");

    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    EmbeddingModel model;
    model.kind = kind;
    model.A.resize(out_dim, in_dim);
    for (int i = 0; i < out_dim; ++i)
        for (int j = 0; j < in_dim; ++j) model.A(i, j) = rng.uniform(-bound, bound);
    return model;
}

Eigen::VectorXd embed(const EmbeddingModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.A.cols())
        throw DataError("embed: input has dim " + std::to_string(x.size()) +
                        ", model expects " + std::to_string(model.A.cols()));
    Eigen::VectorXd z = model.A * x;
    if (model.kind == EmbeddingModel::Kind::Linear) return z;
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = inverse_logistic(z(i));
    return z;
}

Eigen::MatrixXd embed_batch(const EmbeddingModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.A.cols())
        throw DataError("embed_batch: input has dim " + std::to_string(X.cols()) +
                        ", model expects " + std::to_string(model.A.cols()));
    Eigen::MatrixXd Z = X * model.A.transpose();
    if (model.kind == EmbeddingModel::Kind::Linear) return Z;
    for (Eigen::Index r = 0; r < Z.rows(); ++r)
        for (Eigen::Index c = 0; c < Z.cols(); ++c) Z(r, c) = inverse_logistic(Z(r, c));
    return Z;
}

}  // namespace fsed
