#include "fsed/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fsed/errors.hpp"

namespace fsed {

namespace {

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericalError(std::string(what) + " is not finite");
}

// Pairwise |x - y|^2 between rows of X and rows of Y via the dot-product
// kernel identity, clamped against tiny negative rounding.
Eigen::MatrixXd euclidean_pairwise(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    const Eigen::VectorXd xs = X.rowwise().squaredNorm();
    const Eigen::VectorXd ys = Y.rowwise().squaredNorm();
    Eigen::MatrixXd d = -2.0 * (X * Y.transpose());
    d.colwise() += xs;
    d.rowwise() += ys.transpose();
    return d.cwiseMax(0.0);
}

struct EpisodeForward {
    Eigen::MatrixXd s_emb, q_emb;   // support / query embeddings
    Eigen::MatrixXd protos;         // n_way x d
    Eigen::MatrixXd sq_norms;       // plain |e_q - c_k|^2 (RBF reuses it)
    Eigen::MatrixXd dists;          // kernelised distances
    Eigen::MatrixXd probs;
    std::vector<int> class_counts;  // support count per class
    double proto_loss = 0;
    double penalty = 0;
    double total = 0;
};

EpisodeForward forward_pass(const EmbeddingModel& model, const DistanceKernel& kernel,
                            const Episode& episode, const LossConfig& config) {
    const int n_way = episode.n_way();
    if (n_way < 2) throw DataError("episode must have at least 2 classes");

    EpisodeForward f;
    f.s_emb = embed_batch(model, episode.support_x);
    f.q_emb = embed_batch(model, episode.query_x);
    f.protos = compute_prototypes(f.s_emb, episode.support_y, n_way);

    f.class_counts.assign(n_way, 0);
    for (int y : episode.support_y) f.class_counts[y]++;

    switch (kernel.kind) {
        case DistanceKernel::Kind::Euclidean:
            f.dists = euclidean_pairwise(f.q_emb, f.protos);
            break;
        case DistanceKernel::Kind::CholeskyPD:
            f.dists = euclidean_pairwise(f.q_emb * kernel.L, f.protos * kernel.L);
            break;
        case DistanceKernel::Kind::Rbf:
            f.sq_norms = euclidean_pairwise(f.q_emb, f.protos);
            f.dists = 2.0 - 2.0 * (-kernel.gamma * f.sq_norms.array()).exp();
            break;
    }

    f.probs = class_probabilities(f.dists);

    // Softmax cross-entropy on the negative distances in log-sum-exp form.
    double acc = 0;
    for (Eigen::Index q = 0; q < f.dists.rows(); ++q) {
        const int y = episode.query_y[static_cast<std::size_t>(q)];
        if (y < 0 || y >= n_way) throw DataError("query label out of range");
        const double m = -f.dists.row(q).minCoeff();
        acc += f.dists(q, y) + m + std::log((-f.dists.row(q).array() - m).exp().sum());
    }
    f.proto_loss = acc / static_cast<double>(f.dists.rows());

    f.penalty = config.use_separation ? separation_penalty(f.protos, config) : 0.0;
    f.total = f.proto_loss + f.penalty;
    check_finite(f.total, "episode loss");
    return f;
}

}  // namespace

DistanceKernel DistanceKernel::euclidean() { return {}; }

DistanceKernel DistanceKernel::cholesky_pd(int dim) {
    DistanceKernel k;
    k.kind = Kind::CholeskyPD;
    k.L = Eigen::MatrixXd::Identity(dim, dim);
    return k;
}

DistanceKernel DistanceKernel::cholesky_pd(const Eigen::MatrixXd& L) {
    DistanceKernel k;
    k.kind = Kind::CholeskyPD;
    k.L = project_cholesky(L);
    return k;
}

DistanceKernel DistanceKernel::rbf(double gamma) {
    if (!(gamma > 0)) throw DataError("rbf gamma must be positive");
    DistanceKernel k;
    k.kind = Kind::Rbf;
    k.gamma = gamma;
    return k;
}

const char* to_string(DistanceKernel::Kind kind) {
    switch (kind) {
        case DistanceKernel::Kind::Euclidean: return "euclidean";
        case DistanceKernel::Kind::CholeskyPD: return "cholesky";
        case DistanceKernel::Kind::Rbf: return "rbf";
    }
    return "euclidean";
}

DistanceKernel::Kind kernel_kind_from_string(const std::string& name) {
    if (name == "euclidean") return DistanceKernel::Kind::Euclidean;
    if (name == "cholesky") return DistanceKernel::Kind::CholeskyPD;
    if (name == "rbf") return DistanceKernel::Kind::Rbf;
    throw DataError("unknown kernel: " + name);
}

Eigen::MatrixXd compute_prototypes(const Eigen::MatrixXd& embeddings,
                                   const std::vector<int>& labels, int n_way) {
    if (labels.size() != static_cast<std::size_t>(embeddings.rows()))
        throw DataError("compute_prototypes: one label per embedding required");

    Eigen::MatrixXd protos = Eigen::MatrixXd::Zero(n_way, embeddings.cols());
    std::vector<int> counts(n_way, 0);
    for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= n_way) throw DataError("label out of range");
        protos.row(y) += embeddings.row(i);
        counts[y]++;
    }
    for (int k = 0; k < n_way; ++k) {
        if (counts[k] == 0)
            throw DataError("class " + std::to_string(k) + " has no support points");
        protos.row(k) /= static_cast<double>(counts[k]);
    }
    return protos;
}

double squared_distance(const DistanceKernel& kernel, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y) {
    if (x.size() != y.size()) throw DataError("squared_distance: dimension mismatch");
    double d = 0;
    switch (kernel.kind) {
        case DistanceKernel::Kind::Euclidean:
            d = x.dot(x) + y.dot(y) - 2.0 * x.dot(y);
            break;
        case DistanceKernel::Kind::CholeskyPD: {
            if (kernel.L.rows() != x.size())
                throw DataError("squared_distance: kernel dimension mismatch");
            const Eigen::VectorXd u = kernel.L.transpose() * x;
            const Eigen::VectorXd v = kernel.L.transpose() * y;
            d = u.dot(u) + v.dot(v) - 2.0 * u.dot(v);
            break;
        }
        case DistanceKernel::Kind::Rbf:
            d = 2.0 - 2.0 * std::exp(-kernel.gamma * (x - y).squaredNorm());
            break;
    }
    check_finite(d, "squared_distance");
    return std::max(0.0, d);
}

Eigen::MatrixXd pairwise_squared_distances(const DistanceKernel& kernel,
                                           const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& Y) {
    if (X.cols() != Y.cols())
        throw DataError("pairwise_squared_distances: dimension mismatch");
    switch (kernel.kind) {
        case DistanceKernel::Kind::CholeskyPD:
            return euclidean_pairwise(X * kernel.L, Y * kernel.L);
        case DistanceKernel::Kind::Rbf:
            return 2.0 -
                   2.0 * (-kernel.gamma * euclidean_pairwise(X, Y).array()).exp();
        case DistanceKernel::Kind::Euclidean:
        default:
            return euclidean_pairwise(X, Y);
    }
}

Eigen::MatrixXd class_probabilities(const Eigen::MatrixXd& dists) {
    Eigen::MatrixXd probs(dists.rows(), dists.cols());
    for (Eigen::Index q = 0; q < dists.rows(); ++q) {
        const double m = (-dists.row(q)).maxCoeff();
        Eigen::ArrayXd e = (-dists.row(q).array() - m).exp();
        probs.row(q) = e / e.sum();
    }
    return probs;
}

double prototypical_loss(const Eigen::MatrixXd& probs,
                         const std::vector<int>& true_labels) {
    if (true_labels.size() != static_cast<std::size_t>(probs.rows()))
        throw DataError("prototypical_loss: one label per query required");
    double acc = 0;
    for (Eigen::Index q = 0; q < probs.rows(); ++q) {
        const int y = true_labels[static_cast<std::size_t>(q)];
        if (y < 0 || y >= probs.cols()) throw DataError("label out of range");
        acc -= std::log(probs(q, y));
    }
    return acc / static_cast<double>(probs.rows());
}

double separation_penalty(const Eigen::MatrixXd& prototypes, const LossConfig& config) {
    if (prototypes.rows() < 2)
        throw DataError("separation_penalty needs at least 2 prototypes");
    double acc = 0;
    for (Eigen::Index i = 0; i < prototypes.rows(); ++i)
        for (Eigen::Index j = 0; j < prototypes.rows(); ++j) {
            if (i == j) continue;
            const double s = (prototypes.row(i) - prototypes.row(j)).squaredNorm();
            acc += std::max(0.0, config.delta_v - s);
        }
    return config.lambda * acc;
}

double episode_loss(const EmbeddingModel& model, const DistanceKernel& kernel,
                    const Episode& episode, const LossConfig& config) {
    return forward_pass(model, kernel, episode, config).total;
}

std::pair<double, Gradients> episode_gradients(const EmbeddingModel& model,
                                               const DistanceKernel& kernel,
                                               const Episode& episode,
                                               const LossConfig& config) {
    const EpisodeForward f = forward_pass(model, kernel, episode, config);
    const int n_way = episode.n_way();
    const Eigen::Index n_q = f.q_emb.rows();
    const Eigen::Index dim = f.q_emb.cols();

    // dLoss/d(dists): softmax cross-entropy gives (one_hot - p) / n_q.
    Eigen::MatrixXd g_dist = -f.probs / static_cast<double>(n_q);
    for (Eigen::Index q = 0; q < n_q; ++q)
        g_dist(q, episode.query_y[static_cast<std::size_t>(q)]) +=
            1.0 / static_cast<double>(n_q);

    // For the RBF kernel the chain runs through d = 2 - 2 exp(-gamma s) with
    // s the plain squared norm; fold d(d)/ds into the distance gradient so
    // the remaining backward is the Euclidean one.
    if (kernel.kind == DistanceKernel::Kind::Rbf)
        g_dist.array() *=
            2.0 * kernel.gamma * (-kernel.gamma * f.sq_norms.array()).exp();

    const Eigen::VectorXd row_sums = g_dist.rowwise().sum();
    const Eigen::VectorXd col_sums = g_dist.colwise().sum();

    // d|e - c|^2/de = 2(e - c); for CholeskyPD the squared norm is taken in
    // the L' basis, which right-multiplies both gradients by Q = LL'.
    Eigen::MatrixXd g_query =
        2.0 * (row_sums.asDiagonal() * f.q_emb - g_dist * f.protos);
    Eigen::MatrixXd g_proto =
        -2.0 * (g_dist.transpose() * f.q_emb - col_sums.asDiagonal() * f.protos);

    Gradients grads;
    if (kernel.kind == DistanceKernel::Kind::CholeskyPD) {
        const Eigen::MatrixXd Q = kernel.L * kernel.L.transpose();
        g_query = g_query * Q;
        g_proto = g_proto * Q;

        // dLoss/dL = 2 * (sum_{q,k} w_qk Delta Delta') * L, assembled from
        // the same batched pieces as the distances.
        Eigen::MatrixXd S =
            f.q_emb.transpose() * row_sums.asDiagonal() * f.q_emb -
            f.q_emb.transpose() * g_dist * f.protos;
        S -= f.protos.transpose() * g_dist.transpose() * f.q_emb;
        S += f.protos.transpose() * col_sums.asDiagonal() * f.protos;
        grads.dL = 2.0 * S * kernel.L;
        // The diagonal and strict upper triangle are frozen by projection.
        for (Eigen::Index i = 0; i < grads.dL.rows(); ++i)
            for (Eigen::Index j = i; j < grads.dL.cols(); ++j) grads.dL(i, j) = 0.0;
    }

    if (config.use_separation) {
        for (int i = 0; i < n_way; ++i)
            for (int j = 0; j < n_way; ++j) {
                if (i == j) continue;
                const Eigen::RowVectorXd diff = f.protos.row(i) - f.protos.row(j);
                if (diff.squaredNorm() < config.delta_v)
                    g_proto.row(i) -= 4.0 * config.lambda * diff;
            }
    }

    // Prototype mean: each support point of class k receives g_proto_k / n_k.
    Eigen::MatrixXd g_support(f.s_emb.rows(), dim);
    for (Eigen::Index i = 0; i < f.s_emb.rows(); ++i) {
        const int y = episode.support_y[static_cast<std::size_t>(i)];
        g_support.row(i) = g_proto.row(y) / static_cast<double>(f.class_counts[y]);
    }

    // Embedding nonlinearity: e = 1/(1+exp(z)) has de/dz = -e(1-e).
    if (model.kind == EmbeddingModel::Kind::Logistic) {
        g_support.array() *= -f.s_emb.array() * (1.0 - f.s_emb.array());
        g_query.array() *= -f.q_emb.array() * (1.0 - f.q_emb.array());
    }

    grads.dA = g_support.transpose() * episode.support_x +
               g_query.transpose() * episode.query_x;
    if (!grads.dA.allFinite() || (grads.has_dL() && !grads.dL.allFinite()))
        throw NumericalError("episode gradient is not finite");
    return {f.total, std::move(grads)};
}

Gradients finite_diff_gradients(const EmbeddingModel& model,
                                const DistanceKernel& kernel,
                                const Episode& episode,
                                const LossConfig& config, double h) {
    if (!(h > 0)) throw DataError("finite difference step must be positive");

    Gradients grads;
    EmbeddingModel m = model;
    grads.dA.resize(m.A.rows(), m.A.cols());
    for (Eigen::Index i = 0; i < m.A.rows(); ++i)
        for (Eigen::Index j = 0; j < m.A.cols(); ++j) {
            const double saved = m.A(i, j);
            m.A(i, j) = saved + h;
            const double up = episode_loss(m, kernel, episode, config);
            m.A(i, j) = saved - h;
            const double down = episode_loss(m, kernel, episode, config);
            m.A(i, j) = saved;
            grads.dA(i, j) = (up - down) / (2.0 * h);
        }

    if (kernel.kind == DistanceKernel::Kind::CholeskyPD) {
        DistanceKernel k = kernel;
        grads.dL.resize(k.L.rows(), k.L.cols());
        for (Eigen::Index i = 0; i < k.L.rows(); ++i)
            for (Eigen::Index j = 0; j < k.L.cols(); ++j) {
                const double saved = k.L(i, j);
                k.L(i, j) = saved + h;
                const double up = episode_loss(model, k, episode, config);
                k.L(i, j) = saved - h;
                const double down = episode_loss(model, k, episode, config);
                k.L(i, j) = saved;
                grads.dL(i, j) = (up - down) / (2.0 * h);
            }
    }
    return grads;
}

Eigen::MatrixXd project_cholesky(const Eigen::MatrixXd& L) {
    if (L.rows() != L.cols()) throw DataError("project_cholesky: matrix must be square");
    Eigen::MatrixXd out = L;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        out(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < out.cols(); ++j) out(i, j) = 0.0;
    }
    return out;
}

}  // namespace fsed
