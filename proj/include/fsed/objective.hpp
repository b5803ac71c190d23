#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "fsed/corpus.hpp"
#include "fsed/embedding.hpp"

namespace fsed {

/// Squared-distance definition used between embeddings and prototypes.
/// Every variant is expressed through a kernel K via
///   d(x, y) = K(x,x) + K(y,y) - 2 K(x,y):
///   Euclidean:   K(x,y) = x.y                     -> d = |x - y|^2
///   CholeskyPD:  K(x,y) = x' L L' y               -> d = |L'(x - y)|^2
///   RBF:         K(x,y) = exp(-gamma |x - y|^2)   -> d = 2 - 2 K(x,y)
/// The Cholesky factor L is unit-lower-triangular: its diagonal is frozen at
/// 1 and the strict upper triangle at 0 (see project_cholesky).
struct DistanceKernel {
    enum class Kind { Euclidean, CholeskyPD, Rbf };

    Kind kind = Kind::Euclidean;
    Eigen::MatrixXd L;   // CholeskyPD only
    double gamma = 0.0;  // RBF only

    static DistanceKernel euclidean();
    static DistanceKernel cholesky_pd(int dim);               // L = I
    static DistanceKernel cholesky_pd(const Eigen::MatrixXd& L);  // projected
    static DistanceKernel rbf(double gamma);                  // gamma > 0
};

const char* to_string(DistanceKernel::Kind kind);
DistanceKernel::Kind kernel_kind_from_string(const std::string& name);

/// Prototype-separation hinge configuration:
///   penalty = lambda * sum_{i != j} max(0, delta_v - |mu_i - mu_j|^2)
/// summed over ordered pairs, so each unordered pair counts twice.
struct LossConfig {
    bool use_separation = false;
    double lambda = 0.1;
    double delta_v = 10.0;
};

struct Gradients {
    Eigen::MatrixXd dA;
    Eigen::MatrixXd dL;  // CholeskyPD only; empty otherwise
    bool has_dL() const { return dL.size() > 0; }
};

/// Per-class mean of the support embeddings (one row per item). Every class
/// index in [0, n_way) must appear at least once.
Eigen::MatrixXd compute_prototypes(const Eigen::MatrixXd& embeddings,
                                   const std::vector<int>& labels, int n_way);

double squared_distance(const DistanceKernel& kernel, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y);

/// All pairwise squared distances between rows of X and rows of Y.
Eigen::MatrixXd pairwise_squared_distances(const DistanceKernel& kernel,
                                           const Eigen::MatrixXd& X,
                                           const Eigen::MatrixXd& Y);

/// Row-wise softmax over negative distances, stabilised by subtracting the
/// row maximum of -d. Each row sums to 1 within 1e-12.
Eigen::MatrixXd class_probabilities(const Eigen::MatrixXd& dists);

/// Mean over query points of -log p(true class).
double prototypical_loss(const Eigen::MatrixXd& probs,
                         const std::vector<int>& true_labels);

/// Hinge penalty over ordered prototype pairs; distances are plain Euclidean
/// on embeddings regardless of the active kernel.
double separation_penalty(const Eigen::MatrixXd& prototypes,
                          const LossConfig& config);

/// Full episode objective: embed support and query, form prototypes,
/// kernelised distances, softmax cross-entropy on the negative distances
/// (log-sum-exp form), plus the separation penalty when enabled.
double episode_loss(const EmbeddingModel& model, const DistanceKernel& kernel,
                    const Episode& episode, const LossConfig& config);

/// Analytic reverse-mode gradients of episode_loss with respect to A (and L
/// for CholeskyPD, with the frozen diagonal and strict upper triangle zeroed
/// by projection). Returns the loss alongside.
std::pair<double, Gradients> episode_gradients(const EmbeddingModel& model,
                                               const DistanceKernel& kernel,
                                               const Episode& episode,
                                               const LossConfig& config);

/// Central finite differences (f(t+h) - f(t-h)) / (2h) per parameter,
/// evaluated through episode_loss only. Oracle for episode_gradients.
Gradients finite_diff_gradients(const EmbeddingModel& model,
                                const DistanceKernel& kernel,
                                const Episode& episode,
                                const LossConfig& config, double h);

/// Zeroes the strict upper triangle, sets the diagonal to 1 and keeps the
/// lower triangle. Idempotent.
Eigen::MatrixXd project_cholesky(const Eigen::MatrixXd& L);

}  // namespace fsed
