#include "fsed/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "fsed/embedding.hpp"
#include "fsed/evaluator.hpp"
#include "fsed/objective.hpp"
#include "fsed/rng.hpp"

namespace fsed {

namespace {

// Relative error with an absolute floor, so finite-difference roundoff on
// near-zero entries does not register as disagreement.
double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1e-4, std::abs(a) + std::abs(b));
}

Episode random_episode(Rng& rng, int n_way, int k_shot, int n_query, int in_dim) {
    Episode ep;
    ep.support_x.resize(n_way * k_shot, in_dim);
    ep.query_x.resize(n_way * n_query, in_dim);
    for (int k = 0; k < n_way; ++k) {
        ep.class_map.push_back(k);
        for (int i = 0; i < k_shot; ++i) ep.support_y.push_back(k);
        for (int i = 0; i < n_query; ++i) ep.query_y.push_back(k);
    }
    for (Eigen::Index r = 0; r < ep.support_x.rows(); ++r)
        for (Eigen::Index c = 0; c < in_dim; ++c)
            ep.support_x(r, c) = rng.uniform(-1.0, 1.0);
    for (Eigen::Index r = 0; r < ep.query_x.rows(); ++r)
        for (Eigen::Index c = 0; c < in_dim; ++c)
            ep.query_x(r, c) = rng.uniform(-1.0, 1.0);
    return ep;
}

SuiteResult gradient_suite(const VerifyOptions& opt) {
    constexpr int kInDim = 12, kOutDim = 8;
    constexpr double kH = 1e-5, kTol = 1e-4;
    const int episodes_per_config = 20;

    Rng rng = Rng(opt.seed).child("gradient-suite");
    double worst = 0;
    int checked = 0;

    const EmbeddingModel::Kind kinds[] = {EmbeddingModel::Kind::Linear,
                                          EmbeddingModel::Kind::Logistic};
    for (EmbeddingModel::Kind kind : kinds) {
        std::vector<DistanceKernel> kernels = {
            DistanceKernel::euclidean(), DistanceKernel::cholesky_pd(kOutDim),
            DistanceKernel::rbf(0.01), DistanceKernel::rbf(0.1)};
        // Exercise a non-trivial factor as well as L = I.
        {
            Eigen::MatrixXd L = Eigen::MatrixXd::Identity(kOutDim, kOutDim);
            for (int i = 1; i < kOutDim; ++i)
                for (int j = 0; j < i; ++j) L(i, j) = rng.uniform(-0.5, 0.5);
            kernels.push_back(DistanceKernel::cholesky_pd(L));
        }
        for (const DistanceKernel& kernel : kernels) {
            for (bool sep : {false, true}) {
                LossConfig loss;
                loss.use_separation = sep;
                for (int t = 0; t < episodes_per_config; ++t) {
                    EmbeddingModel model =
                        init_model(kind, kOutDim, kInDim, rng);
                    const Episode ep = random_episode(rng, 3, 2, 2, kInDim);
                    auto [value, analytic] =
                        episode_gradients(model, kernel, ep, loss);
                    (void)value;
                    analytic.dA(0, 0) += opt.gradient_perturbation;
                    const Gradients fd =
                        finite_diff_gradients(model, kernel, ep, loss, kH);
                    for (Eigen::Index i = 0; i < analytic.dA.rows(); ++i)
                        for (Eigen::Index j = 0; j < analytic.dA.cols(); ++j)
                            worst = std::max(worst,
                                             rel_err(analytic.dA(i, j), fd.dA(i, j)));
                    if (analytic.has_dL()) {
                        // Only the strict lower triangle is trainable.
                        for (Eigen::Index i = 1; i < analytic.dL.rows(); ++i)
                            for (Eigen::Index j = 0; j < i; ++j)
                                worst = std::max(
                                    worst, rel_err(analytic.dL(i, j), fd.dL(i, j)));
                    }
                    ++checked;
                }
            }
        }
    }

    std::ostringstream detail;
    detail << "max relative error " << worst << " over " << checked
           << " episodes (tolerance " << kTol << ")";
    return {"gradient-check", worst <= kTol, detail.str()};
}

// Exhaustive matching over gt subsets; oracle for match_events.
std::pair<int, double> brute_force_match(const std::vector<Interval>& preds,
                                         const std::vector<Interval>& gts,
                                         double min_iou) {
    const int n_preds = static_cast<int>(preds.size());
    const int n_gts = static_cast<int>(gts.size());
    std::vector<std::vector<double>> w(n_preds, std::vector<double>(n_gts, -1.0));
    for (int i = 0; i < n_preds; ++i)
        for (int j = 0; j < n_gts; ++j) {
            const double v = iou(preds[i], gts[j]);
            if (v >= min_iou) w[i][j] = v;
        }

    std::vector<std::vector<std::pair<int, double>>> memo(
        n_preds + 1,
        std::vector<std::pair<int, double>>(1u << n_gts, {-1, 0.0}));
    std::function<std::pair<int, double>(int, unsigned)> rec =
        [&](int i, unsigned mask) -> std::pair<int, double> {
        if (i == n_preds) return {0, 0.0};
        auto& slot = memo[i][mask];
        if (slot.first >= 0) return slot;
        std::pair<int, double> best = rec(i + 1, mask);
        for (int j = 0; j < n_gts; ++j) {
            if (mask & (1u << j) || w[i][j] < 0) continue;
            auto [c, s] = rec(i + 1, mask | (1u << j));
            if (c + 1 > best.first || (c + 1 == best.first && s + w[i][j] > best.second))
                best = {c + 1, s + w[i][j]};
        }
        return slot = best;
    };
    return rec(0, 0);
}

SuiteResult matching_suite(const VerifyOptions& opt) {
    Rng rng = Rng(opt.seed).child("matching-suite");
    const int n_instances = 1000;
    int failures = 0;
    double worst_iou_gap = 0;

    for (int t = 0; t < n_instances; ++t) {
        auto random_intervals = [&](std::size_t n) {
            std::vector<Interval> v(n);
            for (Interval& iv : v) {
                iv.start = rng.uniform(0.0, 10.0);
                iv.end = iv.start + rng.uniform(0.05, 2.0);
            }
            return v;
        };
        const auto preds = random_intervals(rng.uniform_int(9));
        const auto gts = random_intervals(rng.uniform_int(9));
        const MatchResult got = match_events(preds, gts, 0.3);
        const auto [best_card, best_iou] = brute_force_match(preds, gts, 0.3);

        double got_iou = 0;
        for (const auto& [p, g] : got.pairs) got_iou += iou(preds[p], gts[g]);
        if (got.tp != best_card) ++failures;
        worst_iou_gap = std::max(worst_iou_gap, std::abs(got_iou - best_iou));
    }

    std::ostringstream detail;
    detail << failures << "/" << n_instances
           << " cardinality mismatches, max total-IoU gap " << worst_iou_gap;
    return {"matching-brute-force", failures == 0 && worst_iou_gap <= 1e-9,
            detail.str()};
}

SuiteResult kernel_suite(const VerifyOptions& opt) {
    Rng rng = Rng(opt.seed).child("kernel-suite");
    const int dim = 16;
    double worst_chol = 0, worst_rbf = 0, worst_dot = 0;

    const DistanceKernel identity_chol = DistanceKernel::cholesky_pd(dim);
    const DistanceKernel euclid = DistanceKernel::euclidean();
    const DistanceKernel rbf = DistanceKernel::rbf(0.05);

    for (int t = 0; t < 50; ++t) {
        Eigen::VectorXd x(dim), y(dim);
        for (int i = 0; i < dim; ++i) {
            x(i) = rng.uniform(-2.0, 2.0);
            y(i) = rng.uniform(-2.0, 2.0);
        }
        worst_chol = std::max(worst_chol,
                              std::abs(squared_distance(identity_chol, x, y) -
                                       squared_distance(euclid, x, y)));
        double sq = 0;
        for (int i = 0; i < dim; ++i) sq += (x(i) - y(i)) * (x(i) - y(i));
        worst_rbf = std::max(worst_rbf, std::abs(squared_distance(rbf, x, y) -
                                                 (2.0 - 2.0 * std::exp(-0.05 * sq))));
        worst_dot =
            std::max(worst_dot, std::abs(squared_distance(euclid, x, y) - sq));
    }

    std::ostringstream detail;
    detail << "cholesky(I) gap " << worst_chol << ", rbf identity gap " << worst_rbf
           << ", dot-product identity gap " << worst_dot;
    return {"kernel-identities",
            worst_chol <= 1e-10 && worst_rbf <= 1e-12 && worst_dot <= 1e-9,
            detail.str()};
}

SuiteResult metric_suite() {
    struct Row {
        long tp, fp, fn;
        double precision, recall, fscore;  // percent
    };
    const Row rows[] = {
        {33, 62, 197, 34.73, 14.34, 20.31},
        {21, 1333, 209, 1.55, 9.13, 2.65},
        {11, 1871, 219, 0.58, 4.78, 1.042},
    };
    double worst = 0;
    for (const Row& row : rows) {
        const Metrics m = compute_metrics(row.tp, row.fp, row.fn);
        worst = std::max({worst, std::abs(100.0 * m.precision - row.precision),
                          std::abs(100.0 * m.recall - row.recall),
                          std::abs(100.0 * m.fscore - row.fscore)});
    }
    std::ostringstream detail;
    detail << "max deviation " << worst << " percentage points";
    return {"metric-fixtures", worst <= 0.01, detail.str()};
}

}  // namespace

std::vector<SuiteResult> run_verification(const VerifyOptions& options) {
    std::vector<SuiteResult> results;
    results.push_back(gradient_suite(options));
    results.push_back(matching_suite(options));
    results.push_back(kernel_suite(options));
    results.push_back(metric_suite());
    return results;
}

}  // namespace fsed
