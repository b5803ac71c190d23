#include "fsed/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fsed/errors.hpp"

namespace fsed {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json kernel_to_json(const DistanceKernel& kernel) {
    json j;
    j["variant"] = to_string(kernel.kind);
    if (kernel.kind == DistanceKernel::Kind::CholeskyPD) {
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(kernel.L.size()));
        for (Eigen::Index i = 0; i < kernel.L.rows(); ++i)
            for (Eigen::Index j_ = 0; j_ < kernel.L.cols(); ++j_)
                flat.push_back(kernel.L(i, j_));
        j["L"] = flat;
    } else if (kernel.kind == DistanceKernel::Kind::Rbf) {
        j["gamma"] = kernel.gamma;
    }
    return j;
}

DistanceKernel kernel_from_json(const json& j) {
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "euclidean") return DistanceKernel::euclidean();
    if (variant == "rbf") return DistanceKernel::rbf(j.at("gamma").get<double>());
    if (variant == "cholesky") {
        const auto flat = j.at("L").get<std::vector<double>>();
        const auto dim = static_cast<Eigen::Index>(std::llround(std::sqrt(
            static_cast<double>(flat.size()))));
        if (dim * dim != static_cast<Eigen::Index>(flat.size()))
            throw FormatError("checkpoint kernel L is not square");
        Eigen::MatrixXd L(dim, dim);
        std::size_t idx = 0;
        for (Eigen::Index i = 0; i < dim; ++i)
            for (Eigen::Index j_ = 0; j_ < dim; ++j_) L(i, j_) = flat[idx++];
        DistanceKernel k;
        k.kind = DistanceKernel::Kind::CholeskyPD;
        k.L = L;
        return k;
    }
    throw FormatError("unknown kernel variant in checkpoint: " + variant);
}

json model_to_json(const EmbeddingModel& model, const DistanceKernel& kernel) {
    json j;
    j["kind"] = to_string(model.kind);
    j["out_dim"] = model.out_dim();
    j["in_dim"] = model.in_dim();
    j["kernel"] = kernel_to_json(kernel);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(model.A.size()));
    for (Eigen::Index i = 0; i < model.A.rows(); ++i)
        for (Eigen::Index j_ = 0; j_ < model.A.cols(); ++j_)
            flat.push_back(model.A(i, j_));
    j["A"] = std::move(flat);
    return j;
}

std::pair<EmbeddingModel, DistanceKernel> model_from_json(const json& j) {
    EmbeddingModel model;
    model.kind = model_kind_from_string(j.at("kind").get<std::string>());
    const int out_dim = j.at("out_dim").get<int>();
    const int in_dim = j.at("in_dim").get<int>();
    const auto flat = j.at("A").get<std::vector<double>>();
    if (out_dim <= 0 || in_dim <= 0 ||
        flat.size() != static_cast<std::size_t>(out_dim) * static_cast<std::size_t>(in_dim))
        throw FormatError("checkpoint A does not match out_dim x in_dim");
    model.A.resize(out_dim, in_dim);
    std::size_t idx = 0;
    for (int i = 0; i < out_dim; ++i)
        for (int j_ = 0; j_ < in_dim; ++j_) model.A(i, j_) = flat[idx++];
    if (!model.A.allFinite()) throw FormatError("checkpoint A has non-finite entries");

    DistanceKernel kernel = kernel_from_json(j.at("kernel"));
    if (kernel.kind == DistanceKernel::Kind::CholeskyPD &&
        kernel.L.rows() != out_dim)
        throw FormatError("checkpoint kernel dimension does not match out_dim");
    return {std::move(model), std::move(kernel)};
}

json parse_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open checkpoint: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("malformed checkpoint " + path + ": " + e.what());
    }
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kFormatVersion)
        throw FormatError("unsupported checkpoint format_version in: " + path);
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError("cannot write checkpoint: " + path);
    out << j.dump() << '\n';
    if (!out) throw IngestionError("failed writing checkpoint: " + path);
}

DistanceKernel make_kernel(const TrainConfig& config) {
    switch (config.kernel_kind) {
        case DistanceKernel::Kind::CholeskyPD:
            return DistanceKernel::cholesky_pd(config.out_dim);
        case DistanceKernel::Kind::Rbf:
            return DistanceKernel::rbf(config.gamma);
        case DistanceKernel::Kind::Euclidean:
        default:
            return DistanceKernel::euclidean();
    }
}

}  // namespace

std::string TrainReport::to_json_lines() const {
    std::ostringstream out;
    for (const EpochStats& e : epochs) {
        json j;
        j["epoch"] = e.epoch;
        j["mean_loss"] = e.mean_loss;
        j["val_accuracy"] = e.val_accuracy;
        out << j.dump() << '\n';
    }
    return out.str();
}

double validation_accuracy(const EmbeddingModel& model, const DistanceKernel& kernel,
                           const std::vector<LabeledPatch>& val_pool,
                           const EpisodeSpec& spec, int n_episodes, Rng& rng) {
    if (n_episodes < 1) throw DataError("n_episodes must be >= 1");
    if (val_pool.empty()) throw DataError("validation pool is empty");

    const std::size_t need = static_cast<std::size_t>(spec.k_shot) + spec.n_query;
    std::map<int, std::size_t> counts;
    for (const LabeledPatch& p : val_pool) counts[p.class_id]++;
    int eligible = 0;
    for (const auto& [cid, n] : counts)
        if (n >= need) ++eligible;
    if (eligible < 2)
        throw DataError("validation pool has " + std::to_string(eligible) +
                        " classes with >= " + std::to_string(need) +
                        " patches; need at least 2");

    EpisodeSpec eff = spec;
    eff.n_way = std::min(spec.n_way, eligible);

    long correct = 0, total = 0;
    for (int e = 0; e < n_episodes; ++e) {
        const Episode ep = sample_episode(val_pool, eff, rng);
        const Eigen::MatrixXd protos =
            compute_prototypes(embed_batch(model, ep.support_x), ep.support_y, eff.n_way);
        const Eigen::MatrixXd dists = pairwise_squared_distances(
            kernel, embed_batch(model, ep.query_x), protos);
        const Eigen::MatrixXd probs = class_probabilities(dists);
        for (Eigen::Index q = 0; q < probs.rows(); ++q) {
            Eigen::Index argmax = 0;
            probs.row(q).maxCoeff(&argmax);
            correct += (argmax == ep.query_y[static_cast<std::size_t>(q)]);
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(const std::vector<LabeledPatch>& train_pool,
                  const std::vector<LabeledPatch>& val_pool,
                  const TrainConfig& config) {
    if (config.epochs < 1) throw DataError("epochs must be >= 1");
    if (config.lr < 0) throw DataError("lr must be nonnegative");
    if (train_pool.empty()) throw DataError("training pool is empty");
    config.episode_spec.validate();

    const auto start = std::chrono::steady_clock::now();
    const Rng root(config.seed);
    Rng init_rng = root.child("init");
    Rng episode_rng = root.child("episodes");
    Rng val_rng = root.child("validation");

    const int in_dim = static_cast<int>(train_pool.front().features.size());
    TrainResult result;
    result.model = init_model(config.model_kind, config.out_dim, in_dim, init_rng);
    result.kernel = make_kernel(config);

    const int per_episode =
        config.episode_spec.n_way * (config.episode_spec.k_shot + config.episode_spec.n_query);
    const int episodes_per_epoch =
        config.episodes_per_epoch > 0
            ? config.episodes_per_epoch
            : std::max(1, static_cast<int>(train_pool.size()) / per_episode);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double loss_sum = 0;
        for (int e = 0; e < episodes_per_epoch; ++e) {
            const Episode ep = sample_episode(train_pool, config.episode_spec, episode_rng);
            double loss;
            Gradients grads;
            try {
                std::tie(loss, grads) =
                    episode_gradients(result.model, result.kernel, ep, config.loss);
            } catch (const NumericalError& err) {
                throw NumericalError("epoch " + std::to_string(epoch) + " episode " +
                                     std::to_string(e + 1) + ": " + err.what());
            }
            loss_sum += loss;
            result.model.A -= config.lr * grads.dA;
            if (grads.has_dL())
                result.kernel.L = project_cholesky(result.kernel.L - config.lr * grads.dL);
            if (!result.model.A.allFinite())
                throw NumericalError("epoch " + std::to_string(epoch) + " episode " +
                                     std::to_string(e + 1) + ": parameters diverged");
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / episodes_per_epoch;
        stats.val_accuracy = validation_accuracy(result.model, result.kernel, val_pool,
                                                 config.episode_spec,
                                                 config.val_episodes, val_rng);
        result.report.epochs.push_back(stats);
    }

    result.report.final_val_accuracy = result.report.epochs.back().val_accuracy;
    result.report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::pair<EnsembleModel, std::vector<TrainReport>> train_ensemble(
    const std::vector<LabeledPatch>& train_pool,
    const std::vector<LabeledPatch>& val_pool, const TrainConfig& config,
    const std::vector<int>& out_dims) {
    if (out_dims.size() < 2) throw DataError("ensemble needs at least 2 members");

    EnsembleModel ensemble;
    std::vector<TrainReport> reports;
    for (std::size_t i = 0; i < out_dims.size(); ++i) {
        TrainConfig member = config;
        member.model_kind = EmbeddingModel::Kind::Logistic;
        member.out_dim = out_dims[i];
        member.seed = config.seed + i;
        TrainResult r = train(train_pool, val_pool, member);
        ensemble.members.emplace_back(std::move(r.model), std::move(r.kernel));
        reports.push_back(std::move(r.report));
    }
    return {std::move(ensemble), std::move(reports)};
}

void save_checkpoint(const EmbeddingModel& model, const DistanceKernel& kernel,
                     const std::string& path) {
    json j = model_to_json(model, kernel);
    j["format_version"] = kFormatVersion;
    write_json_file(path, j);
}

std::pair<EmbeddingModel, DistanceKernel> load_checkpoint(const std::string& path) {
    const json j = parse_checkpoint_file(path);
    if (j.at("kind").get<std::string>() == "ensemble")
        throw FormatError("checkpoint holds an ensemble; use load_any_checkpoint: " + path);
    return model_from_json(j);
}

void save_ensemble_checkpoint(const EnsembleModel& ensemble, const std::string& path) {
    if (ensemble.members.empty()) throw DataError("cannot save an empty ensemble");
    json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "ensemble";
    json members = json::array();
    for (const auto& [model, kernel] : ensemble.members)
        members.push_back(model_to_json(model, kernel));
    j["members"] = std::move(members);
    write_json_file(path, j);
}

EnsembleModel load_any_checkpoint(const std::string& path) {
    const json j = parse_checkpoint_file(path);
    EnsembleModel ensemble;
    if (j.at("kind").get<std::string>() == "ensemble") {
        for (const json& member : j.at("members"))
            ensemble.members.push_back(model_from_json(member));
        if (ensemble.members.empty())
            throw FormatError("ensemble checkpoint has no members: " + path);
    } else {
        ensemble.members.push_back(model_from_json(j));
    }
    return ensemble;
}

}  // namespace fsed
