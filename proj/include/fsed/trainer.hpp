#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fsed/corpus.hpp"
#include "fsed/embedding.hpp"
#include "fsed/ensemble.hpp"
#include "fsed/objective.hpp"

namespace fsed {

struct TrainConfig {
    int epochs = 15;       // separation-loss runs use 30
    double lr = 0.0001;
    EpisodeSpec episode_spec;
    int episodes_per_epoch = 0;  // 0: floor(pool / (n_way*(k+q))), min 1
    std::uint64_t seed = 0;
    EmbeddingModel::Kind model_kind = EmbeddingModel::Kind::Logistic;
    int out_dim = 256;
    DistanceKernel::Kind kernel_kind = DistanceKernel::Kind::Euclidean;
    double gamma = 0.1;  // RBF only
    LossConfig loss;
    int val_episodes = 100;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double mean_loss = 0;
    double val_accuracy = 0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double final_val_accuracy = 0;
    double wall_clock_seconds = 0;

    /// One JSON object per epoch: {"epoch","mean_loss","val_accuracy"}.
    /// Wall-clock time is deliberately not emitted so reruns are
    /// byte-identical.
    std::string to_json_lines() const;
};

struct TrainResult {
    EmbeddingModel model;
    DistanceKernel kernel;
    TrainReport report;
};

/// Episodic gradient descent: one plain gradient step per episode,
///   A <- A - lr * dA     (and L <- project_cholesky(L - lr * dL)),
/// validation accuracy after each epoch, final-epoch model returned.
/// Aborts with NumericalError naming the epoch/episode if the loss or a
/// gradient goes non-finite.
TrainResult train(const std::vector<LabeledPatch>& train_pool,
                  const std::vector<LabeledPatch>& val_pool,
                  const TrainConfig& config);

/// Fraction of query points over n_episodes sampled episodes whose argmax
/// class probability is the true class. n_way is clipped down to the number
/// of eligible classes (minimum 2; fewer is an error).
double validation_accuracy(const EmbeddingModel& model,
                           const DistanceKernel& kernel,
                           const std::vector<LabeledPatch>& val_pool,
                           const EpisodeSpec& spec, int n_episodes, Rng& rng);

/// Trains the two-member logistic ensemble: out_dims members with seeds
/// seed, seed + 1, ... Each member trains independently.
std::pair<EnsembleModel, std::vector<TrainReport>> train_ensemble(
    const std::vector<LabeledPatch>& train_pool,
    const std::vector<LabeledPatch>& val_pool, const TrainConfig& config,
    const std::vector<int>& out_dims = {1024, 256});

/// Checkpoint JSON: {"A","format_version","in_dim","kernel","kind","out_dim"}
/// with A row-major and doubles serialised exactly (shortest round-trip
/// decimal form). save -> load -> save is byte-identical.
void save_checkpoint(const EmbeddingModel& model, const DistanceKernel& kernel,
                     const std::string& path);
std::pair<EmbeddingModel, DistanceKernel> load_checkpoint(
    const std::string& path);

/// Ensemble checkpoints wrap the member documents:
/// {"format_version","kind":"ensemble","members":[...]}.
/// load_any_checkpoint accepts both layouts; single models load as a
/// one-member bundle.
void save_ensemble_checkpoint(const EnsembleModel& ensemble,
                              const std::string& path);
EnsembleModel load_any_checkpoint(const std::string& path);

}  // namespace fsed
