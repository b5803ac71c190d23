#pragma once

#include <utility>
#include <vector>

#include "fsed/embedding.hpp"
#include "fsed/objective.hpp"

namespace fsed {

/// A set of independently trained (model, kernel) members. Detection combines
/// members at the probability level; a single-model bundle has one member.
struct EnsembleModel {
    std::vector<std::pair<EmbeddingModel, DistanceKernel>> members;

    bool is_ensemble() const { return members.size() > 1; }
    int in_dim() const { return members.front().first.in_dim(); }
};

}  // namespace fsed
