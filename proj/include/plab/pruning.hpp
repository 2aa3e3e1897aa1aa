#pragma once

#include "plab/engine.hpp"
#include "plab/network.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace plab {

enum class Criterion { Snip, Grasp };

const char* criterion_name(Criterion c);
Criterion criterion_from_name(const std::string& s);

// Per-prunable-weight importance scores, laid out like the weight tensors.
struct ScoreMap {
    std::vector<Tensor> s; // aligned with ParameterSet::layers
    Criterion tag = Criterion::Snip;

    std::size_t count() const;
    std::vector<double> flatten() const;
};

struct SparsityTarget {
    double sparsity = 0.0;   // fraction pruned, in [0,1)
    std::size_t kappa = 0;   // kept count; derived when 0

    static SparsityTarget from_sparsity(double s) { return {s, 0}; }
    static SparsityTarget from_kappa(std::size_t k) { return {-1.0, k}; }
    std::size_t resolve(std::size_t total) const;
};

// s(theta_j) = |dL/dtheta_j * theta_j|, computed at dense initialization.
// loss_scale multiplies the loss (and so every gradient) by a constant c>0.
ScoreMap snip_scores(const NetworkSpec& spec, const ParameterSet& params,
                     const LabeledBatch& batch, double loss_scale = 1.0);

// s(theta_j) = -theta_j * (H g)_j with g the batch-loss gradient.
// logit_temperature > 0 computes g and Hg under the softened loss
// xent(logits / T) for comparison runs; 0 (the default) disables it.
ScoreMap grasp_scores(const NetworkSpec& spec, const ParameterSet& params,
                      const LabeledBatch& batch, double logit_temperature = 0.0);

// Elementwise sum; used when scoring accumulates over several batches.
ScoreMap accumulate_scores(const ScoreMap& a, const ScoreMap& b);

struct MaskResult {
    Mask mask;
    double threshold = 0.0; // score of the smallest kept entry
};

// Global top-kappa keep; ties broken by ascending flat index (smaller wins).
MaskResult top_kappa_mask(const ScoreMap& scores, const SparsityTarget& target);

struct LayerStat {
    int layer = 0;
    std::string kind;
    std::size_t kept = 0, total = 0;
    bool collapsed = false;
};

struct LayerStatsReport {
    std::vector<LayerStat> layers;
    int collapsed_count = 0;
};

LayerStatsReport layer_stats(const Mask& mask, const NetworkSpec& spec);

struct TrainSchedule {
    int epochs = 40;
    int batch = 64;
    double lr = 0.1;
    std::vector<int> decay_epochs = {20, 30};
    double decay_factor = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    bool augment = true;
};

struct LabeledImageSet; // datasets.hpp

// SGD with momentum; masked weights are pinned to exactly zero every step.
ParameterSet finetune(const NetworkSpec& spec, const ParameterSet& params, const Mask& mask,
                      const LabeledImageSet& train, const TrainSchedule& schedule,
                      std::uint64_t seed);

} // namespace plab
