#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dpt/denoise.hpp"
#include "dpt/encoder.hpp"
#include "dpt/graphs.hpp"
#include "dpt/params.hpp"

namespace dpt {

// Per-stage hyperparameters. lambda_rec, delta and recon_neg_ratio apply to
// stage 1 only, prompt_variant to stage 3 only.
struct StageConfig {
    int epochs = 40;
    std::size_t batch = 8192;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double lambda_rec = 1.0;
    double delta = 0.2;
    double recon_neg_ratio = 1.0; // reconstruction negatives per positive
    PromptVariant prompt_variant = PromptVariant::Add;
};

struct TrainResult {
    std::vector<double> total_trace; // per-epoch mean loss
    std::vector<double> bpr_trace;
    std::vector<double> rec_trace;   // stage 1 only, empty otherwise
    double seconds_per_epoch = 0.0;  // wall time, never serialized
};

struct BprBatch {
    std::vector<int> users, pos, neg;
};

// Flattened (user, item) pairs in (user, then item) order.
std::vector<std::pair<int, int>> edge_list(const BipartiteGraph& g);

// Uniform positives from `edges`; per positive one negative item the user has
// no edge to under this graph (rejection sampled, 100 tries, then the triple
// is skipped with a warning).
BprBatch sample_bpr_triples(const BipartiteGraph& g,
                            const std::vector<std::pair<int, int>>& edges, std::size_t count,
                            Rng& rng);

// -log sigmoid(pos - neg), sigmoid clipped to [1e-12, 1 - 1e-12].
double bpr_loss_value(double pos_score, double neg_score);

// Mean pairwise ranking loss of a batch scored by row inner products on the
// given representations.
Var bpr_loss(Tape& tape, Var h_user, Var h_item, const BprBatch& batch);

// Closed-form trainable-entry count per stage. Stage trainers assert this
// against the live unfrozen count.
std::size_t count_trainable(int stage, int num_users, int num_items, int num_behaviors,
                            const EncoderConfig& cfg);

struct Stage1Result {
    TrainResult train;
    DenoisedGraph denoised;
};

// Stage 1: initialize all parameters, jointly minimize the per-behavior
// ranking loss plus lambda_rec times the reconstruction loss on the full
// graph with relation aggregation, then prune.
Stage1Result stage1_train(ParameterStore& store, const MultiBehaviorGraph& mbg,
                          const UserRelationGraph& urg, const ItemRelationGraph& irg,
                          const EncoderConfig& enc, const StageConfig& cfg,
                          std::uint64_t seed);

// Stage 2: freeze everything, re-initialize the readouts, train only them on
// the denoised graph without relation aggregation.
TrainResult stage2_train(ParameterStore& store, const MultiBehaviorGraph& denoised,
                         const EncoderConfig& enc, const StageConfig& cfg,
                         std::uint64_t seed);

// Stage 3: freeze everything except the target behavior embedding; inject the
// prompt and train on the target behavior alone.
TrainResult stage3_train(ParameterStore& store, const MultiBehaviorGraph& denoised,
                         const EncoderConfig& enc, const StageConfig& cfg,
                         std::uint64_t seed);

} // namespace dpt
