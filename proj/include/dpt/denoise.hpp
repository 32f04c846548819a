#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dpt/encoder.hpp"
#include "dpt/graphs.hpp"

namespace dpt {

struct RemovedEdge {
    int user = 0;
    int item = 0;
    int behavior = 0;
    double score = 0.0;
};

// Auxiliary edges pruned by score, target edges untouched.
struct DenoisedGraph {
    MultiBehaviorGraph graph;
    std::vector<RemovedEdge> removed;
};

// sigma((h_u . e_b) * (h_i . e_b)) for one (user, item) pair under one
// behavior; e_b is 1 x d. Strictly inside (0, 1).
double decode_score(const Tensor& h_user, int user, const Tensor& h_item, int item,
                    const Tensor& e_b);

// One behavior's reconstruction batch: uniformly drawn positive edges plus
// round(k_neg * num_pos) uniformly drawn non-edge pairs. k_neg defaults to 1
// negative per positive and may be fractional.
struct ReconBatch {
    std::vector<int> pos_users, pos_items;
    std::vector<int> neg_users, neg_items;
};

ReconBatch sample_recon_batch(const BipartiteGraph& g, std::size_t num_pos, double k_neg,
                              Rng& rng);

// Mean binary cross-entropy of the decoder over each behavior's batch,
// averaged over behaviors with a nonempty batch. Probabilities are clipped to
// [1e-12, 1 - 1e-12]. Throws if every batch is empty.
Var reconstruction_loss(Tape& tape, ParameterStore& store, const EncodeVars& vars,
                        const std::vector<ReconBatch>& batches);

// Remove every auxiliary edge whose decode score falls below 0.5 - delta;
// copy the target graph verbatim. delta must lie in (0, 0.5).
DenoisedGraph binarize_and_prune(const MultiBehaviorGraph& mbg, const Representations& reps,
                                 const ParameterStore& store, double delta);

// Report format: `user\titem\tbehavior\tscore` per removed edge, raw labels.
void write_removed_edges(const std::vector<RemovedEdge>& removed, const Dataset& ds,
                         std::ostream& out);
void write_removed_edges_file(const std::vector<RemovedEdge>& removed, const Dataset& ds,
                              const std::string& path);
std::vector<RemovedEdge> load_removed_edges(std::istream& in, const Dataset& ds);
std::vector<RemovedEdge> load_removed_edges_file(const std::string& path, const Dataset& ds);

} // namespace dpt
