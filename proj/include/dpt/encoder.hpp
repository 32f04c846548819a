#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpt/graphs.hpp"
#include "dpt/params.hpp"
#include "dpt/tape.hpp"

namespace dpt {

struct EncoderConfig {
    int layers = 3;         // propagation depth L
    int dim = 16;           // embedding width d
    double keep_prob = 0.8; // dropout keep probability on fused layer outputs
    bool include_layer0 = false; // also concatenate the layer-0 embeddings
};

enum class PromptVariant { Add, Shallow, Projection };

PromptVariant parse_prompt_variant(const std::string& name);
std::string to_string(PromptVariant v);

// Sparse operators the encoder consumes, derived once per training run. Each
// operator is stored together with its transpose for the backward pass.
//
// ui/iu: unit-weight interaction adjacency per behavior. uu: normalized user
// relation weights (row u holds the weights aggregated into u). item_in: row j
// holds the normalized weights of edges i->j; item_out is its transpose and
// doubles as the outgoing aggregation operator.
struct EncoderGraphs {
    int num_users = 0;
    int num_items = 0;
    int num_behaviors = 0;
    bool has_relations = false;
    std::vector<SpMatPtr> ui, iu;
    std::vector<SpMatPtr> uu, uu_t;
    std::vector<SpMatPtr> item_in, item_out;
};

// Relation graphs may be omitted (urg/irg null) for the interaction-only
// encoder used after stage 1. Relation graphs must be normalized already.
EncoderGraphs build_encoder_graphs(const MultiBehaviorGraph& mbg,
                                   const UserRelationGraph* urg,
                                   const ItemRelationGraph* irg);

// "enc/l01", "enc/l02", ... (1-based, zero padded so store order follows
// layer order).
std::string layer_prefix(int layer);

// Creates every trainable tensor of the model under its documented name:
// embed/{user,item,behavior_aux,behavior_target}, per layer conv scalars,
// attention matrices, gate vectors, and readout/{user,item}.
void init_encoder_params(ParameterStore& store, int num_users, int num_items,
                         int num_behaviors, const EncoderConfig& cfg, std::uint64_t seed);

// Behavior embedding as a 1 x d tape node (aux table row or the target row).
Var behavior_embedding(Tape& tape, ParameterStore& store, int behavior, int num_behaviors);

// Prompt vector e_p: the mean of all K behavior embeddings, 1 x d. Gradient
// reaches whichever behavior tables are unfrozen.
Var prompt_vector(Tape& tape, ParameterStore& store, int num_behaviors);

struct EncodeOptions {
    bool training = false;
    Rng* dropout_rng = nullptr; // required when training with keep_prob < 1
    const PromptVariant* prompt = nullptr; // nullptr: no prompt injection
};

struct EncodeVars {
    std::vector<Var> user_behavior; // per behavior, |U| x d
    std::vector<Var> item_behavior; // per behavior, |I| x d
    Var user_fused;                 // |U| x d
    Var item_fused;                 // |I| x d
};

// One full forward pass: L layers of interaction aggregation (plus relation
// aggregation and gated fusion when the graphs carry relations, plus prompt
// injection on the target branch when requested), then the shared readout.
EncodeVars encode(Tape& tape, ParameterStore& store, const EncoderGraphs& graphs,
                  const EncoderConfig& cfg, const EncodeOptions& opt);

struct Representations {
    std::vector<Tensor> user_behavior, item_behavior;
    Tensor user_fused, item_fused;
};

// Inference shortcut: run encode on a throwaway tape and copy the outputs.
Representations compute_representations(ParameterStore& store, const EncoderGraphs& graphs,
                                        const EncoderConfig& cfg,
                                        const PromptVariant* prompt = nullptr);

} // namespace dpt
