#include "dpt/encoder.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace dpt {

namespace {

SpMatPtr make_sp(SpMat m) { return std::make_shared<const SpMat>(std::move(m)); }

SpMat bipartite_to_sp(const BipartiteGraph& g) {
    std::vector<std::tuple<int, int, double>> trip;
    trip.reserve(g.num_edges());
    for (int u = 0; u < g.num_users; ++u) {
        for (int i : g.user_items[static_cast<std::size_t>(u)]) trip.emplace_back(u, i, 1.0);
    }
    return SpMat::from_triplets(static_cast<std::size_t>(g.num_users),
                                static_cast<std::size_t>(g.num_items), std::move(trip));
}

SpMat adjacency_to_sp(const std::vector<std::vector<WeightedEdge>>& adj, std::size_t n) {
    std::vector<std::tuple<int, int, double>> trip;
    for (std::size_t r = 0; r < adj.size(); ++r) {
        for (const auto& e : adj[r]) trip.emplace_back(static_cast<int>(r), e.neighbor, e.weight);
    }
    return SpMat::from_triplets(n, n, std::move(trip));
}

} // namespace

PromptVariant parse_prompt_variant(const std::string& name) {
    if (name == "add") return PromptVariant::Add;
    if (name == "shallow") return PromptVariant::Shallow;
    if (name == "projection") return PromptVariant::Projection;
    throw std::invalid_argument("unknown prompt variant '" + name +
                                "' (expected add, shallow, or projection)");
}

std::string to_string(PromptVariant v) {
    switch (v) {
    case PromptVariant::Add: return "add";
    case PromptVariant::Shallow: return "shallow";
    case PromptVariant::Projection: return "projection";
    }
    return "?";
}

EncoderGraphs build_encoder_graphs(const MultiBehaviorGraph& mbg,
                                   const UserRelationGraph* urg,
                                   const ItemRelationGraph* irg) {
    if ((urg == nullptr) != (irg == nullptr)) {
        throw std::invalid_argument("build_encoder_graphs: supply both relation graphs or neither");
    }
    EncoderGraphs out;
    out.num_users = mbg.num_users;
    out.num_items = mbg.num_items;
    out.num_behaviors = mbg.num_behaviors();
    out.has_relations = urg != nullptr;
    for (int b = 0; b < mbg.num_behaviors(); ++b) {
        SpMat a = bipartite_to_sp(mbg.behaviors[static_cast<std::size_t>(b)]);
        SpMat at = a.transposed();
        out.ui.push_back(make_sp(std::move(a)));
        out.iu.push_back(make_sp(std::move(at)));
        if (out.has_relations) {
            SpMat uu = adjacency_to_sp(urg->adjacency[static_cast<std::size_t>(b)],
                                       static_cast<std::size_t>(mbg.num_users));
            out.uu_t.push_back(make_sp(uu.transposed()));
            out.uu.push_back(make_sp(std::move(uu)));
            SpMat in = adjacency_to_sp(irg->in_edges[static_cast<std::size_t>(b)],
                                       static_cast<std::size_t>(mbg.num_items));
            out.item_out.push_back(make_sp(in.transposed()));
            out.item_in.push_back(make_sp(std::move(in)));
        }
    }
    return out;
}

std::string layer_prefix(int layer) {
    return "enc/l" + std::string(layer < 10 ? "0" : "") + std::to_string(layer);
}

void init_encoder_params(ParameterStore& store, int num_users, int num_items,
                         int num_behaviors, const EncoderConfig& cfg, std::uint64_t seed) {
    if (cfg.layers < 1) throw std::invalid_argument("encoder: layers must be >= 1");
    if (cfg.dim < 1) throw std::invalid_argument("encoder: dim must be >= 1");
    if (num_behaviors < 2) throw std::invalid_argument("encoder: need at least 2 behaviors");
    const auto d = static_cast<std::size_t>(cfg.dim);
    store.create_xavier("embed/user", static_cast<std::size_t>(num_users), d, seed);
    store.create_xavier("embed/item", static_cast<std::size_t>(num_items), d, seed);
    store.create_xavier("embed/behavior_aux", static_cast<std::size_t>(num_behaviors - 1), d,
                        seed);
    store.create_xavier("embed/behavior_target", 1, d, seed);
    for (int l = 1; l <= cfg.layers; ++l) {
        const std::string pre = layer_prefix(l);
        for (const char* side : {"conv_user", "conv_item"}) {
            store.create_xavier(pre + "/" + side + "/w_neighbor", 1, 1, seed);
            store.create_xavier(pre + "/" + side + "/w_self", 1, 1, seed);
            store.create(pre + "/" + side + "/bias", 1, 1);
        }
        store.create_xavier(pre + "/attn_in", d, d, seed);
        store.create_xavier(pre + "/attn_out", d, d, seed);
        // Gates start at zero so beta = 0.5 and the fuse multiplier is 1; a
        // random gate can pin beta at its clamp floor and blow the relation
        // branch up by 1/beta - 1 before training has any say.
        store.create(pre + "/gate_user", 2 * d, 1);
        store.create(pre + "/gate_item", 2 * d, 1);
    }
    const std::size_t concat = d * static_cast<std::size_t>(cfg.layers + (cfg.include_layer0 ? 1 : 0));
    store.create_xavier("readout/user", concat, d, seed);
    store.create_xavier("readout/item", concat, d, seed);
}

Var behavior_embedding(Tape& tape, ParameterStore& store, int behavior, int num_behaviors) {
    if (behavior < 0 || behavior >= num_behaviors) {
        throw std::out_of_range("behavior_embedding: behavior out of range");
    }
    if (behavior == num_behaviors - 1) {
        return tape.leaf(store.get("embed/behavior_target"));
    }
    return tape.gather_rows(tape.leaf(store.get("embed/behavior_aux")), {behavior});
}

Var prompt_vector(Tape& tape, ParameterStore& store, int num_behaviors) {
    const double inv_k = 1.0 / static_cast<double>(num_behaviors);
    Var aux = tape.leaf(store.get("embed/behavior_aux"));
    Var tgt = tape.leaf(store.get("embed/behavior_target"));
    Tensor weights(1, static_cast<std::size_t>(num_behaviors - 1), inv_k);
    Var sum_aux = tape.matmul(tape.constant(std::move(weights)), aux);
    return tape.add(sum_aux, tape.affine(tgt, inv_k, 0.0));
}

namespace {

// out = w_neighbor * aggregated + w_self * self + bias, the 2x1 filter applied
// coordinate-wise.
Var pair_conv(Tape& tape, ParameterStore& store, const std::string& name, Var aggregated,
              Var self) {
    Var f1 = tape.leaf(store.get(name + "/w_neighbor"));
    Var f2 = tape.leaf(store.get(name + "/w_self"));
    Var bias = tape.leaf(store.get(name + "/bias"));
    return tape.add_scalar(tape.add(tape.scale_by(aggregated, f1), tape.scale_by(self, f2)),
                           bias);
}

// out = a + ((1 - beta) / beta) * b with beta = sigmoid([a || b] * gate).
Var gated_fuse(Tape& tape, ParameterStore& store, const std::string& gate_name, Var a, Var b) {
    Var gate = tape.leaf(store.get(gate_name));
    Var beta = tape.clamp(tape.sigmoid(tape.matmul(tape.concat_cols({a, b}), gate)), 1e-4,
                          1.0 - 1e-4);
    Var mix = tape.affine(tape.reciprocal(beta), 1.0, -1.0);
    return tape.add(a, tape.scale_rows(b, mix));
}

} // namespace

EncodeVars encode(Tape& tape, ParameterStore& store, const EncoderGraphs& graphs,
                  const EncoderConfig& cfg, const EncodeOptions& opt) {
    const int K = graphs.num_behaviors;
    const int L = cfg.layers;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    const bool drop = opt.training && cfg.keep_prob < 1.0;
    if (drop && opt.dropout_rng == nullptr) {
        throw std::invalid_argument("encode: training with dropout needs an rng");
    }

    Var base_u = tape.leaf(store.get("embed/user"));
    Var base_i = tape.leaf(store.get("embed/item"));
    Var ep{}, ep_gain{};
    if (opt.prompt != nullptr) {
        ep = prompt_vector(tape, store, K);
        if (*opt.prompt == PromptVariant::Projection) ep_gain = tape.affine(ep, 1.0, 1.0);
    }

    // [l][k] behavior-specific outputs and per-layer fused outputs.
    std::vector<std::vector<Var>> beh_u(static_cast<std::size_t>(L)),
        beh_i(static_cast<std::size_t>(L));
    std::vector<Var> fused_u, fused_i;
    Var prev_u = base_u;
    Var prev_i = base_i;
    for (int l = 1; l <= L; ++l) {
        const std::string pre = layer_prefix(l);
        auto& outs_u = beh_u[static_cast<std::size_t>(l - 1)];
        auto& outs_i = beh_i[static_cast<std::size_t>(l - 1)];
        for (int k = 0; k < K; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            Var zu = tape.spmm(graphs.ui[kk], graphs.iu[kk], prev_i);
            Var zi = tape.spmm(graphs.iu[kk], graphs.ui[kk], prev_u);
            Var ou = zu;
            Var oi = zi;
            if (graphs.has_relations) {
                Var su = tape.spmm(graphs.uu[kk], graphs.uu_t[kk], prev_u);
                Var ru = pair_conv(tape, store, pre + "/conv_user", su, prev_u);

                Var w_in = tape.leaf(store.get(pre + "/attn_in"));
                Var w_out = tape.leaf(store.get(pre + "/attn_out"));
                Var s_in = tape.affine(tape.rows_dot(tape.matmul(prev_i, w_in), prev_i),
                                       inv_sqrt_d, 0.0);
                Var s_out = tape.affine(tape.rows_dot(tape.matmul(prev_i, w_out), prev_i),
                                        inv_sqrt_d, 0.0);
                // Two-way softmax over {in, out}.
                Var alpha_in = tape.sigmoid(tape.sub(s_in, s_out));
                Var alpha_out = tape.affine(alpha_in, -1.0, 1.0);
                Var agg_in = tape.spmm(graphs.item_in[kk], graphs.item_out[kk], prev_i);
                Var agg_out = tape.spmm(graphs.item_out[kk], graphs.item_in[kk], prev_i);
                Var neigh = tape.add(tape.scale_rows(agg_in, alpha_in),
                                     tape.scale_rows(agg_out, alpha_out));
                Var ri = pair_conv(tape, store, pre + "/conv_item", neigh, prev_i);

                ou = gated_fuse(tape, store, pre + "/gate_user", zu, ru);
                oi = gated_fuse(tape, store, pre + "/gate_item", zi, ri);
            }
            if (opt.prompt != nullptr && k == K - 1 &&
                (*opt.prompt != PromptVariant::Shallow || l == 1)) {
                if (*opt.prompt == PromptVariant::Projection) {
                    ou = tape.mul_rowvec(ou, ep_gain);
                    oi = tape.mul_rowvec(oi, ep_gain);
                } else {
                    ou = tape.add_rowvec(ou, ep);
                    oi = tape.add_rowvec(oi, ep);
                }
            }
            outs_u.push_back(ou);
            outs_i.push_back(oi);
        }
        Var fu = outs_u[0];
        Var fi = outs_i[0];
        for (int k = 1; k < K; ++k) {
            fu = tape.add(fu, outs_u[static_cast<std::size_t>(k)]);
            fi = tape.add(fi, outs_i[static_cast<std::size_t>(k)]);
        }
        fu = tape.affine(fu, 1.0 / K, 0.0);
        fi = tape.affine(fi, 1.0 / K, 0.0);
        if (drop) {
            fu = tape.dropout(fu, cfg.keep_prob, true, *opt.dropout_rng);
            fi = tape.dropout(fi, cfg.keep_prob, true, *opt.dropout_rng);
        }
        fused_u.push_back(fu);
        fused_i.push_back(fi);
        prev_u = fu;
        prev_i = fi;
    }

    Var w_u = tape.leaf(store.get("readout/user"));
    Var w_i = tape.leaf(store.get("readout/item"));
    auto readout = [&](std::vector<Var> layers, Var layer0, Var w) {
        if (cfg.include_layer0) layers.insert(layers.begin(), layer0);
        return tape.relu(tape.matmul(tape.concat_cols(layers), w));
    };

    EncodeVars out;
    for (int k = 0; k < K; ++k) {
        std::vector<Var> lu, li;
        for (int l = 0; l < L; ++l) {
            lu.push_back(beh_u[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)]);
            li.push_back(beh_i[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)]);
        }
        out.user_behavior.push_back(readout(std::move(lu), base_u, w_u));
        out.item_behavior.push_back(readout(std::move(li), base_i, w_i));
    }
    out.user_fused = readout(fused_u, base_u, w_u);
    out.item_fused = readout(fused_i, base_i, w_i);
    return out;
}

Representations compute_representations(ParameterStore& store, const EncoderGraphs& graphs,
                                        const EncoderConfig& cfg, const PromptVariant* prompt) {
    Tape tape;
    EncodeOptions opt;
    opt.training = false;
    opt.prompt = prompt;
    EncodeVars vars = encode(tape, store, graphs, cfg, opt);
    Representations reps;
    for (std::size_t k = 0; k < vars.user_behavior.size(); ++k) {
        reps.user_behavior.push_back(tape.value(vars.user_behavior[k]));
        reps.item_behavior.push_back(tape.value(vars.item_behavior[k]));
    }
    reps.user_fused = tape.value(vars.user_fused);
    reps.item_fused = tape.value(vars.item_fused);
    return reps;
}

} // namespace dpt
