#include "dpt/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "dpt/optimizer.hpp"

namespace dpt {

namespace {

struct LossTerms {
    double total = 0.0;
    double bpr = 0.0;
    double rec = 0.0;
};

TrainResult run_epochs(int epochs, std::size_t steps, bool track_rec,
                       const std::function<LossTerms()>& step) {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    TrainResult res;
    const auto t0 = std::chrono::steady_clock::now();
    for (int e = 0; e < epochs; ++e) {
        LossTerms acc;
        for (std::size_t s = 0; s < steps; ++s) {
            const LossTerms lt = step();
            acc.total += lt.total;
            acc.bpr += lt.bpr;
            acc.rec += lt.rec;
        }
        const auto inv = 1.0 / static_cast<double>(steps);
        res.total_trace.push_back(acc.total * inv);
        res.bpr_trace.push_back(acc.bpr * inv);
        if (track_rec) res.rec_trace.push_back(acc.rec * inv);
    }
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
    res.seconds_per_epoch = elapsed.count() / static_cast<double>(epochs);
    return res;
}

std::size_t steps_per_epoch(const MultiBehaviorGraph& g, std::size_t batch) {
    std::size_t max_edges = 0;
    for (const auto& bg : g.behaviors) max_edges = std::max(max_edges, bg.num_edges());
    if (batch == 0) throw std::invalid_argument("train: batch must be >= 1");
    return std::max<std::size_t>(1, (max_edges + batch - 1) / batch);
}

void check_trainable(const ParameterStore& store, int stage, std::size_t expected) {
    std::size_t live = 0;
    for (const auto& [name, p] : store) {
        if (!p.frozen) live += p.value.size();
    }
    if (live != expected) {
        throw std::logic_error("stage " + std::to_string(stage) + ": live trainable count " +
                               std::to_string(live) + " != documented " +
                               std::to_string(expected));
    }
}

} // namespace

std::vector<std::pair<int, int>> edge_list(const BipartiteGraph& g) {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(g.num_edges());
    for (int u = 0; u < g.num_users; ++u) {
        for (int i : g.user_items[static_cast<std::size_t>(u)]) edges.emplace_back(u, i);
    }
    return edges;
}

BprBatch sample_bpr_triples(const BipartiteGraph& g,
                            const std::vector<std::pair<int, int>>& edges, std::size_t count,
                            Rng& rng) {
    BprBatch batch;
    if (edges.empty()) return batch;
    bool warned = false;
    for (std::size_t n = 0; n < count; ++n) {
        const auto& [u, i] = edges[rng.uniform_index(edges.size())];
        int j = -1;
        for (int attempt = 0; attempt < 100; ++attempt) {
            const int cand =
                static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(g.num_items)));
            if (!g.has_edge(u, cand)) {
                j = cand;
                break;
            }
        }
        if (j < 0) {
            if (!warned) {
                std::fprintf(stderr,
                             "warning: no negative item found for user %d; skipping triples\n",
                             u);
                warned = true;
            }
            continue;
        }
        batch.users.push_back(u);
        batch.pos.push_back(i);
        batch.neg.push_back(j);
    }
    return batch;
}

double bpr_loss_value(double pos_score, double neg_score) {
    const double p = 1.0 / (1.0 + std::exp(-(pos_score - neg_score)));
    const double clipped = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
    return -std::log(clipped);
}

Var bpr_loss(Tape& tape, Var h_user, Var h_item, const BprBatch& batch) {
    if (batch.users.empty()) throw std::invalid_argument("bpr_loss: empty batch");
    Var u = tape.gather_rows(h_user, batch.users);
    Var i = tape.gather_rows(h_item, batch.pos);
    Var j = tape.gather_rows(h_item, batch.neg);
    Var margin = tape.sub(tape.rows_dot(u, i), tape.rows_dot(u, j));
    Var p = tape.clamp(tape.sigmoid(margin), 1e-12, 1.0 - 1e-12);
    return tape.affine(tape.sum(tape.log(p)), -1.0 / static_cast<double>(batch.users.size()),
                       0.0);
}

std::size_t count_trainable(int stage, int num_users, int num_items, int num_behaviors,
                            const EncoderConfig& cfg) {
    const auto d = static_cast<std::size_t>(cfg.dim);
    const auto L = static_cast<std::size_t>(cfg.layers);
    const std::size_t readout_rows = (L + (cfg.include_layer0 ? 1 : 0)) * d;
    switch (stage) {
    case 1:
        return (static_cast<std::size_t>(num_users) + static_cast<std::size_t>(num_items) +
                static_cast<std::size_t>(num_behaviors)) *
                   d +
               L * (2 * d * d + 4 * d + 6) + 2 * readout_rows * d;
    case 2:
        return 2 * readout_rows * d;
    case 3:
        return d;
    default:
        throw std::invalid_argument("count_trainable: stage must be 1, 2, or 3");
    }
}

Stage1Result stage1_train(ParameterStore& store, const MultiBehaviorGraph& mbg,
                          const UserRelationGraph& urg, const ItemRelationGraph& irg,
                          const EncoderConfig& enc, const StageConfig& cfg,
                          std::uint64_t seed) {
    const int K = mbg.num_behaviors();
    init_encoder_params(store, mbg.num_users, mbg.num_items, K, enc, seed);
    check_trainable(store, 1, count_trainable(1, mbg.num_users, mbg.num_items, K, enc));

    const UserRelationGraph urg_n = normalize_relation_weights(urg);
    const ItemRelationGraph irg_n = normalize_relation_weights(irg);
    const EncoderGraphs graphs = build_encoder_graphs(mbg, &urg_n, &irg_n);

    AdamW opt({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
    Rng sample_rng(derive_seed(seed, "stage1/sample"));
    Rng drop_rng(derive_seed(seed, "stage1/dropout"));
    std::vector<std::vector<std::pair<int, int>>> edges;
    for (const auto& g : mbg.behaviors) edges.push_back(edge_list(g));

    auto step = [&]() -> LossTerms {
        store.zero_grad();
        Tape tape;
        EncodeOptions eopt;
        eopt.training = true;
        eopt.dropout_rng = &drop_rng;
        const EncodeVars vars = encode(tape, store, graphs, enc, eopt);

        Var bpr{};
        int present = 0;
        for (int k = 0; k < K; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            if (edges[kk].empty()) continue;
            const BprBatch b =
                sample_bpr_triples(mbg.behaviors[kk], edges[kk], cfg.batch, sample_rng);
            if (b.users.empty()) continue;
            const Var term = bpr_loss(tape, vars.user_fused, vars.item_fused, b);
            bpr = present == 0 ? term : tape.add(bpr, term);
            ++present;
        }
        if (present == 0) throw std::runtime_error("stage 1: no behavior has edges");
        const Var bpr_mean = tape.affine(bpr, 1.0 / static_cast<double>(present), 0.0);

        Var total = bpr_mean;
        double rec_value = 0.0;
        if (cfg.lambda_rec != 0.0) {
            std::vector<ReconBatch> rec_batches;
            for (int k = 0; k < K; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                rec_batches.push_back(sample_recon_batch(mbg.behaviors[kk],
                                                         edges[kk].empty() ? 0 : cfg.batch,
                                                         cfg.recon_neg_ratio, sample_rng));
            }
            const Var rec = reconstruction_loss(tape, store, vars, rec_batches);
            rec_value = tape.scalar_value(rec);
            total = tape.add(bpr_mean, tape.affine(rec, cfg.lambda_rec, 0.0));
        }
        tape.backward(total);
        opt.step(store);
        return {tape.scalar_value(total), tape.scalar_value(bpr_mean), rec_value};
    };

    Stage1Result out;
    out.train = run_epochs(cfg.epochs, steps_per_epoch(mbg, cfg.batch), true, step);
    const Representations reps = compute_representations(store, graphs, enc);
    out.denoised = binarize_and_prune(mbg, reps, store, cfg.delta);
    return out;
}

namespace {

// Stages 2 and 3 share the loop: interaction-only encoder on the denoised
// graph, ranking loss only. Stage 3 restricts it to the target behavior and
// injects the prompt.
TrainResult late_stage_train(ParameterStore& store, const MultiBehaviorGraph& denoised,
                             const EncoderConfig& enc, const StageConfig& cfg,
                             std::uint64_t seed, int stage) {
    const int K = denoised.num_behaviors();
    const EncoderGraphs graphs = build_encoder_graphs(denoised, nullptr, nullptr);
    AdamW opt({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
    const std::string tag = "stage" + std::to_string(stage);
    Rng sample_rng(derive_seed(seed, tag + "/sample"));
    Rng drop_rng(derive_seed(seed, tag + "/dropout"));
    std::vector<std::vector<std::pair<int, int>>> edges;
    for (const auto& g : denoised.behaviors) edges.push_back(edge_list(g));

    auto step = [&]() -> LossTerms {
        store.zero_grad();
        Tape tape;
        EncodeOptions eopt;
        eopt.training = true;
        eopt.dropout_rng = &drop_rng;
        if (stage == 3) eopt.prompt = &cfg.prompt_variant;
        const EncodeVars vars = encode(tape, store, graphs, enc, eopt);

        Var loss{};
        int present = 0;
        const int first = stage == 3 ? K - 1 : 0;
        for (int k = first; k < K; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            if (edges[kk].empty()) continue;
            const BprBatch b =
                sample_bpr_triples(denoised.behaviors[kk], edges[kk], cfg.batch, sample_rng);
            if (b.users.empty()) continue;
            const Var term = bpr_loss(tape, vars.user_fused, vars.item_fused, b);
            loss = present == 0 ? term : tape.add(loss, term);
            ++present;
        }
        if (present == 0) {
            throw std::runtime_error("stage " + std::to_string(stage) + ": nothing to sample");
        }
        const Var mean = tape.affine(loss, 1.0 / static_cast<double>(present), 0.0);
        tape.backward(mean);
        opt.step(store);
        const double v = tape.scalar_value(mean);
        return {v, v, 0.0};
    };
    return run_epochs(cfg.epochs, steps_per_epoch(denoised, cfg.batch), false, step);
}

} // namespace

TrainResult stage2_train(ParameterStore& store, const MultiBehaviorGraph& denoised,
                         const EncoderConfig& enc, const StageConfig& cfg,
                         std::uint64_t seed) {
    store.freeze_all();
    const std::uint64_t reinit_seed = derive_seed(seed, "stage2");
    store.reinit_xavier("readout/user", reinit_seed);
    store.reinit_xavier("readout/item", reinit_seed);
    check_trainable(store, 2,
                    count_trainable(2, denoised.num_users, denoised.num_items,
                                    denoised.num_behaviors(), enc));
    return late_stage_train(store, denoised, enc, cfg, seed, 2);
}

TrainResult stage3_train(ParameterStore& store, const MultiBehaviorGraph& denoised,
                         const EncoderConfig& enc, const StageConfig& cfg,
                         std::uint64_t seed) {
    store.freeze_all();
    store.set_frozen("embed/behavior_target", false);
    check_trainable(store, 3,
                    count_trainable(3, denoised.num_users, denoised.num_items,
                                    denoised.num_behaviors(), enc));
    return late_stage_train(store, denoised, enc, cfg, seed, 3);
}

} // namespace dpt
