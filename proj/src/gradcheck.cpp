#include "dpt/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>

#include "dpt/denoise.hpp"
#include "dpt/encoder.hpp"
#include "dpt/graphs.hpp"
#include "dpt/pipeline.hpp"
#include "dpt/rng.hpp"
#include "dpt/synthetic.hpp"

namespace dpt {

namespace {

struct Fixture {
    MultiBehaviorGraph mbg;
    EncoderGraphs graphs;
    EncoderConfig enc;
    std::vector<BprBatch> bpr;
    std::vector<ReconBatch> rec;
};

Fixture make_fixture(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.num_users = 6;
    spec.num_items = 8;
    spec.num_behaviors = 3;
    spec.blocks = 2;
    spec.aux_density = 0.5;
    spec.target_density = 0.9;
    spec.noise_rate = 0.15;
    spec.behavior_labels = {"aux1", "aux2", "target"};
    const SyntheticResult synth = generate_synthetic(spec, seed);

    Fixture f;
    f.mbg = build_multi_behavior_graph(synth.dataset);
    const UserRelationGraph urg =
        normalize_relation_weights(build_user_relation_graph(f.mbg, 10));
    const ItemRelationGraph irg =
        normalize_relation_weights(build_item_relation_graph(synth.dataset, 10, false));
    f.graphs = build_encoder_graphs(f.mbg, &urg, &irg);

    f.enc.layers = 2;
    f.enc.dim = 4;
    f.enc.keep_prob = 1.0; // keeps both finite-difference passes on one path
    f.enc.include_layer0 = false;

    Rng rng(derive_seed(seed, "gradcheck/batch"));
    for (int k = 0; k < f.mbg.num_behaviors(); ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const auto edges = edge_list(f.mbg.behaviors[kk]);
        f.bpr.push_back(sample_bpr_triples(f.mbg.behaviors[kk], edges, 12, rng));
        f.rec.push_back(sample_recon_batch(f.mbg.behaviors[kk], 12, 1, rng));
    }
    return f;
}

// Same assembly as stage-1 training with lambda_rec = 1, but over fixed
// batches so every evaluation sees the identical objective.
double objective(ParameterStore& store, const Fixture& f, bool with_backward) {
    Tape tape;
    EncodeOptions eopt;
    eopt.training = true;
    const EncodeVars vars = encode(tape, store, f.graphs, f.enc, eopt);

    Var bpr{};
    int present = 0;
    for (std::size_t k = 0; k < f.bpr.size(); ++k) {
        if (f.bpr[k].users.empty()) continue;
        const Var term = bpr_loss(tape, vars.user_fused, vars.item_fused, f.bpr[k]);
        bpr = present == 0 ? term : tape.add(bpr, term);
        ++present;
    }
    if (present == 0) throw std::runtime_error("gradient check: empty ranking batches");
    Var total = tape.affine(bpr, 1.0 / static_cast<double>(present), 0.0);
    total = tape.add(total, reconstruction_loss(tape, store, vars, f.rec));
    if (with_backward) tape.backward(total);
    return tape.scalar_value(total);
}

} // namespace

GradCheckReport run_gradient_check(std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const Fixture f = make_fixture(seed);

    ParameterStore store;
    init_encoder_params(store, f.mbg.num_users, f.mbg.num_items, f.mbg.num_behaviors(),
                        f.enc, seed);

    store.zero_grad();
    objective(store, f, true);
    std::map<std::string, std::vector<double>> analytic;
    for (const auto& [name, p] : store) analytic[name] = p.grad.data;

    const double h = 1e-6;
    GradCheckReport rep;
    for (auto& [name, p] : store) {
        if (p.frozen) continue;
        double param_max = 0.0;
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            const double orig = p.value.data[i];
            p.value.data[i] = orig + h;
            const double fp = objective(store, f, false);
            p.value.data[i] = orig - h;
            const double fm = objective(store, f, false);
            p.value.data[i] = orig;

            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[name][i];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            const double err = std::fabs(a - numeric) / denom;
            ++rep.checked;
            param_max = std::max(param_max, err);
            if (err > rep.max_rel_err) {
                rep.max_rel_err = err;
                rep.worst_param = name;
                rep.worst_index = i;
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
        }
        rep.per_param.emplace_back(name, param_max);
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

} // namespace dpt
