// Three-stage training orchestration: ranking loss, trainable-parameter
// budgets, stage freezing, determinism, and checkpoint serialization.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "dpt/checkpoint.hpp"
#include "dpt/pipeline.hpp"
#include "oracles.hpp"

using namespace dpt;

namespace {

BipartiteGraph make_bipartite(int behavior, int nu, int ni,
                              const std::vector<std::pair<int, int>>& edges) {
    BipartiteGraph g;
    g.behavior = behavior;
    g.num_users = nu;
    g.num_items = ni;
    g.user_items.assign((std::size_t)nu, {});
    g.item_users.assign((std::size_t)ni, {});
    for (auto [u, i] : edges) {
        g.user_items[(std::size_t)u].push_back(i);
        g.item_users[(std::size_t)i].push_back(u);
    }
    for (auto& v : g.user_items) std::sort(v.begin(), v.end());
    for (auto& v : g.item_users) std::sort(v.begin(), v.end());
    return g;
}

bool same_bits(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

bool stores_identical(const ParameterStore& a, const ParameterStore& b) {
    if (a.size() != b.size()) return false;
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        if (ia->second.frozen != ib->second.frozen) return false;
        if (!same_bits(ia->second.value, ib->second.value)) return false;
    }
    return true;
}

// Shared small training fixture: dataset, raw relation graphs, encoder shape.
struct Fixture {
    Dataset ds;
    MultiBehaviorGraph mbg;
    UserRelationGraph urg;
    ItemRelationGraph irg;
    EncoderConfig enc;
    StageConfig stage;
};

Fixture make_fixture(std::uint64_t seed) {
    Fixture f;
    Rng rng(seed);
    f.ds = testsup::random_dataset(rng, 20, 20, 3, 0.25);
    f.mbg = build_multi_behavior_graph(f.ds);
    f.urg = build_user_relation_graph(f.mbg, 5);
    f.irg = build_item_relation_graph(f.ds, 5);
    f.enc.layers = 2;
    f.enc.dim = 4;
    f.enc.keep_prob = 1.0;
    f.stage.epochs = 8;
    f.stage.batch = 256;
    f.stage.learning_rate = 0.01;
    return f;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("pairwise ranking loss pinned values") {
    CHECK(bpr_loss_value(1.7, 1.7) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bpr_loss_value(2.0, 0.0) == doctest::Approx(0.1269).epsilon(1e-3));
    CHECK(bpr_loss_value(2.0, 0.0) == doctest::Approx(-std::log(1.0 / (1.0 + std::exp(-2.0))))
                                          .epsilon(1e-12));
    // Strictly decreasing in the score difference.
    double prev = bpr_loss_value(-3.0, 0.0);
    for (double diff : {-1.0, 0.0, 0.5, 2.0, 5.0}) {
        const double cur = bpr_loss_value(diff, 0.0);
        CHECK(cur < prev);
        prev = cur;
    }
    // The sigmoid clip keeps hopeless margins finite.
    CHECK(std::isfinite(bpr_loss_value(-1000.0, 0.0)));
    CHECK(bpr_loss_value(-1000.0, 0.0) == doctest::Approx(-std::log(1e-12)).epsilon(1e-6));
}

TEST_CASE("batch ranking loss equals the mean of scalar losses") {
    Tape tape;
    ParameterStore store;
    Parameter& pu = store.create("hu", 3, 2);
    Parameter& pi = store.create("hi", 4, 2);
    const std::vector<std::vector<double>> hu{{1.0, 0.5}, {-0.5, 2.0}, {0.3, 0.3}};
    const std::vector<std::vector<double>> hi{{2.0, 1.0}, {0.0, 1.0}, {1.0, -1.0}, {0.5, 0.5}};
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 2; ++c) pu.value.at(r, c) = hu[r][c];
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 2; ++c) pi.value.at(r, c) = hi[r][c];

    BprBatch batch;
    batch.users = {0, 2};
    batch.pos = {1, 3};
    batch.neg = {2, 0};
    auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
        return a[0] * b[0] + a[1] * b[1];
    };
    const double want = (bpr_loss_value(dot(hu[0], hi[1]), dot(hu[0], hi[2])) +
                         bpr_loss_value(dot(hu[2], hi[3]), dot(hu[2], hi[0]))) /
                        2.0;
    Var loss = bpr_loss(tape, tape.leaf(pu), tape.leaf(pi), batch);
    CHECK(tape.value(loss).data[0] == doctest::Approx(want).epsilon(1e-12));

    tape.backward(loss);
    double grad_mass = 0.0;
    for (double g : pu.grad.data) grad_mass += std::abs(g);
    CHECK(grad_mass > 0.0);

    BprBatch empty;
    CHECK_THROWS_AS((void)bpr_loss(tape, tape.leaf(pu), tape.leaf(pi), empty),
                    std::invalid_argument);
}

TEST_CASE("trainable budgets per stage") {
    EncoderConfig cfg;
    cfg.layers = 3;
    cfg.dim = 16;
    CHECK(count_trainable(2, 999, 999, 4, cfg) == 1536);
    cfg.dim = 32;
    CHECK(count_trainable(2, 999, 999, 4, cfg) == 6144);
    CHECK(count_trainable(3, 999, 999, 4, cfg) == 32);

    // Closed forms across the documented shapes. |U| + |I| > 2Ld here, so the
    // late-stage budget must undercut the embedding tables.
    for (auto [L, d] : {std::pair{2, 8}, std::pair{3, 16}, std::pair{3, 32}}) {
        cfg.layers = L;
        cfg.dim = d;
        const std::size_t U = 400, I = 500, K = 4;
        const auto dd = (std::size_t)d;
        const auto LL = (std::size_t)L;
        CHECK(count_trainable(1, (int)U, (int)I, (int)K, cfg) ==
              (U + I + K) * dd + LL * (2 * dd * dd + 4 * dd + 6) + 2 * (LL * dd) * dd);
        CHECK(count_trainable(2, (int)U, (int)I, (int)K, cfg) == 2 * LL * dd * dd);
        CHECK(count_trainable(3, (int)U, (int)I, (int)K, cfg) == dd);
        // The late-stage budget is tiny next to the embedding tables.
        CHECK(count_trainable(2, (int)U, (int)I, (int)K, cfg) < (U + I) * dd);
    }
    CHECK_THROWS_AS((void)count_trainable(4, 1, 1, 2, cfg), std::invalid_argument);

    // Live unfrozen counts match the closed forms stage by stage.
    cfg.layers = 2;
    cfg.dim = 8;
    ParameterStore store;
    init_encoder_params(store, 20, 22, 3, cfg, 11);
    CHECK(store.trainable_entries() == count_trainable(1, 20, 22, 3, cfg));
    store.freeze_all();
    store.reinit_xavier("readout/user", 5);
    store.reinit_xavier("readout/item", 5);
    CHECK(store.trainable_entries() == count_trainable(2, 20, 22, 3, cfg));
    store.freeze_all();
    store.set_frozen("embed/behavior_target", false);
    CHECK(store.trainable_entries() == count_trainable(3, 20, 22, 3, cfg));

    // include_layer0 widens the readout rows and only stages 1-2 notice.
    cfg.include_layer0 = true;
    CHECK(count_trainable(2, 20, 22, 3, cfg) == 2 * 3 * 8 * 8);
    CHECK(count_trainable(3, 20, 22, 3, cfg) == 8);
}

TEST_CASE("negative sampling avoids edges and replays by seed") {
    BipartiteGraph g = make_bipartite(0, 2, 3, {{0, 0}, {1, 1}});
    const auto edges = edge_list(g);
    CHECK(edges == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});

    Rng rng(5);
    BprBatch b = sample_bpr_triples(g, edges, 2000, rng);
    REQUIRE(b.users.size() == 2000);
    for (std::size_t n = 0; n < b.users.size(); ++n) {
        CHECK(g.has_edge(b.users[n], b.pos[n]));
        CHECK_FALSE(g.has_edge(b.users[n], b.neg[n]));
    }

    Rng ra(6), rb(6);
    BprBatch x = sample_bpr_triples(g, edges, 50, ra);
    BprBatch y = sample_bpr_triples(g, edges, 50, rb);
    CHECK(x.users == y.users);
    CHECK(x.pos == y.pos);
    CHECK(x.neg == y.neg);
}

TEST_CASE("negative marginals are near uniform") {
    // Single user with one edge out of three items: negatives split over the
    // remaining two. Chi-square with 1 dof, fixed seed.
    BipartiteGraph g = make_bipartite(0, 1, 3, {{0, 0}});
    const auto edges = edge_list(g);
    Rng rng(1234);
    BprBatch b = sample_bpr_triples(g, edges, 100000, rng);
    REQUIRE(b.users.size() == 100000);
    std::size_t n1 = 0, n2 = 0;
    for (int j : b.neg) {
        CHECK(j != 0);
        (j == 1 ? n1 : n2) += 1;
    }
    const double e = 50000.0;
    const double chi2 = ((n1 - e) * (n1 - e) + (n2 - e) * (n2 - e)) / e;
    CHECK(chi2 < 10.83); // p = 0.001 cutoff
}

TEST_CASE("users with no possible negative are skipped") {
    // User 0 interacts with every item; only user 1's triples survive.
    BipartiteGraph g = make_bipartite(0, 2, 3, {{0, 0}, {0, 1}, {0, 2}, {1, 0}});
    Rng rng(9);
    BprBatch b = sample_bpr_triples(g, edge_list(g), 200, rng);
    CHECK(!b.users.empty());
    CHECK(b.users.size() < 200);
    for (int u : b.users) CHECK(u == 1);

    Rng rng2(10);
    CHECK(sample_bpr_triples(g, {}, 10, rng2).users.empty());
}

TEST_CASE("stage 1 trains everything and prunes auxiliary edges") {
    // Seed chosen so the pruning step actually removes a few edges.
    Fixture f = make_fixture(43);
    ParameterStore store;
    Stage1Result r1 = stage1_train(store, f.mbg, f.urg, f.irg, f.enc, f.stage, 43);

    CHECK(r1.train.total_trace.size() == (std::size_t)f.stage.epochs);
    CHECK(r1.train.bpr_trace.size() == (std::size_t)f.stage.epochs);
    CHECK(r1.train.rec_trace.size() == (std::size_t)f.stage.epochs);
    CHECK(r1.train.total_trace.back() < r1.train.total_trace.front());
    for (double v : r1.train.total_trace) CHECK(std::isfinite(v));

    CHECK(store.trainable_entries() ==
          count_trainable(1, f.mbg.num_users, f.mbg.num_items, 3, f.enc));

    // Pruning respects the subset law and never touches the target graph.
    REQUIRE(!r1.denoised.removed.empty());
    for (const auto& e : r1.denoised.removed) {
        CHECK(e.behavior < 2);
        CHECK(f.mbg.behaviors[(std::size_t)e.behavior].has_edge(e.user, e.item));
        CHECK_FALSE(r1.denoised.graph.behaviors[(std::size_t)e.behavior].has_edge(e.user, e.item));
    }
    CHECK(r1.denoised.graph.behaviors[2].num_edges() == f.mbg.behaviors[2].num_edges());

    // A pruned edge can never come back as a ranking positive.
    std::set<std::pair<int, int>> removed0;
    for (const auto& e : r1.denoised.removed)
        if (e.behavior == 0) removed0.insert({e.user, e.item});
    Rng rng(77);
    const auto edges0 = edge_list(r1.denoised.graph.behaviors[0]);
    if (!edges0.empty()) {
        BprBatch b = sample_bpr_triples(r1.denoised.graph.behaviors[0], edges0, 500, rng);
        for (std::size_t n = 0; n < b.users.size(); ++n)
            CHECK(removed0.count({b.users[n], b.pos[n]}) == 0);
    }
}

TEST_CASE("stage 2 trains only freshly re-initialized readouts") {
    Fixture f = make_fixture(43);
    ParameterStore store;
    Stage1Result r1 = stage1_train(store, f.mbg, f.urg, f.irg, f.enc, f.stage, 43);
    ParameterStore before = store;

    TrainResult r2 = stage2_train(store, r1.denoised.graph, f.enc, f.stage, 43);
    CHECK(r2.total_trace.size() == (std::size_t)f.stage.epochs);
    CHECK(r2.total_trace.back() < r2.total_trace.front());
    CHECK(r2.rec_trace.empty());
    CHECK(store.trainable_entries() ==
          count_trainable(2, f.mbg.num_users, f.mbg.num_items, 3, f.enc));

    for (const auto& [name, p] : store) {
        if (name == "readout/user" || name == "readout/item") {
            CHECK_FALSE(p.frozen);
            CHECK_FALSE(same_bits(p.value, before.get(name).value));
        } else {
            // Every long-term table is frozen and bit-identical.
            CHECK(p.frozen);
            CHECK(same_bits(p.value, before.get(name).value));
        }
    }
}

TEST_CASE("stage 3 moves only the target behavior embedding") {
    Fixture f = make_fixture(45);
    ParameterStore store;
    Stage1Result r1 = stage1_train(store, f.mbg, f.urg, f.irg, f.enc, f.stage, 45);
    stage2_train(store, r1.denoised.graph, f.enc, f.stage, 45);
    ParameterStore before = store;

    for (PromptVariant v :
         {PromptVariant::Add, PromptVariant::Shallow, PromptVariant::Projection}) {
        ParameterStore s3 = before;
        StageConfig cfg = f.stage;
        cfg.prompt_variant = v;
        TrainResult r3 = stage3_train(s3, r1.denoised.graph, f.enc, cfg, 45);
        for (double x : r3.total_trace) CHECK(std::isfinite(x));
        CHECK(s3.trainable_entries() == (std::size_t)f.enc.dim);
        for (const auto& [name, p] : s3) {
            if (name == "embed/behavior_target") {
                CHECK_FALSE(p.frozen);
                CHECK_FALSE(same_bits(p.value, before.get(name).value));
            } else {
                CHECK(p.frozen);
                CHECK(same_bits(p.value, before.get(name).value));
            }
        }
    }
}

TEST_CASE("identical configuration replays bit-identical runs") {
    Fixture f = make_fixture(45);
    ParameterStore sa, sb;
    Stage1Result ra = stage1_train(sa, f.mbg, f.urg, f.irg, f.enc, f.stage, 45);
    Stage1Result rb = stage1_train(sb, f.mbg, f.urg, f.irg, f.enc, f.stage, 45);
    CHECK(ra.train.total_trace == rb.train.total_trace);
    CHECK(stores_identical(sa, sb));
    CHECK(ra.denoised.removed.size() == rb.denoised.removed.size());

    stage2_train(sa, ra.denoised.graph, f.enc, f.stage, 45);
    stage2_train(sb, rb.denoised.graph, f.enc, f.stage, 45);
    CHECK(stores_identical(sa, sb));

    stage3_train(sa, ra.denoised.graph, f.enc, f.stage, 45);
    stage3_train(sb, rb.denoised.graph, f.enc, f.stage, 45);
    CHECK(stores_identical(sa, sb));

    // A different seed diverges.
    ParameterStore sc;
    stage1_train(sc, f.mbg, f.urg, f.irg, f.enc, f.stage, 46);
    CHECK_FALSE(stores_identical(sa, sc));
}

TEST_CASE("stage-1 loss splits into ranking plus weighted reconstruction") {
    Fixture f = make_fixture(47);
    f.stage.epochs = 4;
    f.stage.lambda_rec = 2.5;
    ParameterStore store;
    Stage1Result r = stage1_train(store, f.mbg, f.urg, f.irg, f.enc, f.stage, 47);
    for (std::size_t e = 0; e < r.train.total_trace.size(); ++e) {
        CHECK(r.train.total_trace[e] ==
              doctest::Approx(r.train.bpr_trace[e] + 2.5 * r.train.rec_trace[e]).epsilon(1e-9));
    }

    // Without the reconstruction term the traces coincide and rec stays zero.
    Fixture g = make_fixture(47);
    g.stage.epochs = 4;
    g.stage.lambda_rec = 0.0;
    ParameterStore store2;
    Stage1Result r0 = stage1_train(store2, g.mbg, g.urg, g.irg, g.enc, g.stage, 47);
    for (std::size_t e = 0; e < r0.train.total_trace.size(); ++e) {
        CHECK(r0.train.total_trace[e] == r0.train.bpr_trace[e]);
        CHECK(r0.train.rec_trace[e] == 0.0);
    }
}

TEST_CASE("checkpoints round trip and serialize deterministically") {
    namespace fs = std::filesystem;
    const std::string base = (fs::temp_directory_path() / "dpt_ut_ck").string();

    Checkpoint ck;
    ck.stage = 2;
    ck.config_hash = 0x1234abcd5678ef90ull;
    ck.seed = 42;
    ck.denoised_ref = "removed_edges.tsv";
    ck.prompt_variant = "projection";
    ck.loss_trace = {1.5, 0.75, 0.5};
    EncoderConfig enc;
    enc.layers = 2;
    enc.dim = 4;
    init_encoder_params(ck.params, 6, 7, 3, enc, 99);
    ck.params.freeze_all();
    ck.params.set_frozen("readout/user", false);

    write_checkpoint(ck, base + "_a.bin");
    Checkpoint back = read_checkpoint(base + "_a.bin");
    CHECK(back.stage == 2);
    CHECK(back.config_hash == ck.config_hash);
    CHECK(back.seed == 42);
    CHECK(back.denoised_ref == "removed_edges.tsv");
    CHECK(back.prompt_variant == "projection");
    CHECK(back.loss_trace == ck.loss_trace);
    CHECK(stores_identical(back.params, ck.params));
    CHECK_FALSE(back.params.get("readout/user").frozen);
    CHECK(back.params.get("embed/user").frozen);

    // Same checkpoint, same bytes.
    write_checkpoint(ck, base + "_b.bin");
    CHECK(read_file(base + "_a.bin") == read_file(base + "_b.bin"));

    // 32-bit storage halves the payload and stays close in value.
    write_checkpoint(ck, base + "_f32.bin", true);
    CHECK(fs::file_size(base + "_f32.bin") < fs::file_size(base + "_a.bin"));
    Checkpoint f32 = read_checkpoint(base + "_f32.bin");
    const Tensor& a = ck.params.get("embed/user").value;
    const Tensor& b = f32.params.get("embed/user").value;
    REQUIRE(a.same_shape(b));
    for (std::size_t n = 0; n < a.data.size(); ++n)
        CHECK(b.data[n] == doctest::Approx(a.data[n]).epsilon(1e-6));

    // Garbage and missing files are rejected.
    std::ofstream(base + "_junk.bin", std::ios::binary) << "not a checkpoint";
    CHECK_THROWS_AS((void)read_checkpoint(base + "_junk.bin"), std::runtime_error);
    CHECK_THROWS_AS((void)read_checkpoint(base + "_missing.bin"), std::runtime_error);
}
