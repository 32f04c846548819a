#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpt/checkpoint.hpp"
#include "dpt/config.hpp"
#include "dpt/dataset.hpp"
#include "dpt/denoise.hpp"
#include "dpt/encoder.hpp"
#include "dpt/eval.hpp"
#include "dpt/gradcheck.hpp"
#include "dpt/graphs.hpp"
#include "dpt/pipeline.hpp"
#include "dpt/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
    std::optional<std::string> eval_mode;
    std::optional<std::string> prompt_variant;
    std::vector<std::string> drop;
};

void add_common(CLI::App* sub, CommonOpts& o) {
    sub->add_option("-c,--config", o.config_path, "run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override [run] seed");
    sub->add_option("--out", o.out, "override [run] out directory");
    sub->add_option("--threads", o.threads, "override [run] threads");
    sub->add_option("--eval-mode", o.eval_mode, "override [eval] mode (full|sampled)");
    sub->add_option("--prompt-variant", o.prompt_variant,
                    "override [stage3] prompt_variant (add|shallow|projection)");
    sub->add_option("--drop-behavior", o.drop,
                    "exclude an auxiliary behavior from the run (repeatable)");
}

// Parsed configuration with command-line overrides applied. `drop` labels are
// removed from cfg.behaviors up front, so the config hash of an ablated run
// differs from the full run and their artifacts never mix.
struct Workspace {
    dpt::RunConfig cfg;
    std::vector<std::string> full_behaviors; // label set the data file uses
    std::vector<std::string> drops;
    fs::path out;
};

Workspace load_workspace(const CommonOpts& o) {
    Workspace ws;
    ws.cfg = dpt::parse_config_file(o.config_path);
    if (o.seed) ws.cfg.seed = *o.seed;
    if (o.out) ws.cfg.out_dir = *o.out;
    if (o.threads) {
        if (*o.threads < 1) throw std::runtime_error("--threads must be at least 1");
        ws.cfg.threads = *o.threads;
    }
    if (o.eval_mode) {
        if (*o.eval_mode != "full" && *o.eval_mode != "sampled")
            throw std::runtime_error("--eval-mode must be 'full' or 'sampled'");
        ws.cfg.eval.mode = *o.eval_mode;
    }
    if (o.prompt_variant)
        ws.cfg.stage3.prompt_variant = dpt::parse_prompt_variant(*o.prompt_variant);

    ws.full_behaviors = ws.cfg.behaviors;
    ws.drops = o.drop;
    for (const auto& label : ws.drops) {
        auto it = std::find(ws.cfg.behaviors.begin(), ws.cfg.behaviors.end(), label);
        if (it == ws.cfg.behaviors.end())
            throw std::runtime_error("--drop-behavior: unknown behavior '" + label + "'");
        if (it + 1 == ws.cfg.behaviors.end())
            throw std::runtime_error("--drop-behavior: cannot drop the target behavior '" +
                                     label + "'");
        ws.cfg.behaviors.erase(it);
    }
    if (!ws.drops.empty() && ws.cfg.behaviors.size() < 2)
        throw std::runtime_error("--drop-behavior: at least one auxiliary behavior must remain");
    ws.out = ws.cfg.out_dir;
    return ws;
}

struct Prepared {
    dpt::Dataset full; // behaviors dropped, low-activity users filtered
    dpt::SplitDataset split;
};

Prepared prepare_data(const Workspace& ws) {
    if (ws.cfg.data_path.empty())
        throw std::runtime_error("[data] path is not set in the configuration");
    if (ws.cfg.behaviors.size() < 2)
        throw std::runtime_error("need at least two behaviors (auxiliary plus target)");
    dpt::Dataset ds = dpt::load_interactions_file(ws.cfg.data_path, ws.full_behaviors);
    if (!ws.drops.empty()) ds = dpt::drop_behaviors(ds, ws.drops);
    ds = dpt::filter_min_target(ds, ws.cfg.min_target);
    Prepared p;
    p.full = std::move(ds);
    p.split = dpt::leave_one_out_split(p.full);
    return p;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

fs::path stage_path(const Workspace& ws, int stage) {
    return ws.out / ("stage" + std::to_string(stage) + ".ckpt");
}

dpt::Checkpoint require_checkpoint(const Workspace& ws, int stage) {
    const fs::path path = stage_path(ws, stage);
    if (!fs::exists(path))
        throw std::runtime_error("missing " + path.string() + ": run stage " +
                                 std::to_string(stage) + " first");
    dpt::Checkpoint ck = dpt::read_checkpoint(path.string());
    if (ck.stage != stage)
        throw std::runtime_error(path.string() + " holds a stage " +
                                 std::to_string(ck.stage) + " checkpoint");
    if (ck.config_hash != ws.cfg.hash())
        throw std::runtime_error(
            "configuration hash mismatch: " + path.string() + " was produced under " +
            hash_hex(ck.config_hash) + ", current configuration is " +
            hash_hex(ws.cfg.hash()) +
            " (rerun the earlier stages or restore the original configuration)");
    return ck;
}

dpt::MultiBehaviorGraph denoised_graph(const Workspace& ws, const dpt::Checkpoint& ck,
                                       const dpt::MultiBehaviorGraph& mbg,
                                       const dpt::Dataset& train) {
    const fs::path path = ws.out / ck.denoised_ref;
    if (ck.denoised_ref == "-" || !fs::exists(path))
        throw std::runtime_error("missing removed-edge report " + path.string() +
                                 ": run stage 1 first");
    const auto removed = dpt::load_removed_edges_file(path.string(), train);
    std::vector<std::tuple<int, int, int>> triples;
    triples.reserve(removed.size());
    for (const auto& e : removed) triples.emplace_back(e.user, e.item, e.behavior);
    return dpt::remove_edges(mbg, triples);
}

void print_trace(const char* label, const dpt::TrainResult& r, bool with_rec) {
    const std::size_t n = r.total_trace.size();
    const std::size_t step = n <= 12 ? 1 : (n + 11) / 12;
    char line[160];
    for (std::size_t i = 0; i < n; i += step) {
        if (with_rec)
            std::snprintf(line, sizeof(line), "%s epoch %3zu  total %.6f  rank %.6f  recon %.6f",
                          label, i + 1, r.total_trace[i], r.bpr_trace[i], r.rec_trace[i]);
        else
            std::snprintf(line, sizeof(line), "%s epoch %3zu  loss %.6f", label, i + 1,
                          r.total_trace[i]);
        std::cout << line << '\n';
    }
    if (n != 0 && (n - 1) % step != 0) {
        if (with_rec)
            std::snprintf(line, sizeof(line), "%s epoch %3zu  total %.6f  rank %.6f  recon %.6f",
                          label, n, r.total_trace[n - 1], r.bpr_trace[n - 1], r.rec_trace[n - 1]);
        else
            std::snprintf(line, sizeof(line), "%s epoch %3zu  loss %.6f", label, n,
                          r.total_trace[n - 1]);
        std::cout << line << '\n';
    }
    std::snprintf(line, sizeof(line), "%s %.3f s/epoch", label, r.seconds_per_epoch);
    std::cout << line << '\n';
}

int run_synth(const CommonOpts& o) {
    const Workspace ws = load_workspace(o);
    if (!ws.cfg.has_synth)
        throw std::runtime_error("configuration has no [synth] section");
    fs::create_directories(ws.out);
    const dpt::SyntheticResult r = dpt::generate_synthetic(ws.cfg.synth, ws.cfg.seed);
    const fs::path data = ws.out / "synthetic.tsv";
    dpt::serialize_dataset_file(r.dataset, data.string());
    dpt::write_noise_labels_file(r.noise, r.dataset, data.string() + ".noise");
    std::cout << r.dataset.summary() << '\n'
              << "wrote " << data.string() << " and sidecar with " << r.noise.entries.size()
              << " planted noise edges\n";
    return 0;
}

int run_prepare(const CommonOpts& o) {
    const Workspace ws = load_workspace(o);
    const Prepared p = prepare_data(ws);
    fs::create_directories(ws.out);

    dpt::serialize_dataset_file(p.split.train, (ws.out / "train.tsv").string());
    {
        std::ofstream out(ws.out / "test.tsv");
        if (!out) throw std::runtime_error("cannot write " + (ws.out / "test.tsv").string());
        for (const auto& t : p.split.test_pairs)
            out << p.full.user_ids[static_cast<std::size_t>(t.user)] << '\t'
                << p.full.item_ids[static_cast<std::size_t>(t.item)] << '\n';
    }

    const dpt::MultiBehaviorGraph mbg = dpt::build_multi_behavior_graph(p.split.train);
    const dpt::UserRelationGraph urg =
        dpt::build_user_relation_graph(mbg, ws.cfg.relation_top_k);
    const dpt::ItemRelationGraph irg = dpt::build_item_relation_graph(
        p.split.train, ws.cfg.relation_top_k, ws.cfg.item_all_pairs);
    {
        std::ofstream out(ws.out / "user_relation.tsv");
        dpt::dump_user_relation_graph(urg, p.split.train, out);
    }
    {
        std::ofstream out(ws.out / "item_relation.tsv");
        dpt::dump_item_relation_graph(irg, p.split.train, out);
    }

    std::cout << p.full.summary() << '\n'
              << "train records: " << p.split.train.records.size()
              << ", held-out users: " << p.split.test_pairs.size() << '\n'
              << "wrote train.tsv, test.tsv, user_relation.tsv, item_relation.tsv under "
              << ws.out.string() << '\n';
    return 0;
}

int run_stage1(const CommonOpts& o) {
    const Workspace ws = load_workspace(o);
    const Prepared p = prepare_data(ws);
    fs::create_directories(ws.out);

    const dpt::MultiBehaviorGraph mbg = dpt::build_multi_behavior_graph(p.split.train);
    const dpt::UserRelationGraph urg =
        dpt::build_user_relation_graph(mbg, ws.cfg.relation_top_k);
    const dpt::ItemRelationGraph irg = dpt::build_item_relation_graph(
        p.split.train, ws.cfg.relation_top_k, ws.cfg.item_all_pairs);

    dpt::ParameterStore store;
    dpt::Stage1Result r = dpt::stage1_train(store, mbg, urg, irg, ws.cfg.encoder,
                                            ws.cfg.stage1, ws.cfg.seed);
    print_trace("stage1", r.train, true);

    dpt::write_removed_edges_file(r.denoised.removed, p.split.train,
                                  (ws.out / "removed_edges.tsv").string());
    dpt::Checkpoint ck;
    ck.stage = 1;
    ck.config_hash = ws.cfg.hash();
    ck.seed = ws.cfg.seed;
    ck.denoised_ref = "removed_edges.tsv";
    ck.loss_trace = r.train.total_trace;
    ck.params = std::move(store);
    dpt::write_checkpoint(ck, stage_path(ws, 1).string());

    std::cout << "pruned " << r.denoised.removed.size() << " auxiliary edges\n"
              << "wrote " << stage_path(ws, 1).string() << " and removed_edges.tsv\n";
    return 0;
}

int run_late_stage(const CommonOpts& o, int stage) {
    const Workspace ws = load_workspace(o);
    const Prepared p = prepare_data(ws);
    const dpt::MultiBehaviorGraph mbg = dpt::build_multi_behavior_graph(p.split.train);

    dpt::Checkpoint prev = require_checkpoint(ws, stage - 1);
    const dpt::MultiBehaviorGraph gprime = denoised_graph(ws, prev, mbg, p.split.train);

    dpt::ParameterStore store = std::move(prev.params);
    const dpt::StageConfig& cfg = stage == 2 ? ws.cfg.stage2 : ws.cfg.stage3;
    const dpt::TrainResult r =
        stage == 2 ? dpt::stage2_train(store, gprime, ws.cfg.encoder, cfg, ws.cfg.seed)
                   : dpt::stage3_train(store, gprime, ws.cfg.encoder, cfg, ws.cfg.seed);
    print_trace(stage == 2 ? "stage2" : "stage3", r, false);

    dpt::Checkpoint ck;
    ck.stage = stage;
    ck.config_hash = ws.cfg.hash();
    ck.seed = ws.cfg.seed;
    ck.denoised_ref = prev.denoised_ref;
    if (stage == 3) ck.prompt_variant = dpt::to_string(ws.cfg.stage3.prompt_variant);
    ck.loss_trace = r.total_trace;
    ck.params = std::move(store);
    dpt::write_checkpoint(ck, stage_path(ws, stage).string());
    std::cout << "wrote " << stage_path(ws, stage).string() << '\n';
    return 0;
}

int run_evaluate(const CommonOpts& o, int stage) {
    const Workspace ws = load_workspace(o);
    const Prepared p = prepare_data(ws);
    const dpt::MultiBehaviorGraph mbg = dpt::build_multi_behavior_graph(p.split.train);
    dpt::Checkpoint ck = require_checkpoint(ws, stage);

    dpt::EncoderGraphs graphs;
    if (stage == 1) {
        const dpt::UserRelationGraph urg = dpt::normalize_relation_weights(
            dpt::build_user_relation_graph(mbg, ws.cfg.relation_top_k));
        const dpt::ItemRelationGraph irg =
            dpt::normalize_relation_weights(dpt::build_item_relation_graph(
                p.split.train, ws.cfg.relation_top_k, ws.cfg.item_all_pairs));
        graphs = dpt::build_encoder_graphs(mbg, &urg, &irg);
    } else {
        graphs = dpt::build_encoder_graphs(denoised_graph(ws, ck, mbg, p.split.train),
                                           nullptr, nullptr);
    }

    dpt::PromptVariant variant{};
    const dpt::PromptVariant* prompt = nullptr;
    if (stage == 3 && ck.prompt_variant != "-") {
        variant = dpt::parse_prompt_variant(ck.prompt_variant);
        prompt = &variant;
    }
    const dpt::Representations reps =
        dpt::compute_representations(ck.params, graphs, ws.cfg.encoder, prompt);

    dpt::EvalOptions opt;
    opt.k = ws.cfg.eval.k;
    opt.sampled = ws.cfg.eval.mode == "sampled";
    opt.negatives = ws.cfg.eval.negatives;
    opt.threads = ws.cfg.threads;
    opt.seed = ws.cfg.seed;
    const dpt::MetricReport report = dpt::evaluate(reps, mbg.target(), p.split.test_pairs, opt);

    json j;
    j["stage"] = stage;
    j["mode"] = ws.cfg.eval.mode;
    j["K"] = report.k;
    j["HR"] = report.hr;
    j["NDCG"] = report.ndcg;
    j["users"] = report.users;
    j["seed"] = ws.cfg.seed;
    j["config_hash"] = hash_hex(ws.cfg.hash());

    fs::create_directories(ws.out);
    const fs::path metrics = ws.out / ("metrics_stage" + std::to_string(stage) + ".jsonl");
    {
        std::ofstream out(metrics, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + metrics.string());
        out << j.dump() << '\n';
    }
    std::cout << j.dump() << '\n';
    return 0;
}

int run_denoise_report(const CommonOpts& o, std::string noise_path) {
    const Workspace ws = load_workspace(o);
    const Prepared p = prepare_data(ws);

    const fs::path removed_path = ws.out / "removed_edges.tsv";
    if (!fs::exists(removed_path))
        throw std::runtime_error("missing " + removed_path.string() + ": run stage 1 first");
    const auto removed = dpt::load_removed_edges_file(removed_path.string(), p.split.train);

    if (noise_path.empty()) noise_path = ws.cfg.data_path + ".noise";
    // Labels for users that fell out of the filtered universe cannot be
    // recovered by pruning, so they are excluded from the denominator.
    const dpt::NoiseLabels noise =
        dpt::load_noise_labels_file(noise_path, p.split.train, true);
    const dpt::DenoiseQuality q = dpt::denoise_quality(removed, noise);

    json j;
    j["precision"] = q.precision;
    j["recall"] = q.recall;
    j["f1"] = q.f1;
    j["removed"] = q.removed;
    j["noisy"] = q.noisy;
    j["hits"] = q.hits;
    fs::create_directories(ws.out);
    {
        std::ofstream out(ws.out / "denoise_report.json", std::ios::trunc);
        out << j.dump(2) << '\n';
    }
    std::cout << j.dump() << '\n';
    return 0;
}

int run_gradcheck(std::uint64_t seed, double tol) {
    const dpt::GradCheckReport rep = dpt::run_gradient_check(seed);
    char line[160];
    for (const auto& [name, err] : rep.per_param) {
        std::snprintf(line, sizeof(line), "  %-28s max rel err %.3e", name.c_str(), err);
        std::cout << line << '\n';
    }
    std::snprintf(line, sizeof(line),
                  "checked %zu entries, max rel err %.3e at %s[%zu] "
                  "(analytic %.9g, numeric %.9g), %.2f s",
                  rep.checked, rep.max_rel_err, rep.worst_param.c_str(), rep.worst_index,
                  rep.worst_analytic, rep.worst_numeric, rep.seconds);
    std::cout << line << '\n';
    const bool ok = rep.pass(tol);
    std::cout << (ok ? "PASS" : "FAIL") << " (tolerance " << tol << ")\n";
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-behavior recommender: denoising and prompt-tuning pipeline"};
    app.require_subcommand(1);

    CommonOpts synth_o, prepare_o, s1_o, s2_o, s3_o, eval_o, report_o;
    int eval_stage = 3;
    std::string report_noise;
    std::uint64_t gc_seed = 5;
    double gc_tol = 1e-4;

    CLI::App* synth = app.add_subcommand(
        "synth", "generate a synthetic interaction corpus with planted auxiliary noise");
    add_common(synth, synth_o);

    CLI::App* prepare = app.add_subcommand(
        "prepare", "load, filter and split the data; dump the relation graphs");
    add_common(prepare, prepare_o);

    CLI::App* s1 = app.add_subcommand(
        "stage1", "joint training on the full graph, then prune low-score auxiliary edges");
    add_common(s1, s1_o);

    CLI::App* s2 = app.add_subcommand(
        "stage2", "retrain the readouts on the denoised graph with frozen embeddings");
    add_common(s2, s2_o);

    CLI::App* s3 = app.add_subcommand(
        "stage3", "prompt-tune the target behavior embedding on the denoised graph");
    add_common(s3, s3_o);

    CLI::App* ev = app.add_subcommand("evaluate", "leave-one-out ranking metrics");
    add_common(ev, eval_o);
    ev->add_option("--stage", eval_stage, "checkpoint stage to evaluate")
        ->check(CLI::Range(1, 3));

    CLI::App* report = app.add_subcommand(
        "denoise-report", "compare removed edges against planted noise labels");
    add_common(report, report_o);
    report->add_option("--noise", report_noise,
                       "noise label sidecar (default: <data path>.noise)");

    CLI::App* gc = app.add_subcommand(
        "gradcheck", "finite-difference check of the training gradients");
    gc->add_option("--seed", gc_seed, "fixture seed");
    gc->add_option("--tol", gc_tol, "maximum relative error accepted");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return run_synth(synth_o);
        if (*prepare) return run_prepare(prepare_o);
        if (*s1) return run_stage1(s1_o);
        if (*s2) return run_late_stage(s2_o, 2);
        if (*s3) return run_late_stage(s3_o, 3);
        if (*ev) return run_evaluate(eval_o, eval_stage);
        if (*report) return run_denoise_report(report_o, report_noise);
        if (*gc) return run_gradcheck(gc_seed, gc_tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
