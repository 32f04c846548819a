#include "dpt/denoise.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dpt {

namespace {

double row_dot(const Tensor& a, std::size_t row_a, const Tensor& b, std::size_t row_b) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) acc += a.at(row_a, c) * b.at(row_b, c);
    return acc;
}

Tensor behavior_embedding_value(const ParameterStore& store, int behavior, int num_behaviors) {
    if (behavior == num_behaviors - 1) return store.get("embed/behavior_target").value;
    const Tensor& aux = store.get("embed/behavior_aux").value;
    Tensor row(1, aux.cols);
    for (std::size_t c = 0; c < aux.cols; ++c) {
        row.at(0, c) = aux.at(static_cast<std::size_t>(behavior), c);
    }
    return row;
}

// (n x d) rows dotted against a broadcast 1 x d vector -> n x 1.
Var dot_rows_with(Tape& tape, Var rows, Var vec, std::size_t d) {
    return tape.matmul(tape.mul_rowvec(rows, vec), tape.constant(Tensor(d, 1, 1.0)));
}

constexpr double kProbClip = 1e-12;

} // namespace

double decode_score(const Tensor& h_user, int user, const Tensor& h_item, int item,
                    const Tensor& e_b) {
    const double su = row_dot(h_user, static_cast<std::size_t>(user), e_b, 0);
    const double si = row_dot(h_item, static_cast<std::size_t>(item), e_b, 0);
    return 1.0 / (1.0 + std::exp(-su * si));
}

ReconBatch sample_recon_batch(const BipartiteGraph& g, std::size_t num_pos, double k_neg,
                              Rng& rng) {
    if (k_neg < 0.0 || !std::isfinite(k_neg))
        throw std::invalid_argument("sample_recon_batch: negative ratio must be finite and >= 0");
    ReconBatch batch;
    std::vector<std::pair<int, int>> edges;
    edges.reserve(g.num_edges());
    for (int u = 0; u < g.num_users; ++u) {
        for (int i : g.user_items[static_cast<std::size_t>(u)]) edges.emplace_back(u, i);
    }
    if (edges.empty()) return batch;
    const auto total_pairs =
        static_cast<std::size_t>(g.num_users) * static_cast<std::size_t>(g.num_items);
    const bool has_non_edge = edges.size() < total_pairs;
    for (std::size_t n = 0; n < num_pos; ++n) {
        const auto& [u, i] = edges[rng.uniform_index(edges.size())];
        batch.pos_users.push_back(u);
        batch.pos_items.push_back(i);
    }
    if (has_non_edge) {
        const auto num_neg =
            static_cast<std::size_t>(std::llround(k_neg * static_cast<double>(num_pos)));
        for (std::size_t n = 0; n < num_neg; ++n) {
            for (int attempt = 0; attempt < 100; ++attempt) {
                const int nu = static_cast<int>(
                    rng.uniform_index(static_cast<std::uint64_t>(g.num_users)));
                const int ni = static_cast<int>(
                    rng.uniform_index(static_cast<std::uint64_t>(g.num_items)));
                if (!g.has_edge(nu, ni)) {
                    batch.neg_users.push_back(nu);
                    batch.neg_items.push_back(ni);
                    break;
                }
            }
        }
    }
    return batch;
}

Var reconstruction_loss(Tape& tape, ParameterStore& store, const EncodeVars& vars,
                        const std::vector<ReconBatch>& batches) {
    const int K = static_cast<int>(vars.user_behavior.size());
    if (static_cast<int>(batches.size()) != K) {
        throw std::invalid_argument("reconstruction_loss: one batch per behavior expected");
    }
    Var total{};
    int present = 0;
    for (int k = 0; k < K; ++k) {
        const ReconBatch& b = batches[static_cast<std::size_t>(k)];
        const std::size_t n_pos = b.pos_users.size();
        const std::size_t n_neg = b.neg_users.size();
        if (n_pos + n_neg == 0) continue;
        const auto kk = static_cast<std::size_t>(k);
        const std::size_t d = tape.value(vars.user_behavior[kk]).cols;
        Var e_b = behavior_embedding(tape, store, k, K);
        Var parts{};
        bool have_parts = false;
        if (n_pos > 0) {
            Var su = dot_rows_with(tape, tape.gather_rows(vars.user_behavior[kk], b.pos_users),
                                   e_b, d);
            Var si = dot_rows_with(tape, tape.gather_rows(vars.item_behavior[kk], b.pos_items),
                                   e_b, d);
            Var p = tape.clamp(tape.sigmoid(tape.mul(su, si)), kProbClip, 1.0 - kProbClip);
            parts = tape.sum(tape.log(p));
            have_parts = true;
        }
        if (n_neg > 0) {
            Var su = dot_rows_with(tape, tape.gather_rows(vars.user_behavior[kk], b.neg_users),
                                   e_b, d);
            Var si = dot_rows_with(tape, tape.gather_rows(vars.item_behavior[kk], b.neg_items),
                                   e_b, d);
            Var p = tape.clamp(tape.sigmoid(tape.mul(su, si)), kProbClip, 1.0 - kProbClip);
            Var neg_term = tape.sum(tape.log(tape.clamp(tape.affine(p, -1.0, 1.0), kProbClip,
                                                        1.0 - kProbClip)));
            parts = have_parts ? tape.add(parts, neg_term) : neg_term;
        }
        Var loss_k = tape.affine(parts, -1.0 / static_cast<double>(n_pos + n_neg), 0.0);
        total = present == 0 ? loss_k : tape.add(total, loss_k);
        ++present;
    }
    if (present == 0) throw std::invalid_argument("reconstruction_loss: all batches empty");
    return tape.affine(total, 1.0 / static_cast<double>(present), 0.0);
}

DenoisedGraph binarize_and_prune(const MultiBehaviorGraph& mbg, const Representations& reps,
                                 const ParameterStore& store, double delta) {
    if (!(delta > 0.0 && delta < 0.5)) {
        throw std::invalid_argument("binarize_and_prune: delta must be in (0, 0.5)");
    }
    const double threshold = 0.5 - delta;
    const int K = mbg.num_behaviors();
    DenoisedGraph out;
    std::vector<std::tuple<int, int, int>> doomed;
    for (int k = 0; k + 1 < K; ++k) {
        const auto& g = mbg.behaviors[static_cast<std::size_t>(k)];
        const Tensor e_b = behavior_embedding_value(store, k, K);
        const Tensor& hu = reps.user_behavior[static_cast<std::size_t>(k)];
        const Tensor& hi = reps.item_behavior[static_cast<std::size_t>(k)];
        for (int u = 0; u < g.num_users; ++u) {
            for (int i : g.user_items[static_cast<std::size_t>(u)]) {
                const double score = decode_score(hu, u, hi, i, e_b);
                if (score < threshold) {
                    doomed.emplace_back(u, i, k);
                    out.removed.push_back({u, i, k, score});
                }
            }
        }
    }
    out.graph = remove_edges(mbg, doomed);
    return out;
}

void write_removed_edges(const std::vector<RemovedEdge>& removed, const Dataset& ds,
                         std::ostream& out) {
    char buf[64];
    for (const auto& e : removed) {
        std::snprintf(buf, sizeof buf, "%.6f", e.score);
        out << ds.user_ids[static_cast<std::size_t>(e.user)] << '\t'
            << ds.item_ids[static_cast<std::size_t>(e.item)] << '\t'
            << ds.behavior_labels[static_cast<std::size_t>(e.behavior)] << '\t' << buf << '\n';
    }
}

void write_removed_edges_file(const std::vector<RemovedEdge>& removed, const Dataset& ds,
                              const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write removed-edge report: " + path);
    write_removed_edges(removed, ds, out);
}

std::vector<RemovedEdge> load_removed_edges(std::istream& in, const Dataset& ds) {
    std::vector<RemovedEdge> removed;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string user, item, behavior, score;
        if (!std::getline(fields, user, '\t') || !std::getline(fields, item, '\t') ||
            !std::getline(fields, behavior, '\t') || !std::getline(fields, score, '\t')) {
            throw std::runtime_error("removed-edge report line " + std::to_string(line_no) +
                                     ": expected 4 fields");
        }
        auto uit = ds.user_index.find(user);
        auto iit = ds.item_index.find(item);
        int b = -1;
        for (std::size_t i = 0; i < ds.behavior_labels.size(); ++i) {
            if (ds.behavior_labels[i] == behavior) b = static_cast<int>(i);
        }
        if (uit == ds.user_index.end() || iit == ds.item_index.end() || b < 0) {
            throw std::runtime_error("removed-edge report line " + std::to_string(line_no) +
                                     ": id not present in dataset");
        }
        removed.push_back({uit->second, iit->second, b, std::stod(score)});
    }
    return removed;
}

std::vector<RemovedEdge> load_removed_edges_file(const std::string& path, const Dataset& ds) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open removed-edge report: " + path);
    return load_removed_edges(in, ds);
}

} // namespace dpt
