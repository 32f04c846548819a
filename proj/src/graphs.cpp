#include "dpt/graphs.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

namespace dpt {

namespace {

// Keep the top_k strongest entries, ties resolved toward lower neighbor id.
void truncate_top_k(std::vector<WeightedEdge>& edges, int top_k) {
    if (static_cast<int>(edges.size()) <= top_k) return;
    std::sort(edges.begin(), edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        return a.neighbor < b.neighbor;
    });
    edges.resize(static_cast<std::size_t>(top_k));
}

void sort_by_neighbor(std::vector<WeightedEdge>& edges) {
    std::sort(edges.begin(), edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        return a.neighbor < b.neighbor;
    });
}

} // namespace

std::size_t BipartiteGraph::num_edges() const {
    std::size_t n = 0;
    for (const auto& items : user_items) n += items.size();
    return n;
}

bool BipartiteGraph::has_edge(int user, int item) const {
    const auto& items = user_items[static_cast<std::size_t>(user)];
    return std::binary_search(items.begin(), items.end(), item);
}

MultiBehaviorGraph build_multi_behavior_graph(const Dataset& ds) {
    MultiBehaviorGraph mbg;
    mbg.num_users = ds.num_users;
    mbg.num_items = ds.num_items;
    mbg.behaviors.resize(static_cast<std::size_t>(ds.num_behaviors));
    for (int b = 0; b < ds.num_behaviors; ++b) {
        auto& g = mbg.behaviors[static_cast<std::size_t>(b)];
        g.behavior = b;
        g.num_users = ds.num_users;
        g.num_items = ds.num_items;
        g.user_items.resize(static_cast<std::size_t>(ds.num_users));
        g.item_users.resize(static_cast<std::size_t>(ds.num_items));
    }
    for (const auto& r : ds.records) {
        auto& g = mbg.behaviors[static_cast<std::size_t>(r.behavior)];
        g.user_items[static_cast<std::size_t>(r.user)].push_back(r.item);
        g.item_users[static_cast<std::size_t>(r.item)].push_back(r.user);
    }
    for (auto& g : mbg.behaviors) {
        for (auto& items : g.user_items) std::sort(items.begin(), items.end());
        for (auto& users : g.item_users) std::sort(users.begin(), users.end());
    }
    return mbg;
}

UserRelationGraph build_user_relation_graph(const MultiBehaviorGraph& mbg, int top_k) {
    if (top_k < 1) throw std::invalid_argument("build_user_relation_graph: top_k must be >= 1");
    UserRelationGraph urg;
    urg.num_users = mbg.num_users;
    urg.adjacency.resize(static_cast<std::size_t>(mbg.num_behaviors()));
    for (int b = 0; b < mbg.num_behaviors(); ++b) {
        const auto& g = mbg.behaviors[static_cast<std::size_t>(b)];
        auto& adj = urg.adjacency[static_cast<std::size_t>(b)];
        adj.resize(static_cast<std::size_t>(mbg.num_users));

        // Per user, intersection sizes with every co-interacting user via the
        // item->users inverted index.
        std::vector<int> overlap(static_cast<std::size_t>(mbg.num_users), 0);
        std::vector<std::vector<WeightedEdge>> selected(
            static_cast<std::size_t>(mbg.num_users));
        for (int u = 0; u < mbg.num_users; ++u) {
            const auto& items = g.user_items[static_cast<std::size_t>(u)];
            std::vector<int> touched;
            for (int item : items) {
                for (int v : g.item_users[static_cast<std::size_t>(item)]) {
                    if (v == u) continue;
                    if (overlap[static_cast<std::size_t>(v)] == 0) touched.push_back(v);
                    ++overlap[static_cast<std::size_t>(v)];
                }
            }
            std::sort(touched.begin(), touched.end());
            auto& cand = selected[static_cast<std::size_t>(u)];
            cand.reserve(touched.size());
            for (int v : touched) {
                const int inter = overlap[static_cast<std::size_t>(v)];
                const auto union_size =
                    items.size() + g.user_items[static_cast<std::size_t>(v)].size() -
                    static_cast<std::size_t>(inter);
                cand.push_back({v, static_cast<double>(inter) / static_cast<double>(union_size)});
                overlap[static_cast<std::size_t>(v)] = 0;
            }
            truncate_top_k(cand, top_k);
        }

        // Union symmetrization: an edge survives if either endpoint kept it.
        std::set<std::pair<int, int>> kept;
        std::map<std::pair<int, int>, double> weight_of;
        for (int u = 0; u < mbg.num_users; ++u) {
            for (const auto& e : selected[static_cast<std::size_t>(u)]) {
                const int lo = std::min(u, e.neighbor);
                const int hi = std::max(u, e.neighbor);
                kept.emplace(lo, hi);
                weight_of[{lo, hi}] = e.weight;
            }
        }
        for (const auto& [u, v] : kept) {
            const double w = weight_of[{u, v}];
            adj[static_cast<std::size_t>(u)].push_back({v, w});
            adj[static_cast<std::size_t>(v)].push_back({u, w});
        }
        for (auto& edges : adj) sort_by_neighbor(edges);
    }
    return urg;
}

ItemRelationGraph build_item_relation_graph(const Dataset& ds, int top_k, bool all_pairs) {
    if (top_k < 1) throw std::invalid_argument("build_item_relation_graph: top_k must be >= 1");
    ItemRelationGraph irg;
    irg.num_items = ds.num_items;
    irg.out_edges.resize(static_cast<std::size_t>(ds.num_behaviors));
    irg.in_edges.resize(static_cast<std::size_t>(ds.num_behaviors));

    // Per-user (timestamp, item) sequences for one behavior at a time.
    for (int b = 0; b < ds.num_behaviors; ++b) {
        std::vector<std::vector<std::pair<std::int64_t, int>>> sequences(
            static_cast<std::size_t>(ds.num_users));
        for (const auto& r : ds.records) {
            if (r.behavior != b) continue;
            sequences[static_cast<std::size_t>(r.user)].emplace_back(r.timestamp, r.item);
        }
        std::map<std::pair<int, int>, std::int64_t> count;
        for (auto& seq : sequences) {
            std::sort(seq.begin(), seq.end());
            for (std::size_t a = 0; a + 1 < seq.size(); ++a) {
                const std::size_t last = all_pairs ? seq.size() : a + 2;
                for (std::size_t c = a + 1; c < last; ++c) {
                    ++count[{seq[a].second, seq[c].second}];
                }
            }
        }
        auto& out = irg.out_edges[static_cast<std::size_t>(b)];
        auto& in = irg.in_edges[static_cast<std::size_t>(b)];
        out.resize(static_cast<std::size_t>(ds.num_items));
        in.resize(static_cast<std::size_t>(ds.num_items));
        for (const auto& [pair, cnt] : count) {
            const auto [i, j] = pair;
            auto rev = count.find({j, i});
            const std::int64_t back = rev == count.end() ? 0 : rev->second;
            const double w = static_cast<double>(cnt) / static_cast<double>(cnt + back);
            out[static_cast<std::size_t>(i)].push_back({j, w});
        }
        for (auto& edges : out) truncate_top_k(edges, top_k);
        for (int i = 0; i < ds.num_items; ++i) {
            sort_by_neighbor(out[static_cast<std::size_t>(i)]);
            for (const auto& e : out[static_cast<std::size_t>(i)]) {
                in[static_cast<std::size_t>(e.neighbor)].push_back({i, e.weight});
            }
        }
        for (auto& edges : in) sort_by_neighbor(edges);
    }
    return irg;
}

UserRelationGraph normalize_relation_weights(const UserRelationGraph& g) {
    UserRelationGraph out = g;
    for (auto& adj : out.adjacency) {
        for (auto& edges : adj) {
            double sum = 0.0;
            for (const auto& e : edges) sum += e.weight;
            if (sum <= 0.0) continue;
            for (auto& e : edges) e.weight /= sum;
        }
    }
    return out;
}

ItemRelationGraph normalize_relation_weights(const ItemRelationGraph& g) {
    ItemRelationGraph out = g;
    for (auto& in : out.in_edges) {
        for (auto& edges : in) {
            double sum = 0.0;
            for (const auto& e : edges) sum += e.weight;
            if (sum <= 0.0) continue;
            for (auto& e : edges) e.weight /= sum;
        }
    }
    // Keep out_edges the exact transpose of the rescaled in_edges.
    for (std::size_t b = 0; b < out.out_edges.size(); ++b) {
        for (auto& edges : out.out_edges[b]) edges.clear();
        for (int j = 0; j < out.num_items; ++j) {
            for (const auto& e : out.in_edges[b][static_cast<std::size_t>(j)]) {
                out.out_edges[b][static_cast<std::size_t>(e.neighbor)].push_back({j, e.weight});
            }
        }
        for (auto& edges : out.out_edges[b]) sort_by_neighbor(edges);
    }
    return out;
}

MultiBehaviorGraph remove_edges(const MultiBehaviorGraph& mbg,
                                const std::vector<std::tuple<int, int, int>>& edges) {
    std::set<std::tuple<int, int, int>> removed(edges.begin(), edges.end());
    MultiBehaviorGraph out;
    out.num_users = mbg.num_users;
    out.num_items = mbg.num_items;
    out.behaviors.resize(mbg.behaviors.size());
    for (int b = 0; b < mbg.num_behaviors(); ++b) {
        const auto& src = mbg.behaviors[static_cast<std::size_t>(b)];
        auto& dst = out.behaviors[static_cast<std::size_t>(b)];
        dst.behavior = b;
        dst.num_users = src.num_users;
        dst.num_items = src.num_items;
        dst.user_items.resize(src.user_items.size());
        dst.item_users.resize(src.item_users.size());
        for (int u = 0; u < src.num_users; ++u) {
            for (int i : src.user_items[static_cast<std::size_t>(u)]) {
                if (removed.count({u, i, b})) continue;
                dst.user_items[static_cast<std::size_t>(u)].push_back(i);
                dst.item_users[static_cast<std::size_t>(i)].push_back(u);
            }
        }
        for (auto& users : dst.item_users) std::sort(users.begin(), users.end());
    }
    return out;
}

void dump_user_relation_graph(const UserRelationGraph& g, const Dataset& ds,
                              std::ostream& out) {
    for (int b = 0; b < g.num_behaviors(); ++b) {
        for (int u = 0; u < g.num_users; ++u) {
            for (const auto& e : g.adjacency[static_cast<std::size_t>(b)][static_cast<std::size_t>(u)]) {
                if (e.neighbor < u) continue; // each undirected edge once
                out << ds.user_ids[static_cast<std::size_t>(u)] << '\t'
                    << ds.user_ids[static_cast<std::size_t>(e.neighbor)] << '\t'
                    << ds.behavior_labels[static_cast<std::size_t>(b)] << '\t' << e.weight
                    << '\n';
            }
        }
    }
}

void dump_item_relation_graph(const ItemRelationGraph& g, const Dataset& ds,
                              std::ostream& out) {
    for (int b = 0; b < g.num_behaviors(); ++b) {
        for (int i = 0; i < g.num_items; ++i) {
            for (const auto& e : g.out_edges[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)]) {
                out << ds.item_ids[static_cast<std::size_t>(i)] << '\t'
                    << ds.item_ids[static_cast<std::size_t>(e.neighbor)] << '\t'
                    << ds.behavior_labels[static_cast<std::size_t>(b)] << '\t' << e.weight
                    << '\n';
            }
        }
    }
}

} // namespace dpt
