#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpt/dataset.hpp"

namespace dpt {

// One behavior's user-item interactions. user_items and item_users are
// transposes of each other; neighbor lists are sorted and duplicate free.
struct BipartiteGraph {
    int behavior = 0;
    int num_users = 0;
    int num_items = 0;
    std::vector<std::vector<int>> user_items;
    std::vector<std::vector<int>> item_users;

    std::size_t num_edges() const;
    bool has_edge(int user, int item) const;
};

struct MultiBehaviorGraph {
    int num_users = 0;
    int num_items = 0;
    std::vector<BipartiteGraph> behaviors;

    int num_behaviors() const { return static_cast<int>(behaviors.size()); }
    int target_behavior() const { return num_behaviors() - 1; }
    const BipartiteGraph& target() const {
        return behaviors[static_cast<std::size_t>(target_behavior())];
    }
};

struct WeightedEdge {
    int neighbor = 0;
    double weight = 0.0;
};

// Undirected weighted graph per behavior over users. adjacency[b][u] lists
// (v, w) sorted by v; symmetric; no self loops.
struct UserRelationGraph {
    int num_users = 0;
    std::vector<std::vector<std::vector<WeightedEdge>>> adjacency;

    int num_behaviors() const { return static_cast<int>(adjacency.size()); }
};

// Directed weighted graph per behavior over items. out_edges[b][i] lists
// (j, w) for edges i->j, sorted by j; in_edges is the transpose.
struct ItemRelationGraph {
    int num_items = 0;
    std::vector<std::vector<std::vector<WeightedEdge>>> out_edges;
    std::vector<std::vector<std::vector<WeightedEdge>>> in_edges;

    int num_behaviors() const { return static_cast<int>(out_edges.size()); }
};

MultiBehaviorGraph build_multi_behavior_graph(const Dataset& ds);

// Per behavior: edge (u,v) iff the two users' item sets intersect, weighted by
// Jaccard similarity. Each user keeps its top_k strongest neighbors (ties by
// lower id); symmetry is then restored by union.
UserRelationGraph build_user_relation_graph(const MultiBehaviorGraph& mbg, int top_k);

// Per behavior: per-user interaction sequences ordered by (timestamp, item);
// Cnt(i->j) counts consecutive pairs across sequences (all ordered pairs when
// all_pairs is set). Edge i->j iff Cnt(i->j) > 0, weighted
// Cnt(i->j)/(Cnt(i->j)+Cnt(j->i)); out-neighbors truncated to top_k.
ItemRelationGraph build_item_relation_graph(const Dataset& ds, int top_k,
                                            bool all_pairs = false);

// Rescale each node's incident (incoming, for the item graph) weights to sum
// to one. Nodes without incident edges are untouched.
UserRelationGraph normalize_relation_weights(const UserRelationGraph& g);
ItemRelationGraph normalize_relation_weights(const ItemRelationGraph& g);

// Rebuild with the listed (user, item, behavior) edges removed. Unknown edges
// are ignored.
MultiBehaviorGraph remove_edges(const MultiBehaviorGraph& mbg,
                                const std::vector<std::tuple<int, int, int>>& edges);

// Inspection dumps, one `u\tv\tbehavior\tweight` line per edge (raw labels).
void dump_user_relation_graph(const UserRelationGraph& g, const Dataset& ds,
                              std::ostream& out);
void dump_item_relation_graph(const ItemRelationGraph& g, const Dataset& ds,
                              std::ostream& out);

} // namespace dpt
