#pragma once

#include <iosfwd>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dpt/dataset.hpp"

namespace dpt {

// Block-structured interaction generator with planted noise.
//
// Users and items are split into `blocks` aligned groups. Each user draws
// auxiliary interactions from the item group it belongs to; with probability
// `noise_rate` a draw is redirected to a uniformly chosen item outside the
// group and labeled as noise. Target interactions are drawn from the user's
// clean auxiliary items only, so every target edge is supported by at least
// one clean auxiliary edge.
struct SyntheticSpec {
    int num_users = 0;
    int num_items = 0;
    int num_behaviors = 2; // last one is the target
    int blocks = 1;
    double aux_density = 0.1;    // fraction of the item group drawn per aux behavior
    double target_density = 0.5; // fraction of the clean aux support drawn as target
    double noise_rate = 0.0;
    std::vector<std::string> behavior_labels; // empty: aux1..auxN, target
};

// Dense (user, item, behavior) triples of the edges that were planted as noise.
struct NoiseLabels {
    std::vector<std::tuple<int, int, int>> entries; // emission order
    std::set<std::tuple<int, int, int>> index;

    bool contains(int user, int item, int behavior) const {
        return index.count({user, item, behavior}) > 0;
    }
    void add(int user, int item, int behavior) {
        if (index.emplace(user, item, behavior).second) {
            entries.emplace_back(user, item, behavior);
        }
    }
};

struct SyntheticResult {
    Dataset dataset;
    NoiseLabels noise;
};

SyntheticResult generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Sidecar format: one `user\titem\tbehavior` line per noisy edge, raw ids.
// skip_unknown drops lines whose ids the dataset no longer carries (users
// removed by filtering), restricting the labels to the live universe.
void write_noise_labels(const NoiseLabels& noise, const Dataset& ds, std::ostream& out);
void write_noise_labels_file(const NoiseLabels& noise, const Dataset& ds,
                             const std::string& path);
NoiseLabels load_noise_labels(std::istream& in, const Dataset& ds, bool skip_unknown = false);
NoiseLabels load_noise_labels_file(const std::string& path, const Dataset& ds,
                                   bool skip_unknown = false);

} // namespace dpt
