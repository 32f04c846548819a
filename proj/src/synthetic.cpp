#include "dpt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "dpt/rng.hpp"

namespace dpt {

namespace {

struct BlockRange {
    int start = 0;
    int size = 0;
};

// Split n into `blocks` contiguous ranges, first `n % blocks` one larger.
std::vector<BlockRange> split_blocks(int n, int blocks) {
    std::vector<BlockRange> out(static_cast<std::size_t>(blocks));
    const int base = n / blocks;
    const int extra = n % blocks;
    int start = 0;
    for (int b = 0; b < blocks; ++b) {
        out[static_cast<std::size_t>(b)].start = start;
        out[static_cast<std::size_t>(b)].size = base + (b < extra ? 1 : 0);
        start += out[static_cast<std::size_t>(b)].size;
    }
    return out;
}

void validate(const SyntheticSpec& spec) {
    if (spec.num_users < 1 || spec.num_items < 1) {
        throw std::invalid_argument("synthetic: need at least 1 user and 1 item");
    }
    if (spec.num_behaviors < 2) {
        throw std::invalid_argument("synthetic: need at least 2 behaviors (one auxiliary, one target)");
    }
    if (spec.blocks < 1 || spec.blocks > spec.num_users || spec.blocks > spec.num_items) {
        throw std::invalid_argument("synthetic: blocks must be in [1, min(users, items)]");
    }
    if (!(spec.aux_density > 0.0 && spec.aux_density <= 1.0)) {
        throw std::invalid_argument("synthetic: aux_density must be in (0, 1]");
    }
    if (!(spec.target_density > 0.0 && spec.target_density <= 1.0)) {
        throw std::invalid_argument("synthetic: target_density must be in (0, 1]");
    }
    if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0) {
        throw std::invalid_argument("synthetic: noise_rate must be in [0, 1)");
    }
    if (spec.noise_rate > 0.0 && spec.blocks < 2) {
        throw std::invalid_argument("synthetic: noise_rate > 0 requires at least 2 blocks");
    }
    if (!spec.behavior_labels.empty() &&
        static_cast<int>(spec.behavior_labels.size()) != spec.num_behaviors) {
        throw std::invalid_argument("synthetic: behavior_labels size must match num_behaviors");
    }
}

} // namespace

SyntheticResult generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    validate(spec);
    SyntheticResult result;
    Dataset& ds = result.dataset;
    ds.num_users = spec.num_users;
    ds.num_items = spec.num_items;
    ds.num_behaviors = spec.num_behaviors;
    if (spec.behavior_labels.empty()) {
        for (int b = 0; b + 1 < spec.num_behaviors; ++b) {
            ds.behavior_labels.push_back("aux" + std::to_string(b + 1));
        }
        ds.behavior_labels.push_back("target");
    } else {
        ds.behavior_labels = spec.behavior_labels;
    }
    for (int u = 0; u < spec.num_users; ++u) {
        ds.user_ids.push_back("u" + std::to_string(u));
        ds.user_index.emplace(ds.user_ids.back(), u);
    }
    for (int i = 0; i < spec.num_items; ++i) {
        ds.item_ids.push_back("i" + std::to_string(i));
        ds.item_index.emplace(ds.item_ids.back(), i);
    }

    const auto user_blocks = split_blocks(spec.num_users, spec.blocks);
    const auto item_blocks = split_blocks(spec.num_items, spec.blocks);
    Rng rng(derive_seed(seed, "synth"));
    std::int64_t ts = 0;

    for (int b = 0; b < spec.blocks; ++b) {
        const BlockRange items = item_blocks[static_cast<std::size_t>(b)];
        const int off_block = spec.num_items - items.size;
        const int per_behavior =
            std::max(1, static_cast<int>(std::lround(spec.aux_density * items.size)));
        if (per_behavior > items.size) {
            throw std::invalid_argument("synthetic: aux_density draws more items than the group holds");
        }
        const BlockRange users = user_blocks[static_cast<std::size_t>(b)];
        for (int u = users.start; u < users.start + users.size; ++u) {
            std::set<int> clean_support;
            for (int a = 0; a + 1 < spec.num_behaviors; ++a) {
                std::unordered_set<int> used;
                for (int n = 0; n < per_behavior; ++n) {
                    const bool noisy = rng.bernoulli(spec.noise_rate);
                    int item = -1;
                    for (int attempt = 0;; ++attempt) {
                        if (attempt >= 100000) {
                            throw std::runtime_error("synthetic: could not draw a fresh item");
                        }
                        if (noisy) {
                            const int k = static_cast<int>(rng.uniform_index(
                                static_cast<std::uint64_t>(off_block)));
                            item = k < items.start ? k : k + items.size;
                        } else {
                            item = items.start + static_cast<int>(rng.uniform_index(
                                                     static_cast<std::uint64_t>(items.size)));
                        }
                        if (used.insert(item).second) break;
                    }
                    ds.records.push_back({u, item, a, ts++});
                    if (noisy) {
                        result.noise.add(u, item, a);
                    } else {
                        clean_support.insert(item);
                    }
                }
            }
            if (clean_support.empty()) {
                throw std::runtime_error(
                    "synthetic: user " + ds.user_ids[static_cast<std::size_t>(u)] +
                    " got only noisy draws; raise aux_density or lower noise_rate");
            }
            std::vector<int> support(clean_support.begin(), clean_support.end());
            const int want = std::max(
                3, static_cast<int>(std::lround(spec.target_density * support.size())));
            const int n_target = std::min<int>(static_cast<int>(support.size()), want);
            for (int j = 0; j < n_target; ++j) {
                const auto pick =
                    j + rng.uniform_index(static_cast<std::uint64_t>(support.size() - j));
                std::swap(support[static_cast<std::size_t>(j)], support[pick]);
                ds.records.push_back(
                    {u, support[static_cast<std::size_t>(j)], spec.num_behaviors - 1, ts++});
            }
        }
    }
    return result;
}

void write_noise_labels(const NoiseLabels& noise, const Dataset& ds, std::ostream& out) {
    for (const auto& [u, i, b] : noise.entries) {
        out << ds.user_ids[static_cast<std::size_t>(u)] << '\t'
            << ds.item_ids[static_cast<std::size_t>(i)] << '\t'
            << ds.behavior_labels[static_cast<std::size_t>(b)] << '\n';
    }
}

void write_noise_labels_file(const NoiseLabels& noise, const Dataset& ds,
                             const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write noise label file: " + path);
    write_noise_labels(noise, ds, out);
}

NoiseLabels load_noise_labels(std::istream& in, const Dataset& ds, bool skip_unknown) {
    NoiseLabels noise;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t t1 = line.find('\t');
        const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
            throw std::runtime_error("noise labels line " + std::to_string(line_no) +
                                     ": expected 3 fields");
        }
        const std::string user = line.substr(0, t1);
        const std::string item = line.substr(t1 + 1, t2 - t1 - 1);
        const std::string behavior = line.substr(t2 + 1);
        auto uit = ds.user_index.find(user);
        auto iit = ds.item_index.find(item);
        auto bit = std::find(ds.behavior_labels.begin(), ds.behavior_labels.end(), behavior);
        if (uit == ds.user_index.end() || iit == ds.item_index.end() ||
            bit == ds.behavior_labels.end()) {
            if (skip_unknown) continue;
            throw std::runtime_error("noise labels line " + std::to_string(line_no) +
                                     ": id not present in dataset");
        }
        noise.add(uit->second, iit->second,
                  static_cast<int>(bit - ds.behavior_labels.begin()));
    }
    return noise;
}

NoiseLabels load_noise_labels_file(const std::string& path, const Dataset& ds,
                                   bool skip_unknown) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open noise label file: " + path);
    return load_noise_labels(in, ds, skip_unknown);
}

} // namespace dpt
