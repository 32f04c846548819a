#include "dpt/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dpt {

namespace {

int intern(const std::string& raw, std::unordered_map<std::string, int>& index,
           std::vector<std::string>& ids) {
    auto it = index.find(raw);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(ids.size());
    index.emplace(raw, id);
    ids.push_back(raw);
    return id;
}

std::int64_t parse_timestamp(const std::string& field, std::size_t line_no) {
    std::int64_t ts = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto res = std::from_chars(first, last, ts);
    if (res.ec != std::errc{} || res.ptr != last || ts < 0) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": timestamp must be a non-negative integer, got '" + field +
                                 "'");
    }
    return ts;
}

} // namespace

std::string Dataset::summary() const {
    std::ostringstream os;
    os << num_users << " users, " << num_items << " items, " << num_behaviors
       << " behaviors, " << records.size() << " interactions";
    for (int b = 0; b < num_behaviors; ++b) {
        std::size_t n = 0;
        for (const auto& r : records) {
            if (r.behavior == b) ++n;
        }
        os << "\n  " << behavior_labels[static_cast<std::size_t>(b)] << ": " << n
           << (b == target_behavior() ? " (target)" : "");
    }
    return os.str();
}

Dataset load_interactions(std::istream& in, const std::vector<std::string>& behavior_labels) {
    if (behavior_labels.empty()) throw std::invalid_argument("behavior label list is empty");
    Dataset ds;
    ds.behavior_labels = behavior_labels;
    ds.num_behaviors = static_cast<int>(behavior_labels.size());
    std::unordered_map<std::string, int> behavior_index;
    for (std::size_t i = 0; i < behavior_labels.size(); ++i) {
        if (!behavior_index.emplace(behavior_labels[i], static_cast<int>(i)).second) {
            throw std::invalid_argument("duplicate behavior label: " + behavior_labels[i]);
        }
    }

    // (user, item, behavior) -> position in records, for dedup.
    std::map<std::tuple<int, int, int>, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            if (tab == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        if (fields.size() != 4) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                                     std::to_string(fields.size()));
        }
        auto bit = behavior_index.find(fields[2]);
        if (bit == behavior_index.end()) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": unknown behavior label '" +
                                     fields[2] + "'");
        }
        InteractionRecord rec;
        rec.user = intern(fields[0], ds.user_index, ds.user_ids);
        rec.item = intern(fields[1], ds.item_index, ds.item_ids);
        rec.behavior = bit->second;
        rec.timestamp = parse_timestamp(fields[3], line_no);

        const auto key = std::make_tuple(rec.user, rec.item, rec.behavior);
        auto sit = seen.find(key);
        if (sit == seen.end()) {
            seen.emplace(key, ds.records.size());
            ds.records.push_back(rec);
        } else if (rec.timestamp < ds.records[sit->second].timestamp) {
            ds.records[sit->second].timestamp = rec.timestamp;
        }
    }
    ds.num_users = static_cast<int>(ds.user_ids.size());
    ds.num_items = static_cast<int>(ds.item_ids.size());
    return ds;
}

Dataset load_interactions_file(const std::string& path,
                               const std::vector<std::string>& behavior_labels) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    return load_interactions(in, behavior_labels);
}

void serialize_dataset(const Dataset& ds, std::ostream& out) {
    for (const auto& r : ds.records) {
        out << ds.user_ids[static_cast<std::size_t>(r.user)] << '\t'
            << ds.item_ids[static_cast<std::size_t>(r.item)] << '\t'
            << ds.behavior_labels[static_cast<std::size_t>(r.behavior)] << '\t' << r.timestamp
            << '\n';
    }
}

void serialize_dataset_file(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    serialize_dataset(ds, out);
}

Dataset filter_min_target(const Dataset& ds, int min_count) {
    if (min_count < 1) throw std::invalid_argument("filter_min_target: min_count must be >= 1");
    std::vector<int> target_counts(static_cast<std::size_t>(ds.num_users), 0);
    for (const auto& r : ds.records) {
        if (r.behavior == ds.target_behavior()) ++target_counts[static_cast<std::size_t>(r.user)];
    }
    Dataset out;
    out.behavior_labels = ds.behavior_labels;
    out.num_behaviors = ds.num_behaviors;
    for (const auto& r : ds.records) {
        if (target_counts[static_cast<std::size_t>(r.user)] < min_count) continue;
        InteractionRecord rec = r;
        rec.user = intern(ds.user_ids[static_cast<std::size_t>(r.user)], out.user_index, out.user_ids);
        rec.item = intern(ds.item_ids[static_cast<std::size_t>(r.item)], out.item_index, out.item_ids);
        out.records.push_back(rec);
    }
    out.num_users = static_cast<int>(out.user_ids.size());
    out.num_items = static_cast<int>(out.item_ids.size());
    if (out.num_users == 0) {
        throw std::runtime_error("filter_min_target: no user has " + std::to_string(min_count) +
                                 " target interactions");
    }
    return out;
}

SplitDataset leave_one_out_split(const Dataset& ds) {
    // Per user: (timestamp, item) of the current best held-out candidate.
    std::vector<std::pair<std::int64_t, int>> best(static_cast<std::size_t>(ds.num_users),
                                                   {-1, -1});
    std::vector<int> target_counts(static_cast<std::size_t>(ds.num_users), 0);
    for (const auto& r : ds.records) {
        if (r.behavior != ds.target_behavior()) continue;
        auto& b = best[static_cast<std::size_t>(r.user)];
        ++target_counts[static_cast<std::size_t>(r.user)];
        if (std::make_pair(r.timestamp, r.item) > b) b = {r.timestamp, r.item};
    }
    for (int u = 0; u < ds.num_users; ++u) {
        if (target_counts[static_cast<std::size_t>(u)] < 2) {
            throw std::runtime_error("leave_one_out_split: user '" +
                                     ds.user_ids[static_cast<std::size_t>(u)] +
                                     "' has fewer than 2 target interactions");
        }
    }
    SplitDataset split;
    split.train.num_users = ds.num_users;
    split.train.num_items = ds.num_items;
    split.train.num_behaviors = ds.num_behaviors;
    split.train.behavior_labels = ds.behavior_labels;
    split.train.user_ids = ds.user_ids;
    split.train.item_ids = ds.item_ids;
    split.train.user_index = ds.user_index;
    split.train.item_index = ds.item_index;
    for (const auto& r : ds.records) {
        if (r.behavior == ds.target_behavior() &&
            best[static_cast<std::size_t>(r.user)] == std::make_pair(r.timestamp, r.item)) {
            continue;
        }
        split.train.records.push_back(r);
    }
    split.test_pairs.reserve(static_cast<std::size_t>(ds.num_users));
    for (int u = 0; u < ds.num_users; ++u) {
        split.test_pairs.push_back({u, best[static_cast<std::size_t>(u)].second});
    }
    return split;
}

Dataset drop_behaviors(const Dataset& ds, const std::vector<std::string>& labels) {
    if (labels.empty()) return ds;
    std::vector<bool> dropped(static_cast<std::size_t>(ds.num_behaviors), false);
    for (const auto& label : labels) {
        auto it = std::find(ds.behavior_labels.begin(), ds.behavior_labels.end(), label);
        if (it == ds.behavior_labels.end()) {
            throw std::invalid_argument("drop_behaviors: unknown behavior label '" + label + "'");
        }
        const auto idx = static_cast<std::size_t>(it - ds.behavior_labels.begin());
        if (static_cast<int>(idx) == ds.target_behavior()) {
            throw std::invalid_argument("drop_behaviors: cannot drop the target behavior '" +
                                        label + "'");
        }
        dropped[idx] = true;
    }
    std::vector<int> remap(static_cast<std::size_t>(ds.num_behaviors), -1);
    Dataset out;
    for (int b = 0; b < ds.num_behaviors; ++b) {
        if (dropped[static_cast<std::size_t>(b)]) continue;
        remap[static_cast<std::size_t>(b)] = static_cast<int>(out.behavior_labels.size());
        out.behavior_labels.push_back(ds.behavior_labels[static_cast<std::size_t>(b)]);
    }
    out.num_behaviors = static_cast<int>(out.behavior_labels.size());
    for (const auto& r : ds.records) {
        if (dropped[static_cast<std::size_t>(r.behavior)]) continue;
        InteractionRecord rec = r;
        rec.user = intern(ds.user_ids[static_cast<std::size_t>(r.user)], out.user_index, out.user_ids);
        rec.item = intern(ds.item_ids[static_cast<std::size_t>(r.item)], out.item_index, out.item_ids);
        rec.behavior = remap[static_cast<std::size_t>(r.behavior)];
        out.records.push_back(rec);
    }
    out.num_users = static_cast<int>(out.user_ids.size());
    out.num_items = static_cast<int>(out.item_ids.size());
    return out;
}

} // namespace dpt
