#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace dpt {

// One (user, item, behavior, timestamp) event. Ids are dense indices; the
// highest behavior index is the target behavior.
struct InteractionRecord {
    int user = 0;
    int item = 0;
    int behavior = 0;
    std::int64_t timestamp = 0;
};

struct Dataset {
    int num_users = 0;
    int num_items = 0;
    int num_behaviors = 0;
    // Deduplicated per (user, item, behavior) keeping the earliest timestamp;
    // stored in first-occurrence order so serialize -> load round-trips to
    // identical dense structures.
    std::vector<InteractionRecord> records;
    std::vector<std::string> user_ids; // dense -> raw
    std::vector<std::string> item_ids;
    std::unordered_map<std::string, int> user_index; // raw -> dense
    std::unordered_map<std::string, int> item_index;
    std::vector<std::string> behavior_labels; // ordered, last = target

    int target_behavior() const { return num_behaviors - 1; }
    std::string summary() const;
};

struct TestPair {
    int user = 0;
    int item = 0;
};

// Train split plus one held-out target item per user. The train dataset keeps
// the parent's dense id maps, so held-out items stay inside the item universe
// even when their last target interaction was their only appearance.
struct SplitDataset {
    Dataset train;
    std::vector<TestPair> test_pairs;
};

// Parse `user<TAB>item<TAB>behavior<TAB>timestamp` lines. Behavior column
// carries labels from `behavior_labels` (ordered, last = target). Raw ids are
// arbitrary strings, remapped densely by first appearance.
Dataset load_interactions(std::istream& in, const std::vector<std::string>& behavior_labels);
Dataset load_interactions_file(const std::string& path,
                               const std::vector<std::string>& behavior_labels);

// Inverse of load_interactions for the same label list: writes records in
// stored order with raw ids.
void serialize_dataset(const Dataset& ds, std::ostream& out);
void serialize_dataset_file(const Dataset& ds, const std::string& path);

// Remove users with fewer than min_count target-behavior records, together
// with all their records; both id spaces are re-densified by first appearance
// among the surviving records.
Dataset filter_min_target(const Dataset& ds, int min_count = 3);

// Per user, hold out the target record with the largest timestamp (ties: the
// largest item id). Requires every user to have at least two target records.
SplitDataset leave_one_out_split(const Dataset& ds);

// Drop all records under the named behaviors and remove the labels from the
// behavior list. The target behavior cannot be dropped.
Dataset drop_behaviors(const Dataset& ds, const std::vector<std::string>& labels);

} // namespace dpt
