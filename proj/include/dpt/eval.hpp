#pragma once

#include <cstdint>
#include <vector>

#include "dpt/denoise.hpp"
#include "dpt/encoder.hpp"
#include "dpt/graphs.hpp"
#include "dpt/synthetic.hpp"

namespace dpt {

struct RankingResult {
    int user = 0;
    int rank = 0;       // 1-based position of the held-out item
    int candidates = 0; // candidate-set size the rank was computed in
};

struct MetricReport {
    double hr = 0.0;
    double ndcg = 0.0;
    int k = 10;
    int users = 0;
    std::vector<RankingResult> per_user;
};

struct EvalOptions {
    int k = 10;
    bool sampled = false; // false: rank against every unseen item
    int negatives = 99;   // sampled mode candidate count (plus the held-out)
    int threads = 1;
    std::uint64_t seed = 1;
};

// Rank the held-out item among the candidates by inner product on the fused
// representations. Candidates are all items minus the user's train-time
// target interactions, or `negatives` sampled ones. Equal scores rank the
// lower item id first.
RankingResult rank_target(const Representations& reps, const BipartiteGraph& train_target,
                          const TestPair& test, const EvalOptions& opt);

double hr_at_k(const std::vector<RankingResult>& results, int k);
// Single-relevant-item form: each user contributes 1/log2(rank + 1) when the
// rank is within k, else 0.
double ndcg_at_k(const std::vector<RankingResult>& results, int k);

// Ranks every test pair (sharded over opt.threads with a deterministic,
// order-preserving merge) and aggregates both metrics.
MetricReport evaluate(const Representations& reps, const BipartiteGraph& train_target,
                      const std::vector<TestPair>& tests, const EvalOptions& opt);

struct DenoiseQuality {
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
    std::size_t removed = 0;
    std::size_t noisy = 0;
    std::size_t hits = 0;
};

// Precision/recall of the pruned edge set against the planted noise labels.
// Empty removed set: precision 1 (vacuous). No planted noise: recall 1.
DenoiseQuality denoise_quality(const std::vector<RemovedEdge>& removed,
                               const NoiseLabels& noise);

} // namespace dpt
