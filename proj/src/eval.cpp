#include "dpt/eval.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include "dpt/rng.hpp"

namespace dpt {

namespace {

double score_pair(const Representations& reps, int user, int item) {
    double acc = 0.0;
    const auto u = static_cast<std::size_t>(user);
    const auto i = static_cast<std::size_t>(item);
    for (std::size_t c = 0; c < reps.user_fused.cols; ++c) {
        acc += reps.user_fused.at(u, c) * reps.item_fused.at(i, c);
    }
    return acc;
}

// Does candidate c outrank the held-out item? Ties go to the lower id.
bool beats(double cand_score, int cand, double held_score, int held) {
    if (cand_score != held_score) return cand_score > held_score;
    return cand < held;
}

} // namespace

RankingResult rank_target(const Representations& reps, const BipartiteGraph& train_target,
                          const TestPair& test, const EvalOptions& opt) {
    const int num_items = static_cast<int>(reps.item_fused.rows);
    if (train_target.has_edge(test.user, test.item)) {
        throw std::invalid_argument("rank_target: held-out item is a train-time interaction");
    }
    const double held_score = score_pair(reps, test.user, test.item);
    RankingResult res;
    res.user = test.user;
    if (!opt.sampled) {
        int better = 0;
        int candidates = 0;
        for (int i = 0; i < num_items; ++i) {
            if (train_target.has_edge(test.user, i)) continue;
            ++candidates;
            if (i == test.item) continue;
            if (beats(score_pair(reps, test.user, i), i, held_score, test.item)) ++better;
        }
        res.rank = better + 1;
        res.candidates = candidates;
        return res;
    }

    Rng rng(derive_seed(opt.seed, "eval/user/" + std::to_string(test.user)));
    const int excluded =
        static_cast<int>(train_target.user_items[static_cast<std::size_t>(test.user)].size());
    const int available = num_items - excluded - 1; // valid negatives
    const int want = std::min(opt.negatives, available);
    std::unordered_set<int> drawn;
    int better = 0;
    while (static_cast<int>(drawn.size()) < want) {
        const int cand =
            static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_items)));
        if (cand == test.item || train_target.has_edge(test.user, cand)) continue;
        if (!drawn.insert(cand).second) continue;
        if (beats(score_pair(reps, test.user, cand), cand, held_score, test.item)) ++better;
    }
    res.rank = better + 1;
    res.candidates = want + 1;
    return res;
}

double hr_at_k(const std::vector<RankingResult>& results, int k) {
    if (results.empty()) throw std::invalid_argument("hr_at_k: no results");
    std::size_t hits = 0;
    for (const auto& r : results) {
        if (r.rank <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

double ndcg_at_k(const std::vector<RankingResult>& results, int k) {
    if (results.empty()) throw std::invalid_argument("ndcg_at_k: no results");
    double acc = 0.0;
    for (const auto& r : results) {
        if (r.rank <= k) acc += 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
    }
    return acc / static_cast<double>(results.size());
}

MetricReport evaluate(const Representations& reps, const BipartiteGraph& train_target,
                      const std::vector<TestPair>& tests, const EvalOptions& opt) {
    if (tests.empty()) throw std::invalid_argument("evaluate: no test pairs");
    std::vector<RankingResult> results(tests.size());
    const int threads = std::max(1, opt.threads);
    if (threads == 1) {
        for (std::size_t t = 0; t < tests.size(); ++t) {
            results[t] = rank_target(reps, train_target, tests[t], opt);
        }
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mu;
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t t = static_cast<std::size_t>(w); t < tests.size();
                         t += static_cast<std::size_t>(threads)) {
                        results[t] = rank_target(reps, train_target, tests[t], opt);
                    }
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }
    MetricReport report;
    report.k = opt.k;
    report.users = static_cast<int>(tests.size());
    report.hr = hr_at_k(results, opt.k);
    report.ndcg = ndcg_at_k(results, opt.k);
    report.per_user = std::move(results);
    return report;
}

DenoiseQuality denoise_quality(const std::vector<RemovedEdge>& removed,
                               const NoiseLabels& noise) {
    DenoiseQuality q;
    q.removed = removed.size();
    q.noisy = noise.index.size();
    for (const auto& e : removed) {
        if (noise.contains(e.user, e.item, e.behavior)) ++q.hits;
    }
    q.precision = q.removed == 0
                      ? 1.0
                      : static_cast<double>(q.hits) / static_cast<double>(q.removed);
    q.recall =
        q.noisy == 0 ? 1.0 : static_cast<double>(q.hits) / static_cast<double>(q.noisy);
    q.f1 = (q.precision + q.recall) > 0.0
               ? 2.0 * q.precision * q.recall / (q.precision + q.recall)
               : 0.0;
    return q;
}

} // namespace dpt
