#pragma once

#include <map>
#include <string>

#include "dpt/params.hpp"

namespace dpt {

struct AdamWConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with decoupled weight decay. Frozen parameters are skipped entirely:
// no moment state, no update.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(ParameterStore& store);

    long step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    struct Moments {
        Tensor first;
        Tensor second;
    };

    AdamWConfig cfg_;
    std::map<std::string, Moments> moments_;
    long step_ = 0;
};

} // namespace dpt
