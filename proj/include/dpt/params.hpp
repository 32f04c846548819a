#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dpt/tensor.hpp"

namespace dpt {

// A named trainable array with its gradient slot. Frozen parameters receive
// neither gradients nor optimizer updates; their bytes stay fixed for the
// remainder of a run.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool frozen = false;
};

// Name -> Parameter table. Iteration order is sorted by name, which makes
// checkpoint bytes and optimizer sweeps reproducible.
class ParameterStore {
public:
    Parameter& create(const std::string& name, std::size_t rows, std::size_t cols);

    // Xavier-uniform init in +-sqrt(6 / (rows + cols)), a pure function of
    // (seed, name, shape): draws come from Rng(derive_seed(seed, name)), so
    // adding parameters never perturbs existing ones.
    Parameter& create_xavier(const std::string& name, std::size_t rows, std::size_t cols,
                             std::uint64_t seed);

    // Replace an existing parameter's values with a fresh Xavier draw and
    // unfreeze it.
    void reinit_xavier(const std::string& name, std::uint64_t seed);

    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    void zero_grad();
    void freeze_all();
    void set_frozen(const std::string& name, bool frozen);

    // Number of scalar entries across unfrozen parameters.
    std::size_t trainable_entries() const;
    std::size_t size() const { return params_.size(); }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Parameter> params_;
};

} // namespace dpt
