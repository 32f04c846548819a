#include "dpt/params.hpp"

#include <cmath>
#include <stdexcept>

#include "dpt/rng.hpp"

namespace dpt {

Parameter& ParameterStore::create(const std::string& name, std::size_t rows, std::size_t cols) {
    if (params_.count(name)) throw std::invalid_argument("parameter already exists: " + name);
    Parameter p;
    p.name = name;
    p.value = Tensor(rows, cols);
    p.grad = Tensor(rows, cols);
    return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::create_xavier(const std::string& name, std::size_t rows,
                                         std::size_t cols, std::uint64_t seed) {
    Parameter& p = create(name, rows, cols);
    Rng rng(derive_seed(seed, name));
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& v : p.value.data) v = rng.uniform(-limit, limit);
    return p;
}

void ParameterStore::reinit_xavier(const std::string& name, std::uint64_t seed) {
    Parameter& p = get(name);
    Rng rng(derive_seed(seed, name));
    const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows + p.value.cols));
    for (double& v : p.value.data) v = rng.uniform(-limit, limit);
    p.grad = Tensor(p.value.rows, p.value.cols);
    p.frozen = false;
}

Parameter& ParameterStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
}

const Parameter& ParameterStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
}

void ParameterStore::zero_grad() {
    for (auto& [name, p] : params_) {
        std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
    }
}

void ParameterStore::freeze_all() {
    for (auto& [name, p] : params_) p.frozen = true;
}

void ParameterStore::set_frozen(const std::string& name, bool frozen) {
    get(name).frozen = frozen;
}

std::size_t ParameterStore::trainable_entries() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) {
        if (!p.frozen) n += p.value.size();
    }
    return n;
}

} // namespace dpt
