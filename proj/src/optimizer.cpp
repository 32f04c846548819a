#include "dpt/optimizer.hpp"

#include <cmath>

namespace dpt {

void AdamW::step(ParameterStore& store) {
    ++step_;
    const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : store) {
        if (p.frozen) continue;
        auto it = moments_.find(name);
        if (it == moments_.end()) {
            Moments m;
            m.first = Tensor(p.value.rows, p.value.cols);
            m.second = Tensor(p.value.rows, p.value.cols);
            it = moments_.emplace(name, std::move(m)).first;
        }
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            const double g = p.grad.data[i];
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g;
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = m.data[i] / bias1;
            const double v_hat = v.data[i] / bias2;
            p.value.data[i] -= cfg_.learning_rate *
                               (m_hat / (std::sqrt(v_hat) + cfg_.epsilon) +
                                cfg_.weight_decay * p.value.data[i]);
        }
    }
}

} // namespace dpt
