#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace dpt {

struct GradCheckReport {
    std::size_t checked = 0;   // scalar entries compared
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::vector<std::pair<std::string, double>> per_param; // name -> max rel err
    double seconds = 0.0;

    bool pass(double tol = 1e-4) const { return checked > 0 && max_rel_err <= tol; }
};

// Central finite differences against the tape gradient of the full joint
// objective (encode with relation aggregation, ranking loss over every
// behavior, reconstruction loss) on a built-in 6-user / 8-item / 3-behavior
// fixture with d=4, L=2. Every entry of every unfrozen parameter is checked.
// Relative error uses max(1, |analytic|, |numeric|) as denominator.
GradCheckReport run_gradient_check(std::uint64_t seed = 5);

} // namespace dpt
