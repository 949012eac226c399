#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "vtrace/grpo.hpp"

namespace vtrace {

struct GradientCheckResult {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t entries = 0;
};

// Relative error with both sides treated as equal when they are below `floor`
// in magnitude (clipped tokens give exactly-zero gradients on both sides).
inline double relative_error(double a, double b, double floor = 1e-12) noexcept {
    const double scale = std::max(std::abs(a), std::abs(b));
    if (scale < floor) return 0.0;
    return std::abs(a - b) / scale;
}

/// Compares grpo_gradient against central differences of the objective,
/// perturbing one current-policy log-probability at a time by +-h. The
/// objective is evaluated in long double so cancellation against its O(1)
/// value does not swamp small gradient entries.
inline GradientCheckResult check_grpo_gradient(const RolloutGroup& group,
                                               std::span<const double> advantages,
                                               const GrpoConfig& cfg, double h = 1e-6) {
    using ld = long double;
    const auto analytic = grpo_gradient(group, advantages, cfg);
    GradientCheckResult res;
    const ld step = h;
    for (std::size_t i = 0; i < group.traces.size(); ++i) {
        const auto& cur = group.traces[i].cur;
        for (std::size_t t = 0; t < cur.size(); ++t) {
            auto at = [&](ld delta) {
                return detail::objective_in<ld>(group, advantages, cfg, detail::Shift{i, t}, delta);
            };
            ld numeric = 0;
            if (static_cast<ld>(cur[t]) + step <= 0) {
                numeric = (at(step) - at(-step)) / (2 * step);
            } else {
                // log p = 0 leaves no room above: second-order backward difference
                numeric = (3 * at(0) - 4 * at(-step) + at(-2 * step)) / (2 * step);
            }
            const double a = analytic[i][t];
            const double n = static_cast<double>(numeric);
            res.max_relative_error = std::max(res.max_relative_error, relative_error(a, n));
            res.max_absolute_error = std::max(res.max_absolute_error, std::abs(a - n));
            ++res.entries;
        }
    }
    return res;
}

}  // namespace vtrace
