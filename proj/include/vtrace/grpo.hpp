#pragma once

// SFT negative log-likelihood and the GRPO clipped surrogate with a KL
// penalty, evaluated over per-token log-probabilities supplied by a trainer.
// Nothing here owns model parameters; gradients are taken with respect to the
// current policy's token log-probabilities.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vtrace/errors.hpp"
#include "vtrace/rewards.hpp"

namespace vtrace {

/// Log-probabilities of the sampled tokens under one policy. Every entry is
/// finite and <= 0. A default-constructed value is empty and is rejected by
/// every operation.
class TokenLogProbs {
public:
    TokenLogProbs() = default;
    explicit TokenLogProbs(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw EmptySequence("token log-probabilities are empty");
        for (std::size_t t = 0; t < values_.size(); ++t) {
            if (!std::isfinite(values_[t]) || values_[t] > 0.0) {
                throw InvalidLogProbs("log-probability at token " + std::to_string(t) +
                                      " is not finite and <= 0");
            }
        }
    }

    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    double operator[](std::size_t t) const noexcept { return values_[t]; }

    friend bool operator==(const TokenLogProbs&, const TokenLogProbs&) = default;

private:
    std::vector<double> values_;
};

enum class RatioLevel { token, sequence };

struct GrpoConfig {
    double epsilon = 0.2;
    double beta = 0.04;
    RatioLevel ratio_level = RatioLevel::token;

    void validate() const {
        if (!(epsilon > 0.0 && epsilon <= 1.0))
            throw InvalidConfig("clip epsilon must lie in (0, 1]");
        if (!(beta >= 0.0) || !std::isfinite(beta))
            throw InvalidConfig("KL coefficient beta must be finite and >= 0");
    }
};

struct RolloutTrace {
    std::string text;
    TokenLogProbs cur;
    TokenLogProbs old;
    TokenLogProbs ref;
    RewardBreakdown reward;
};

struct RolloutGroup {
    std::string question_id;
    char ground_truth = 'A';
    std::vector<RolloutTrace> traces;
};

enum class SftReduction { mean, sum };

inline double sft_loss(const TokenLogProbs& target, SftReduction reduction = SftReduction::mean) {
    if (target.empty()) throw EmptySequence("SFT target has no tokens");
    double nll = 0.0;
    for (double lp : target.values()) nll -= lp;
    if (reduction == SftReduction::mean) nll /= static_cast<double>(target.size());
    return nll;
}

namespace detail {

inline void require_aligned(const TokenLogProbs& a, const TokenLogProbs& b, const char* what) {
    if (a.empty() || b.empty()) throw EmptySequence(std::string(what) + ": empty sequence");
    if (a.size() != b.size()) {
        throw LengthMismatch(std::string(what) + ": " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + " tokens");
    }
}

inline double clip(double x, double lo, double hi) noexcept { return std::min(std::max(x, lo), hi); }

// Whether min(r*A, clip(r)*A) takes the unclipped branch. Ties go to the
// unclipped branch, so its derivative is used on the clip boundary.
inline bool surrogate_unclipped(double ratio, double adv, double eps) noexcept {
    return ratio * adv <= clip(ratio, 1.0 - eps, 1.0 + eps) * adv;
}

inline double surrogate(double ratio, double adv, double eps) noexcept {
    return std::min(ratio * adv, clip(ratio, 1.0 - eps, 1.0 + eps) * adv);
}

}  // namespace detail

/// Token level: exp(cur_t - old_t) per token. Sequence level: a single ratio
/// exp(sum(cur) - sum(old)).
inline std::vector<double> importance_ratios(const TokenLogProbs& cur, const TokenLogProbs& old,
                                             RatioLevel level = RatioLevel::token) {
    detail::require_aligned(cur, old, "importance_ratios");
    if (level == RatioLevel::sequence) {
        double diff = 0.0;
        for (std::size_t t = 0; t < cur.size(); ++t) diff += cur[t] - old[t];
        return {std::exp(diff)};
    }
    std::vector<double> ratios(cur.size());
    for (std::size_t t = 0; t < cur.size(); ++t) ratios[t] = std::exp(cur[t] - old[t]);
    return ratios;
}

/// Token-mean of exp(x) - x - 1 with x = ref_t - cur_t.
inline double kl_penalty(const TokenLogProbs& cur, const TokenLogProbs& ref) {
    detail::require_aligned(cur, ref, "kl_penalty");
    double sum = 0.0;
    for (std::size_t t = 0; t < cur.size(); ++t) {
        const double x = ref[t] - cur[t];
        sum += std::expm1(x) - x;
    }
    return sum / static_cast<double>(cur.size());
}

namespace detail {

inline void require_group(const RolloutGroup& group, std::span<const double> advantages,
                          const GrpoConfig& cfg) {
    cfg.validate();
    if (group.traces.size() < 2) {
        throw GroupTooSmall("group '" + group.question_id + "' has " +
                            std::to_string(group.traces.size()) + " trace(s), need at least 2");
    }
    if (advantages.size() != group.traces.size()) {
        throw LengthMismatch("group '" + group.question_id + "': " +
                             std::to_string(advantages.size()) + " advantages for " +
                             std::to_string(group.traces.size()) + " traces");
    }
    for (const auto& tr : group.traces) {
        require_aligned(tr.cur, tr.old, "cur/old");
        require_aligned(tr.cur, tr.ref, "cur/ref");
    }
}

}  // namespace detail

/// Clipped surrogate for one trace: token-mean of the per-token surrogate,
/// or the single sequence-ratio surrogate.
inline double trace_surrogate(const RolloutTrace& tr, double advantage, const GrpoConfig& cfg) {
    const auto ratios = importance_ratios(tr.cur, tr.old, cfg.ratio_level);
    double s = 0.0;
    for (double r : ratios) s += detail::surrogate(r, advantage, cfg.epsilon);
    return s / static_cast<double>(ratios.size());
}

namespace detail {

// The objective evaluated in precision T, optionally with cur_{i,t} shifted by
// `delta` (applied in T, so the shift is exact for extended types).
struct Shift {
    std::size_t trace;
    std::size_t token;
};

template <std::floating_point T>
T objective_in(const RolloutGroup& group, std::span<const double> advantages, const GrpoConfig& cfg,
               std::optional<Shift> shift = std::nullopt, T delta = 0) {
    const T eps = static_cast<T>(cfg.epsilon);
    T total = 0;
    for (std::size_t i = 0; i < group.traces.size(); ++i) {
        const auto& tr = group.traces[i];
        const T adv = static_cast<T>(advantages[i]);
        const std::size_t n = tr.cur.size();
        auto cur = [&](std::size_t t) {
            const T v = static_cast<T>(tr.cur[t]);
            return shift && shift->trace == i && shift->token == t ? v + delta : v;
        };
        auto surrogate = [&](T r) {
            return std::min(r * adv, std::clamp(r, T(1) - eps, T(1) + eps) * adv);
        };
        T sur = 0;
        if (cfg.ratio_level == RatioLevel::sequence) {
            T diff = 0;
            for (std::size_t t = 0; t < n; ++t) diff += cur(t) - static_cast<T>(tr.old[t]);
            sur = surrogate(std::exp(diff));
        } else {
            for (std::size_t t = 0; t < n; ++t) sur += surrogate(std::exp(cur(t) - static_cast<T>(tr.old[t])));
            sur /= static_cast<T>(n);
        }
        T kl = 0;
        for (std::size_t t = 0; t < n; ++t) {
            const T x = static_cast<T>(tr.ref[t]) - cur(t);
            kl += std::expm1(x) - x;
        }
        kl /= static_cast<T>(n);
        total += sur - static_cast<T>(cfg.beta) * kl;
    }
    return total / static_cast<T>(group.traces.size());
}

}  // namespace detail

/// (1/G) * sum_i [ surrogate_i - beta * KL_i ].
inline double grpo_objective(const RolloutGroup& group, std::span<const double> advantages,
                             const GrpoConfig& cfg = {}) {
    detail::require_group(group, advantages, cfg);
    return detail::objective_in<double>(group, advantages, cfg);
}

/// Analytic dJ/d cur_{i,t}, shaped like the group's traces.
inline std::vector<std::vector<double>> grpo_gradient(const RolloutGroup& group,
                                                      std::span<const double> advantages,
                                                      const GrpoConfig& cfg = {}) {
    detail::require_group(group, advantages, cfg);
    const double inv_g = 1.0 / static_cast<double>(group.traces.size());
    std::vector<std::vector<double>> grad;
    grad.reserve(group.traces.size());

    for (std::size_t i = 0; i < group.traces.size(); ++i) {
        const auto& tr = group.traces[i];
        const double adv = advantages[i];
        const std::size_t n = tr.cur.size();
        const double inv_n = 1.0 / static_cast<double>(n);
        std::vector<double> g(n, 0.0);

        const auto ratios = importance_ratios(tr.cur, tr.old, cfg.ratio_level);
        if (cfg.ratio_level == RatioLevel::sequence) {
            // d/d cur_t of exp(sum cur - sum old) is the ratio itself
            const double r = ratios.front();
            if (detail::surrogate_unclipped(r, adv, cfg.epsilon))
                std::fill(g.begin(), g.end(), r * adv * inv_g);
        } else {
            for (std::size_t t = 0; t < n; ++t) {
                if (detail::surrogate_unclipped(ratios[t], adv, cfg.epsilon))
                    g[t] = ratios[t] * adv * inv_n * inv_g;
            }
        }
        // d/d cur of exp(ref - cur) - (ref - cur) - 1 is 1 - exp(ref - cur)
        for (std::size_t t = 0; t < n; ++t) {
            const double x = tr.ref[t] - tr.cur[t];
            g[t] -= cfg.beta * (-std::expm1(x)) * inv_n * inv_g;
        }
        grad.push_back(std::move(g));
    }
    return grad;
}

}  // namespace vtrace
