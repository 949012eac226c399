#pragma once

// Verifiable rewards for rollouts (correctness + format adherence) and
// group-relative advantage normalization.

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "vtrace/errors.hpp"
#include "vtrace/trace.hpp"

namespace vtrace {

enum class FormatRewardMode {
    graded,  // 0.2 per satisfied check
    binary,  // 1.0 iff all five checks pass
};

struct RewardConfig {
    FormatRewardMode format_mode = FormatRewardMode::graded;
    // Added to the population std in the advantage denominator.
    double std_epsilon = 1e-8;
};

struct RewardBreakdown {
    int correctness = 0;
    double format = 0.0;
    double total = 0.0;

    friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

inline char normalize_ground_truth(std::string_view ground_truth) {
    const auto gt = detail::trim(ground_truth);
    if (gt.size() == 1) {
        const char c = gt.front();
        if (c >= 'A' && c <= 'Z') return c;
        if (c >= 'a' && c <= 'z') return static_cast<char>(c - 'a' + 'A');
    }
    throw InvalidGroundTruth("ground truth must be a single letter A-Z, got '" +
                             std::string(ground_truth) + "'");
}

inline int correctness_reward(std::string_view trace_text, std::string_view ground_truth) {
    const char gt = normalize_ground_truth(ground_truth);
    const auto answer = extract_answer(trace_text);
    return answer && *answer == gt ? 1 : 0;
}

inline int correctness_reward(std::string_view trace_text, char ground_truth) {
    return correctness_reward(trace_text, std::string_view(&ground_truth, 1));
}

/// Number of the five format checks satisfied: time, caption, think, answer,
/// and (well nested AND spans parseable).
inline int format_checks_passed(const FormatReport& r) noexcept {
    return int(r.has_time) + int(r.has_caption) + int(r.has_think) + int(r.has_answer) +
           int(r.well_nested && r.spans_parseable);
}

inline double format_reward(std::string_view trace_text,
                            FormatRewardMode mode = FormatRewardMode::graded) {
    const int passed = format_checks_passed(validate_format(trace_text));
    if (mode == FormatRewardMode::binary) return passed == 5 ? 1.0 : 0.0;
    return 0.2 * passed;
}

inline RewardBreakdown total_reward(std::string_view trace_text, std::string_view ground_truth,
                                    FormatRewardMode mode = FormatRewardMode::graded) {
    RewardBreakdown r;
    r.correctness = correctness_reward(trace_text, ground_truth);
    r.format = format_reward(trace_text, mode);
    r.total = r.correctness + r.format;
    return r;
}

/// z-scores rewards within a group using the population standard deviation.
/// All-equal groups yield zeros.
inline std::vector<double> group_advantages(std::span<const double> rewards,
                                            double std_epsilon = 1e-8) {
    const std::size_t g = rewards.size();
    if (g < 2) {
        throw GroupTooSmall("advantage normalization needs at least 2 rewards, got " +
                            std::to_string(g));
    }
    std::vector<double> adv(g, 0.0);
    // exact check: rounding in the mean would otherwise leave a ~1e-17 std
    bool all_equal = true;
    for (double r : rewards) all_equal = all_equal && r == rewards[0];
    if (all_equal) return adv;

    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g);
    const double sd = std::sqrt(var);

    if (sd == 0.0) return adv;
    const double denom = sd + std_epsilon;
    for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / denom;
    return adv;
}

}  // namespace vtrace
