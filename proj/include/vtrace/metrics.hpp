#pragma once

// Temporal grounding metrics (IoU, mIoU, Recall@K) and caption similarity
// metrics (BLEU@1, METEOR with exact unigram matching, ROUGE-L).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ranges>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vtrace/errors.hpp"
#include "vtrace/trace.hpp"

namespace vtrace {

using TokenSequence = std::vector<std::string>;

struct GroundingInstance {
    std::string id;
    std::vector<TimeSpan> predictions;
    std::vector<TimeSpan> ground_truths;
};

struct CaptionPair {
    std::string id;
    std::string candidate;
    std::string reference;
};

struct MeteorParams {
    double recall_weight = 9.0;  // F_mean = 10PR / (R + 9P)
    double gamma = 0.5;
    double exponent = 3.0;
    // exact chunk minimization up to this many reference tokens
    std::size_t exact_limit = 64;
    // node budget for the exact search before falling back to greedy
    std::size_t exact_state_budget = 200000;
};

struct MetricsConfig {
    double rouge_beta = 1.2;
    MeteorParams meteor;
};

// ---------------------------------------------------------------------------
// Grounding

inline double interval_iou(const TimeSpan& a, const TimeSpan& b) noexcept {
    const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
    if (uni <= 0.0) return a == b ? 1.0 : 0.0;
    // disjoint zero-length spans give uni > 0 and inter == 0
    return std::clamp(inter / uni, 0.0, 1.0);
}

namespace detail {

inline void require_corpus(std::span<const GroundingInstance> instances) {
    std::size_t gts = 0;
    for (const auto& inst : instances) {
        if (inst.ground_truths.empty())
            throw EmptyCorpus("grounding instance '" + inst.id + "' has no ground-truth spans");
        gts += inst.ground_truths.size();
    }
    if (gts == 0) throw EmptyCorpus("grounding corpus is empty");
}

inline double best_iou(const TimeSpan& gt, std::span<const TimeSpan> preds) noexcept {
    double best = 0.0;
    for (const auto& p : preds) best = std::max(best, interval_iou(p, gt));
    return best;
}

}  // namespace detail

/// Mean over every ground-truth span in the corpus of its best IoU against
/// the predictions of the same instance.
inline double miou(std::span<const GroundingInstance> instances) {
    detail::require_corpus(instances);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& inst : instances) {
        for (const auto& gt : inst.ground_truths) {
            sum += detail::best_iou(gt, inst.predictions);
            ++n;
        }
    }
    return sum / static_cast<double>(n);
}

inline double recall_at_k(std::span<const GroundingInstance> instances, double k) {
    if (!(k > 0.0 && k <= 1.0)) throw InvalidThreshold("Recall@K threshold must lie in (0, 1]");
    detail::require_corpus(instances);
    std::size_t hit = 0;
    std::size_t n = 0;
    for (const auto& inst : instances) {
        for (const auto& gt : inst.ground_truths) {
            if (detail::best_iou(gt, inst.predictions) >= k) ++hit;
            ++n;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Captions

/// Lowercases ASCII, splits on whitespace, strips ASCII punctuation from both
/// ends of each token and drops empties.
inline TokenSequence tokenize(std::string_view text) {
    auto is_punct = [](char c) {
        return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
               (c >= '{' && c <= '~');
    };
    TokenSequence out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && detail::is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !detail::is_space(text[j])) ++j;
        std::string_view word = text.substr(i, j - i);
        while (!word.empty() && is_punct(word.front())) word.remove_prefix(1);
        while (!word.empty() && is_punct(word.back())) word.remove_suffix(1);
        if (!word.empty()) {
            std::string tok(word);
            for (char& c : tok)
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            out.push_back(std::move(tok));
        }
        i = j;
    }
    return out;
}

/// Clipped unigram precision times a brevity penalty against the
/// closest-length reference (ties resolve to the shorter one).
inline double bleu1(const TokenSequence& candidate, std::span<const TokenSequence> references) {
    if (candidate.empty()) throw EmptyCandidate("BLEU@1 candidate is empty");
    if (references.empty()) throw EmptySequence("BLEU@1 needs at least one reference");

    std::unordered_map<std::string_view, std::size_t> cand_counts;
    for (const auto& w : candidate) ++cand_counts[w];
    std::unordered_map<std::string_view, std::size_t> max_ref;
    for (const auto& ref : references) {
        std::unordered_map<std::string_view, std::size_t> counts;
        for (const auto& w : ref) ++counts[w];
        for (const auto& [w, c] : counts) max_ref[w] = std::max(max_ref[w], c);
    }
    std::size_t clipped = 0;
    for (const auto& [w, c] : cand_counts) {
        const auto it = max_ref.find(w);
        if (it != max_ref.end()) clipped += std::min(c, it->second);
    }

    const auto cand_len = static_cast<double>(candidate.size());
    std::size_t ref_len = references.front().size();
    for (const auto& ref : references) {
        const auto d_new = std::abs(static_cast<double>(ref.size()) - cand_len);
        const auto d_old = std::abs(static_cast<double>(ref_len) - cand_len);
        if (d_new < d_old || (d_new == d_old && ref.size() < ref_len)) ref_len = ref.size();
    }
    const double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(ref_len) / cand_len));
    return bp * static_cast<double>(clipped) / cand_len;
}

inline double bleu1(const TokenSequence& candidate, const TokenSequence& reference) {
    return bleu1(candidate, std::span<const TokenSequence>(&reference, 1));
}

/// Length of the longest common subsequence of two random-access sequences.
template <std::ranges::random_access_range A, std::ranges::random_access_range B>
std::size_t lcs_length(const A& a, const B& b) {
    const auto m = static_cast<std::size_t>(std::ranges::size(b));
    // one row plus the diagonal carry; short rows stay on the stack
    std::array<std::size_t, 65> small{};
    std::vector<std::size_t> large;
    std::size_t* row = small.data();
    if (m + 1 > small.size()) {
        large.assign(m + 1, 0);
        row = large.data();
    }
    for (const auto& x : a) {
        std::size_t diag = 0;
        auto it = std::ranges::begin(b);
        for (std::size_t j = 1; j <= m; ++j, ++it) {
            const std::size_t up = row[j];
            // on a match diag + 1 dominates both neighbours, so max() needs no branch
            const std::size_t hit = static_cast<std::size_t>(x == *it) * (diag + 1);
            row[j] = std::max(std::max(up, row[j - 1]), hit);
            diag = up;
        }
    }
    return row[m];
}

/// LCS-based F-measure, F = (1 + b^2) P R / (R + b^2 P).
inline double rouge_l(const TokenSequence& candidate, const TokenSequence& reference,
                      double beta = 1.2) {
    if (candidate.empty() || reference.empty()) throw EmptySequence("ROUGE-L input is empty");
    const auto l = static_cast<double>(lcs_length(candidate, reference));
    if (l == 0.0) return 0.0;
    const double p = l / static_cast<double>(candidate.size());
    const double r = l / static_cast<double>(reference.size());
    const double b2 = beta * beta;
    return (1.0 + b2) * p * r / (r + b2 * p);
}

struct MeteorAlignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    bool exact = true;
};

namespace detail {

// Exact search over alignments that use the maximum number of matches,
// minimizing chunks. Candidates are visited left to right; the state is
// (candidate index, used reference positions, reference position matched by
// the previous candidate). Returns nullopt when the budget is exhausted.
class ChunkMinimizer {
public:
    ChunkMinimizer(const TokenSequence& cand, const TokenSequence& ref, std::size_t budget)
        : cand_(cand), ref_(ref), budget_(budget) {
        std::map<std::string_view, std::size_t> cc, rc;
        for (const auto& w : cand_) ++cc[w];
        for (const auto& w : ref_) ++rc[w];
        positions_.resize(cand_.size());
        for (std::size_t i = 0; i < cand_.size(); ++i) {
            for (std::size_t j = 0; j < ref_.size(); ++j)
                if (cand_[i] == ref_[j]) positions_[i].push_back(j);
            const auto c = cc[cand_[i]];
            const auto r = rc.count(cand_[i]) ? rc[cand_[i]] : 0;
            skips_allowed_.push_back(c > r ? c - r : 0);
        }
    }

    std::optional<std::size_t> solve() {
        const auto best = search(0, 0, kNone);
        if (exhausted_) return std::nullopt;
        return best;
    }

private:
    static constexpr std::size_t kNone = 64;
    static constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max() / 2;

    // how many earlier occurrences of cand_[i] were left unmatched
    std::size_t skipped_before(std::size_t i, std::uint64_t used) const {
        std::size_t occ = 0;
        for (std::size_t k = 0; k < i; ++k)
            if (cand_[k] == cand_[i]) ++occ;
        std::size_t matched = 0;
        for (std::size_t j : positions_[i])
            if (used & (std::uint64_t{1} << j)) ++matched;
        return occ - matched;
    }

    std::size_t search(std::size_t i, std::uint64_t used, std::size_t prev) {
        if (i == cand_.size()) return 0;
        if (exhausted_) return kInf;
        const Key key{i, used, prev};
        if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
        if (memo_.size() >= budget_) {
            exhausted_ = true;
            return kInf;
        }

        std::size_t best = kInf;
        bool any_free = false;
        for (std::size_t j : positions_[i]) {
            if (used & (std::uint64_t{1} << j)) continue;
            any_free = true;
            const std::size_t cost = (prev != kNone && j == prev + 1) ? 0 : 1;
            best = std::min(best, cost + search(i + 1, used | (std::uint64_t{1} << j), j));
        }
        // leaving this token unmatched is only allowed while the word has
        // surplus candidate occurrences, so the match count stays maximal
        if (!any_free || skipped_before(i, used) < skips_allowed_[i]) {
            best = std::min(best, search(i + 1, used, kNone));
        }
        memo_.emplace(key, best);
        return best;
    }

    struct Key {
        std::size_t i;
        std::uint64_t used;
        std::size_t prev;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = k.used * 0x9E3779B97F4A7C15ull;
            h ^= (k.i << 8) ^ k.prev;
            return static_cast<std::size_t>(h ^ (h >> 29));
        }
    };

    const TokenSequence& cand_;
    const TokenSequence& ref_;
    std::size_t budget_;
    std::vector<std::vector<std::size_t>> positions_;
    std::vector<std::size_t> skips_allowed_;
    std::unordered_map<Key, std::size_t, KeyHash> memo_;
    bool exhausted_ = false;
};

// Left-to-right greedy: extend the current chunk when possible, otherwise take
// the earliest unused matching reference position.
inline std::size_t greedy_chunks(const TokenSequence& cand, const TokenSequence& ref) {
    std::vector<bool> used(ref.size(), false);
    std::size_t chunks = 0;
    std::optional<std::size_t> prev;
    for (const auto& w : cand) {
        std::optional<std::size_t> pick;
        if (prev && *prev + 1 < ref.size() && !used[*prev + 1] && ref[*prev + 1] == w) {
            pick = *prev + 1;
        } else {
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (!used[j] && ref[j] == w) {
                    pick = j;
                    break;
                }
            }
            if (pick) ++chunks;
        }
        if (pick) used[*pick] = true;
        prev = pick;
    }
    return chunks;
}

}  // namespace detail

/// Maximum exact-unigram matching with the fewest chunks.
inline MeteorAlignment meteor_align(const TokenSequence& candidate, const TokenSequence& reference,
                                    const MeteorParams& params = {}) {
    MeteorAlignment a;
    std::map<std::string_view, std::size_t> cc, rc;
    for (const auto& w : candidate) ++cc[w];
    for (const auto& w : reference) ++rc[w];
    for (const auto& [w, c] : cc) {
        const auto it = rc.find(w);
        if (it != rc.end()) a.matches += std::min(c, it->second);
    }
    if (a.matches == 0) return a;

    if (reference.size() <= std::min<std::size_t>(params.exact_limit, 64)) {
        detail::ChunkMinimizer solver(candidate, reference, params.exact_state_budget);
        if (const auto chunks = solver.solve()) {
            a.chunks = *chunks;
            return a;
        }
    }
    a.chunks = detail::greedy_chunks(candidate, reference);
    a.exact = false;
    return a;
}

/// (1 - Penalty) * F_mean with F_mean = 10PR/(R + 9P) and
/// Penalty = gamma * (chunks / matches)^3.
inline double meteor(const TokenSequence& candidate, const TokenSequence& reference,
                     const MeteorParams& params = {}) {
    if (candidate.empty() || reference.empty()) throw EmptySequence("METEOR input is empty");
    const auto al = meteor_align(candidate, reference, params);
    if (al.matches == 0) return 0.0;
    const double m = static_cast<double>(al.matches);
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(reference.size());
    const double f_mean = (params.recall_weight + 1.0) * p * r / (r + params.recall_weight * p);
    const double penalty =
        params.gamma * std::pow(static_cast<double>(al.chunks) / m, params.exponent);
    return (1.0 - penalty) * f_mean;
}

// ---------------------------------------------------------------------------
// Corpus report

struct CaptionScores {
    double bleu1 = 0.0;
    double meteor = 0.0;
    double rouge_l = 0.0;
};

struct GroundingScores {
    double miou = 0.0;
    double recall_03 = 0.0;
    double recall_05 = 0.0;
};

struct EvalReport {
    std::optional<GroundingScores> grounding;
    std::optional<CaptionScores> captioning;
    std::size_t n_grounding = 0;  // instances
    std::size_t n_captions = 0;   // pairs
    std::size_t n_instances = 0;
};

/// Scores one caption pair. An empty tokenized candidate scores 0 on every
/// metric; an empty reference is a data error.
inline CaptionScores score_caption(const CaptionPair& pair, const MetricsConfig& cfg = {}) {
    const auto cand = tokenize(pair.candidate);
    const auto ref = tokenize(pair.reference);
    if (ref.empty()) throw EmptySequence("caption pair '" + pair.id + "' has an empty reference");
    if (cand.empty()) return {};
    return {bleu1(cand, ref), meteor(cand, ref, cfg.meteor), rouge_l(cand, ref, cfg.rouge_beta)};
}

inline GroundingScores score_grounding(std::span<const GroundingInstance> instances) {
    return {miou(instances), recall_at_k(instances, 0.3), recall_at_k(instances, 0.5)};
}

/// Grounding scores are corpus-level over ground-truth spans; caption scores
/// are means of per-pair scores. Either family may be absent but not both.
inline EvalReport evaluate_corpus(std::span<const GroundingInstance> grounding,
                                  std::span<const CaptionPair> captions,
                                  const MetricsConfig& cfg = {}) {
    if (grounding.empty() && captions.empty()) throw EmptyCorpus("nothing to evaluate");
    EvalReport rep;
    if (!grounding.empty()) {
        rep.grounding = score_grounding(grounding);
        rep.n_grounding = grounding.size();
    }
    if (!captions.empty()) {
        CaptionScores mean;
        for (const auto& pair : captions) {
            const auto s = score_caption(pair, cfg);
            mean.bleu1 += s.bleu1;
            mean.meteor += s.meteor;
            mean.rouge_l += s.rouge_l;
        }
        const auto n = static_cast<double>(captions.size());
        mean.bleu1 /= n;
        mean.meteor /= n;
        mean.rouge_l /= n;
        rep.captioning = mean;
        rep.n_captions = captions.size();
    }
    rep.n_instances = rep.n_grounding + rep.n_captions;
    return rep;
}

}  // namespace vtrace
