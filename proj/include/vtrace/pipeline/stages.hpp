#pragma once

// Individual data-synthesis stages: source filtering, question or caption
// completion, reverse-curated trace synthesis, hindsight verification and
// stratified sampling. Each stage returns new values; inputs are never
// modified, so a failed stage leaves the sample as it was.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtrace/errors.hpp"
#include "vtrace/pipeline/client.hpp"
#include "vtrace/pipeline/prompts.hpp"
#include "vtrace/pipeline/types.hpp"
#include "vtrace/trace.hpp"

namespace vtrace::pipeline {

inline constexpr std::int64_t kMinFrames = 64;
inline constexpr int kMaxCurationAttempts = 3;

struct Rejection {
    SourceSample sample;
    std::string reason;  // "corrupted" or "min_frames"
};

struct FilterResult {
    std::vector<SourceSample> kept;
    std::vector<Rejection> rejected;
};

inline FilterResult filter_sources(const std::vector<SourceSample>& samples,
                                   std::int64_t min_frames = kMinFrames) {
    FilterResult out;
    for (const auto& s : samples) {
        if (s.video.corrupted) {
            out.rejected.push_back({s, "corrupted"});
        } else if (s.video.frame_count < min_frames) {
            out.rejected.push_back({s, "min_frames"});
        } else {
            out.kept.push_back(s);
        }
    }
    return out;
}

namespace detail {

// The JSON object in a reply, tolerating code fences or prose around it.
inline nlohmann::json extract_json_object(const std::string& reply) {
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw MalformedGeneration("reply contains no JSON object");
    try {
        return nlohmann::json::parse(reply.substr(open, close - open + 1));
    } catch (const nlohmann::json::exception& e) {
        throw MalformedGeneration(std::string("reply JSON does not parse: ") + e.what());
    }
}

// Accepts "B", "b", "B.", "(B)" or the full text of one of the options.
inline std::optional<char> answer_letter(std::string_view raw, const std::vector<std::string>& options) {
    auto s = vtrace::detail::trim(raw);
    for (std::size_t i = 0; i < options.size(); ++i)
        if (s == vtrace::detail::trim(options[i])) return option_letter(i);
    while (!s.empty() && (s.front() == '(' || s.front() == '[')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ')' || s.back() == ']' || s.back() == '.' || s.back() == ':'))
        s.remove_suffix(1);
    if (s.size() != 1) return std::nullopt;
    char c = s.front();
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    if (!is_letter(c)) return std::nullopt;
    return c;
}

}  // namespace detail

/// Completes a caption-labeled sample with a generated multiple-choice
/// question. The reply must be a JSON object with `question`, 4-6 `options`
/// and an `answer` naming one of them.
inline SourceSample generate_question(const SourceSample& sample, ModelClient& client) {
    if (sample.kind != SampleKind::caption_labeled)
        throw InvalidConfig("generate_question needs a caption-labeled sample");
    const auto reply = client.complete(question_request(sample));
    const auto j = detail::extract_json_object(reply);

    if (!j.is_object() || !j.contains("question") || !j["question"].is_string() ||
        vtrace::detail::trim(j["question"].get<std::string>()).empty())
        throw MalformedGeneration("generated question is missing or empty");
    if (!j.contains("options") || !j["options"].is_array())
        throw MalformedGeneration("generated options are not a list");
    std::vector<std::string> options;
    for (const auto& o : j["options"]) {
        if (!o.is_string()) throw MalformedGeneration("generated option is not a string");
        options.push_back(o.get<std::string>());
    }
    if (options.size() < 4 || options.size() > 6)
        throw MalformedGeneration("expected 4-6 options, got " + std::to_string(options.size()));
    if (!j.contains("answer") || !j["answer"].is_string())
        throw MalformedGeneration("generated answer is missing");
    const auto letter = detail::answer_letter(j["answer"].get<std::string>(), options);
    if (!letter || static_cast<std::size_t>(*letter - 'A') >= options.size())
        throw MalformedGeneration("generated answer is not one of the options");

    SourceSample out = sample;
    out.question = vtrace::detail::trim(j["question"].get<std::string>());
    out.options = std::move(options);
    out.answer = *letter;
    return out;
}

/// Fills every segment caption of a QA-labeled sample, one request per
/// segment, conditioned on the question and the correct answer.
inline SourceSample generate_captions(const SourceSample& sample, ModelClient& client) {
    if (sample.kind != SampleKind::qa_labeled)
        throw InvalidConfig("generate_captions needs a QA-labeled sample");
    SourceSample out = sample;
    for (std::size_t i = 0; i < out.segments.size(); ++i) {
        const auto reply = client.complete(caption_request(sample, i));
        const auto caption = vtrace::detail::trim(reply);
        if (caption.empty())
            throw MalformedGeneration("empty caption for segment " + std::to_string(i + 1));
        if (!is_tag_free(caption))
            throw MalformedGeneration("caption for segment " + std::to_string(i + 1) +
                                      " contains trace tags");
        out.segments[i].caption = std::string(caption);
    }
    return out;
}

/// Reverse-curated trace: the synthesizer sees the answer, captions and spans
/// and must return a trace that parses strictly, has at least one segment,
/// keeps spans within the video duration (when known) and ends with the
/// correct answer.
inline ReasoningTrace synthesize_trace(const SourceSample& sample, ModelClient& client,
                                       std::uint64_t seed = 0) {
    if (!sample.question || !sample.options || !sample.answer)
        throw InvalidConfig("synthesize_trace needs question, options and answer");
    for (const auto& seg : sample.segments)
        if (!seg.caption) throw InvalidConfig("synthesize_trace needs every segment captioned");

    const auto reply = client.complete(trace_request(sample, seed));
    ReasoningTrace trace;
    try {
        trace = parse_trace(reply, ParseMode::strict);
    } catch (const MalformedTag& e) {
        throw MalformedGeneration(std::string("trace does not parse: ") + e.what());
    }
    if (trace.segments.empty()) throw MalformedGeneration("trace has no segments");
    if (sample.video.duration > 0.0) {
        for (const auto& seg : trace.segments) {
            if (seg.span.end > sample.video.duration)
                throw MalformedGeneration("trace span " + format_span(seg.span) +
                                          " exceeds video duration " +
                                          format_seconds(sample.video.duration) + "s");
        }
    }
    if (!trace.answer) throw MalformedGeneration("trace has no answer");
    if (*trace.answer != *sample.answer)
        throw MalformedGeneration(std::string("trace answers ") + *trace.answer + ", expected " +
                                  *sample.answer);
    return trace;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
    // splitmix64 finalizer over the combination
    std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct VerifyOptions {
    int max_attempts = kMaxCurationAttempts;
    // attempts already spent before `trace` was produced (failed syntheses)
    int first_attempt = 1;
    std::uint64_t seed = 0;
};

struct VerifyOutcome {
    bool verified = false;
    int attempts = 0;
    ReasoningTrace trace;  // last candidate judged
    std::vector<std::string> verdicts;
};

inline std::optional<char> verdict_letter(const std::string& reply) {
    if (auto a = extract_answer(reply)) return a;
    return detail::answer_letter(reply, {});
}

/// Hindsight verification loop. The verifier gets only the spans and
/// captions of the trace with the question and options; when it misses the
/// correct answer the trace is regenerated with a fresh seed, for at most
/// `max_attempts` judged or failed candidates in total. Transport errors
/// propagate without consuming an attempt (wrap clients in RetryingClient).
inline VerifyOutcome hindsight_verify(const SourceSample& sample, ReasoningTrace trace,
                                      ModelClient& synthesizer, ModelClient& verifier,
                                      const VerifyOptions& opts = {}) {
    VerifyOutcome out;
    out.attempts = std::max(1, opts.first_attempt);
    out.trace = std::move(trace);
    while (true) {
        const auto reply = verifier.complete(verifier_request(sample, out.trace));
        out.verdicts.push_back(reply);
        const auto letter = verdict_letter(reply);
        if (letter && sample.answer && *letter == *sample.answer) {
            out.verified = true;
            return out;
        }
        // regenerate; a malformed regeneration still spends the attempt
        while (true) {
            if (out.attempts >= opts.max_attempts) return out;
            ++out.attempts;
            try {
                out.trace = synthesize_trace(sample, synthesizer, mix_seed(opts.seed, out.attempts));
                break;
            } catch (const MalformedGeneration&) {
            }
        }
    }
}

/// Uniform integer in [0, n) from a 64-bit engine, without modulo bias.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (true) {
        const std::uint64_t r = rng();
        if (r >= threshold) return r % n;
    }
}

/// Seeded sampling without replacement per source. Pools are ordered by
/// video id first, so the selection does not depend on the order in which
/// samples were curated. Sources without a quota contribute nothing.
inline std::vector<CuratedSample> stratified_sample(
    const std::map<SourceDataset, std::vector<CuratedSample>>& pools,
    const std::map<SourceDataset, std::size_t>& quotas, std::uint64_t seed) {
    std::vector<CuratedSample> out;
    for (const auto& [source, quota] : quotas) {
        if (quota == 0) continue;
        const auto it = pools.find(source);
        const std::size_t available = it == pools.end() ? 0 : it->second.size();
        if (quota > available) {
            throw QuotaExceedsPool("quota " + std::to_string(quota) + " for " +
                                   std::string(to_string(source)) + " exceeds the " +
                                   std::to_string(available) + " curated sample(s)");
        }
        auto pool = it->second;
        std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
            return a.video.video_id < b.video.video_id;
        });
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(source)));
        for (std::size_t i = 0; i < quota; ++i) {
            const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        out.insert(out.end(), std::make_move_iterator(pool.begin()),
                   std::make_move_iterator(pool.begin() + static_cast<std::ptrdiff_t>(quota)));
    }
    return out;
}

}  // namespace vtrace::pipeline
