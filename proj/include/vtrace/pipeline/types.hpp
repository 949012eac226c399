#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vtrace/errors.hpp"
#include "vtrace/trace.hpp"

namespace vtrace::pipeline {

enum class SourceDataset { ActivityNet, TutorialVQA, YouCook2, STAR, ScaleLong, LVBench, Other };

inline constexpr std::array<std::string_view, 7> kSourceNames = {
    "ActivityNet", "TutorialVQA", "YouCook2", "STAR", "ScaleLong", "LVBench", "Other"};

inline std::string_view to_string(SourceDataset s) noexcept {
    return kSourceNames[static_cast<std::size_t>(s)];
}

inline std::optional<SourceDataset> source_from_string(std::string_view s) noexcept {
    for (std::size_t i = 0; i < kSourceNames.size(); ++i)
        if (kSourceNames[i] == s) return static_cast<SourceDataset>(i);
    return std::nullopt;
}

enum class SampleKind { caption_labeled, qa_labeled };

inline std::string_view to_string(SampleKind k) noexcept {
    return k == SampleKind::caption_labeled ? "caption_labeled" : "qa_labeled";
}

struct VideoMeta {
    std::string video_id;
    std::int64_t frame_count = 0;
    double duration = 0.0;  // seconds; 0 when unknown
    SourceDataset source_dataset = SourceDataset::Other;
    bool corrupted = false;

    friend bool operator==(const VideoMeta&, const VideoMeta&) = default;
};

struct AnnotatedSegment {
    TimeSpan span;
    std::optional<std::string> caption;

    friend bool operator==(const AnnotatedSegment&, const AnnotatedSegment&) = default;
};

// Per-source text that fills the question-generation templates.
struct SampleContext {
    std::optional<std::string> background;  // ActivityNet overall caption
    std::optional<std::string> title;       // TutorialVQA
    std::optional<std::string> transcript;  // TutorialVQA

    friend bool operator==(const SampleContext&, const SampleContext&) = default;
};

struct SourceSample {
    VideoMeta video;
    SampleKind kind = SampleKind::qa_labeled;
    std::optional<std::string> question;
    std::optional<std::vector<std::string>> options;
    std::optional<char> answer;
    std::vector<AnnotatedSegment> segments;
    SampleContext context;

    friend bool operator==(const SourceSample&, const SourceSample&) = default;
};

struct Provenance {
    int attempts = 0;
    bool verified = false;
    std::vector<std::string> generator_ids;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct CuratedSegment {
    TimeSpan span;
    std::string caption;

    friend bool operator==(const CuratedSegment&, const CuratedSegment&) = default;
};

struct CuratedSample {
    VideoMeta video;
    SampleKind kind = SampleKind::qa_labeled;
    std::string question;
    std::vector<std::string> options;
    char answer = 'A';
    std::vector<CuratedSegment> segments;
    SampleContext context;
    ReasoningTrace trace;
    Provenance provenance;

    friend bool operator==(const CuratedSample&, const CuratedSample&) = default;
};

inline bool is_letter(char c) noexcept { return c >= 'A' && c <= 'Z'; }

inline char option_letter(std::size_t index) noexcept { return static_cast<char>('A' + index); }

/// Throws SchemaViolation when a source sample breaks its invariants.
inline void check_source(const SourceSample& s) {
    const auto& id = s.video.video_id;
    if (s.video.duration < 0.0 || s.video.frame_count < 0)
        throw SchemaViolation("video '" + id + "': negative duration or frame count");
    for (const auto& seg : s.segments) {
        if (!seg.span.valid()) throw SchemaViolation("video '" + id + "': invalid segment span");
    }
    if (s.kind == SampleKind::caption_labeled) {
        for (const auto& seg : s.segments) {
            if (!seg.caption || detail::trim(*seg.caption).empty())
                throw SchemaViolation("video '" + id + "': caption-labeled segment lacks a caption");
        }
    } else {
        if (!s.question || !s.options || !s.answer)
            throw SchemaViolation("video '" + id + "': QA-labeled sample lacks question/options/answer");
        if (!is_letter(*s.answer) ||
            static_cast<std::size_t>(*s.answer - 'A') >= s.options->size())
            throw SchemaViolation("video '" + id + "': answer is not one of the option letters");
    }
}

/// Throws SchemaViolation when a curated sample breaks its invariants.
inline void check_curated(const CuratedSample& s) {
    const auto& id = s.video.video_id;
    if (s.provenance.attempts < 1 || s.provenance.attempts > 3)
        throw SchemaViolation("video '" + id + "': attempts must lie in 1..3");
    if (!is_letter(s.answer)) throw SchemaViolation("video '" + id + "': answer is not A-Z");
    if (s.trace.segments.empty())
        throw SchemaViolation("video '" + id + "': trace has no segments");
    if (s.trace.answer != s.answer)
        throw SchemaViolation("video '" + id + "': trace answer differs from the sample answer");
    if (const auto bad = check_trace(s.trace)) throw SchemaViolation("video '" + id + "': " + *bad);
}

}  // namespace vtrace::pipeline
