#pragma once

// End-to-end curation run: filter -> question or caption completion ->
// trace synthesis -> hindsight verification -> stratified sampling. Samples
// are processed independently on a bounded worker pool; results are gathered
// by input index and the final dataset is sorted by (source, video id).

#include <algorithm>
#include <atomic>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "vtrace/errors.hpp"
#include "vtrace/pipeline/client.hpp"
#include "vtrace/pipeline/stages.hpp"
#include "vtrace/pipeline/types.hpp"

namespace vtrace::pipeline {

struct PipelineClients {
    ModelClient* question_generator = nullptr;
    ModelClient* caption_generator = nullptr;
    ModelClient* trace_synthesizer = nullptr;
    ModelClient* verifier = nullptr;
};

struct PipelineConfig {
    std::int64_t min_frames = kMinFrames;
    int max_attempts = kMaxCurationAttempts;
    std::size_t worker_count = 1;
    RetryPolicy retry;
    std::map<SourceDataset, std::size_t> quotas;
    std::uint64_t seed = 0;
};

struct SampleFailure {
    std::string video_id;
    std::string kind;  // error kind, e.g. MalformedGeneration
    std::string message;
};

struct PipelineReport {
    std::size_t input = 0;
    std::vector<Rejection> rejected;
    std::vector<SampleFailure> failed;
    std::vector<CuratedSample> dropped;  // failed verification on every attempt
    std::size_t curated = 0;             // verified, before sampling
    std::vector<CuratedSample> dataset;
};

namespace detail {

struct SampleOutcome {
    enum class Status { curated, dropped, failed } status = Status::failed;
    CuratedSample sample;
    SampleFailure failure;
};

inline CuratedSample to_curated(const SourceSample& s, ReasoningTrace trace, int attempts, bool verified,
                                std::vector<std::string> generator_ids) {
    CuratedSample c;
    c.video = s.video;
    c.kind = s.kind;
    c.question = s.question.value_or("");
    c.options = s.options.value_or(std::vector<std::string>{});
    c.answer = s.answer.value_or('A');
    for (const auto& seg : s.segments) c.segments.push_back({seg.span, seg.caption.value_or("")});
    c.context = s.context;
    c.trace = std::move(trace);
    c.provenance = {attempts, verified, std::move(generator_ids)};
    return c;
}

inline std::uint64_t id_hash(const std::string& s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline SampleOutcome process_sample(const SourceSample& source, const PipelineClients& clients,
                                    const PipelineConfig& cfg) {
    SampleOutcome out;
    RetryingClient question(*clients.question_generator, cfg.retry);
    RetryingClient caption(*clients.caption_generator, cfg.retry);
    RetryingClient synth(*clients.trace_synthesizer, cfg.retry);
    RetryingClient verifier(*clients.verifier, cfg.retry);
    const std::uint64_t seed = mix_seed(cfg.seed, id_hash(source.video.video_id));

    try {
        std::vector<std::string> ids;
        SourceSample sample = source;
        // each sample takes exactly one completion branch
        if (sample.kind == SampleKind::caption_labeled) {
            sample = generate_question(sample, question);
            ids.push_back(question.id());
        } else {
            sample = generate_captions(sample, caption);
            ids.push_back(caption.id());
        }
        ids.push_back(synth.id());
        ids.push_back(verifier.id());

        // a candidate that fails synthesis checks spends an attempt
        int attempt = 1;
        std::optional<ReasoningTrace> trace;
        while (!trace) {
            try {
                trace = synthesize_trace(sample, synth, mix_seed(seed, static_cast<std::uint64_t>(attempt)));
            } catch (const MalformedGeneration&) {
                if (attempt >= cfg.max_attempts) break;
                ++attempt;
            }
        }
        if (!trace) {
            out.status = SampleOutcome::Status::dropped;
            out.sample = to_curated(sample, {}, attempt, false, std::move(ids));
            return out;
        }

        VerifyOptions vo;
        vo.max_attempts = cfg.max_attempts;
        vo.first_attempt = attempt;
        vo.seed = seed;
        auto result = hindsight_verify(sample, std::move(*trace), synth, verifier, vo);
        out.status = result.verified ? SampleOutcome::Status::curated : SampleOutcome::Status::dropped;
        out.sample = to_curated(sample, std::move(result.trace), result.attempts, result.verified, std::move(ids));
    } catch (const Error& e) {
        out.status = SampleOutcome::Status::failed;
        out.failure = {source.video.video_id, e.kind(), e.what()};
    }
    return out;
}

}  // namespace detail

inline void sort_for_persistence(std::vector<CuratedSample>& samples) {
    std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
        if (a.video.source_dataset != b.video.source_dataset)
            return a.video.source_dataset < b.video.source_dataset;
        return a.video.video_id < b.video.video_id;
    });
}

/// Runs the whole curation pipeline. Per-sample generation failures are
/// reported, not thrown; QuotaExceedsPool is thrown when too few samples
/// survive for a configured quota.
inline PipelineReport run_pipeline(const std::vector<SourceSample>& sources, const PipelineClients& clients,
                                   const PipelineConfig& cfg) {
    if (!clients.question_generator || !clients.caption_generator || !clients.trace_synthesizer ||
        !clients.verifier)
        throw InvalidConfig("all four pipeline clients must be set");
    if (cfg.max_attempts < 1 || cfg.max_attempts > kMaxCurationAttempts)
        throw InvalidConfig("max_attempts must lie in 1..3");

    PipelineReport report;
    report.input = sources.size();
    auto filtered = filter_sources(sources, cfg.min_frames);
    report.rejected = std::move(filtered.rejected);
    const auto& kept = filtered.kept;

    std::vector<detail::SampleOutcome> outcomes(kept.size());
    const std::size_t workers = std::clamp<std::size_t>(cfg.worker_count, 1, std::max<std::size_t>(1, kept.size()));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < kept.size(); i = next++)
            outcomes[i] = detail::process_sample(kept[i], clients, cfg);
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    std::map<SourceDataset, std::vector<CuratedSample>> pools;
    for (auto& o : outcomes) {
        switch (o.status) {
            case detail::SampleOutcome::Status::curated:
                ++report.curated;
                pools[o.sample.video.source_dataset].push_back(std::move(o.sample));
                break;
            case detail::SampleOutcome::Status::dropped:
                report.dropped.push_back(std::move(o.sample));
                break;
            case detail::SampleOutcome::Status::failed:
                report.failed.push_back(std::move(o.failure));
                break;
        }
    }

    report.dataset = stratified_sample(pools, cfg.quotas, cfg.seed);
    sort_for_persistence(report.dataset);
    sort_for_persistence(report.dropped);
    return report;
}

}  // namespace vtrace::pipeline
