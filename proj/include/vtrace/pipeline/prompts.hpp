#pragma once

// Builds the requests sent to each pipeline role from the prompt assets in
// assets/prompts (embedded at build time as vtrace/prompt_assets.hpp).

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vtrace/pipeline/client.hpp"
#include "vtrace/pipeline/types.hpp"
#include "vtrace/prompt_assets.hpp"
#include "vtrace/trace.hpp"

namespace vtrace::pipeline {

/// Replaces every `{name}` whose name is a key of `values`. Other braces are
/// left untouched.
inline std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find('{', pos);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find('}', open + 1);
        if (close == std::string_view::npos) break;
        const auto it = values.find(std::string(tmpl.substr(open + 1, close - open - 1)));
        out.append(tmpl.substr(pos, open - pos));
        if (it != values.end()) {
            out += it->second;
            pos = close + 1;
        } else {
            out += '{';
            pos = open + 1;
        }
    }
    out.append(tmpl.substr(pos));
    return out;
}

inline std::string format_options(const std::vector<std::string>& options) {
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i) out += '\n';
        out += option_letter(i);
        out += ". ";
        out += options[i];
    }
    return out;
}

inline std::string format_span(const TimeSpan& span) {
    return format_seconds(span.start) + "-" + format_seconds(span.end) + "s";
}

// "1. [0-12.5s] caption" lines in chronological (input) order.
inline std::string format_segment_list(const std::vector<AnnotatedSegment>& segments) {
    std::string out;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i) out += '\n';
        out += std::to_string(i + 1) + ". [" + format_span(segments[i].span) + "] " +
               segments[i].caption.value_or("");
    }
    return out;
}

inline std::string question_block(const SourceSample& s) {
    std::string out = s.question.value_or("");
    if (s.options && !s.options->empty()) out += "\n" + format_options(*s.options);
    return out;
}

inline std::string answer_line(const SourceSample& s) {
    std::string out = "Answer: ";
    if (!s.answer) return out;
    out += *s.answer;
    const auto idx = static_cast<std::size_t>(*s.answer - 'A');
    if (s.options && idx < s.options->size()) out += ". " + (*s.options)[idx];
    return out;
}

/// QA-generation request; the template follows the sample's source dataset
/// (ActivityNet's is used for sources without a dedicated one).
inline CompletionRequest question_request(const SourceSample& s) {
    CompletionRequest req;
    req.role = ClientRole::question_generator;
    const auto events = format_segment_list(s.segments);
    switch (s.video.source_dataset) {
        case SourceDataset::YouCook2:
            req.system_prompt = std::string(assets::qa_youcook2_system);
            req.prompt = substitute(assets::qa_youcook2_user, {{"steps text", events}});
            break;
        case SourceDataset::TutorialVQA:
            req.system_prompt = std::string(assets::qa_tutorialvqa_system);
            req.prompt = substitute(assets::qa_tutorialvqa_user,
                                    {{"video title", s.context.title.value_or(s.video.video_id)},
                                     {"full transcript text", s.context.transcript.value_or("")},
                                     {"main steps", events}});
            break;
        default:
            req.system_prompt = std::string(assets::qa_activitynet_system);
            req.prompt = substitute(assets::qa_activitynet_user,
                                    {{"caption", s.context.background.value_or("")},
                                     {"events text", events}});
            break;
    }
    return req;
}

/// Caption request for one annotated segment. The template is prefixed with
/// the video id and segment span so a text-only endpoint can tell segments
/// apart.
inline CompletionRequest caption_request(const SourceSample& s, std::size_t segment) {
    CompletionRequest req;
    req.role = ClientRole::caption_generator;
    req.system_prompt = std::string(assets::caption_system);
    req.prompt = "Video: " + s.video.video_id + "\nSegment: " + format_span(s.segments[segment].span) +
                 "\n\n" +
                 substitute(assets::caption_user,
                            {{"Question", question_block(s)}, {"Answer", answer_line(s)}});
    return req;
}

inline CompletionRequest trace_request(const SourceSample& s, std::uint64_t seed) {
    CompletionRequest req;
    req.role = ClientRole::trace_synthesizer;
    req.seed = seed;
    req.system_prompt = std::string(assets::trace_synthesis_system);
    std::string answer;
    if (s.answer) answer = answer_line(s).substr(std::string_view("Answer: ").size());
    req.prompt = substitute(assets::trace_synthesis_user,
                            {{"question", s.question.value_or("")},
                             {"options", format_options(s.options.value_or(std::vector<std::string>{}))},
                             {"answer", answer},
                             {"duration", s.video.duration > 0 ? format_seconds(s.video.duration)
                                                               : std::string("unknown")},
                             {"segments", format_segment_list(s.segments)}});
    return req;
}

/// Time spans and captions of a trace as plain lines; think text, preamble
/// and the embedded answer are left out.
inline std::string verifier_evidence(const ReasoningTrace& trace) {
    std::string out;
    for (std::size_t i = 0; i < trace.segments.size(); ++i) {
        if (i) out += '\n';
        out += "[" + format_span(trace.segments[i].span) + "] " + trace.segments[i].caption;
    }
    return out;
}

inline CompletionRequest verifier_request(const SourceSample& s, const ReasoningTrace& trace) {
    CompletionRequest req;
    req.role = ClientRole::verifier;
    req.system_prompt = std::string(assets::verifier_system);
    req.prompt = substitute(assets::verifier_user,
                            {{"evidence", verifier_evidence(trace)},
                             {"question", s.question.value_or("")},
                             {"options", format_options(s.options.value_or(std::vector<std::string>{}))}});
    return req;
}

/// System prompt and user prompt for training/evaluating the policy itself.
inline std::pair<std::string, std::string> policy_prompt(const std::string& question_with_options) {
    return {std::string(assets::eval_system),
            substitute(assets::eval_question, {{"Question", question_with_options}})};
}

}  // namespace vtrace::pipeline
