#pragma once

// Readers for the rollout-group, grounding-corpus and caption-corpus
// JSON-lines files.

#include <istream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtrace/errors.hpp"
#include "vtrace/grpo.hpp"
#include "vtrace/metrics.hpp"
#include "vtrace/pipeline/dataset_io.hpp"

namespace vtrace {

namespace io_detail {

using pipeline::io_detail::field;
using pipeline::io_detail::get;
using pipeline::io_detail::schema_error;

// Opaque ids may be strings or numbers.
inline std::string id_of(const nlohmann::json& j, const char* key, std::size_t line) {
    const auto& v = field(j, key, line);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    schema_error(line, std::string("field '") + key + "' must be a string or number");
}

inline TokenLogProbs logprobs_from(const nlohmann::json& j, const char* key, std::size_t line) {
    if (!j.contains(key) || j[key].is_null()) return {};
    try {
        return TokenLogProbs(j[key].get<std::vector<double>>());
    } catch (const nlohmann::json::exception&) {
        schema_error(line, std::string("field '") + key + "' must be an array of numbers");
    } catch (const Error& e) {
        schema_error(line, std::string("field '") + key + "': " + e.what());
    }
}

inline std::vector<TimeSpan> spans_from(const nlohmann::json& j, const char* key, std::size_t line) {
    std::vector<TimeSpan> out;
    const auto& arr = field(j, key, line);
    if (!arr.is_array()) schema_error(line, std::string("field '") + key + "' must be an array");
    for (const auto& s : arr) out.push_back(pipeline::io_detail::span_from(s, line));
    return out;
}

}  // namespace io_detail

/// {question_id, ground_truth, traces: [{text, cur, old, ref}]}. Log-prob
/// arrays are optional here; GRPO evaluation rejects traces without them.
inline std::vector<RolloutGroup> load_rollouts(std::istream& in) {
    std::vector<RolloutGroup> out;
    pipeline::for_each_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
        using namespace io_detail;
        if (!j.is_object()) schema_error(line, "expected a JSON object");
        RolloutGroup g;
        g.question_id = id_of(j, "question_id", line);
        const auto gt = get<std::string>(j, "ground_truth", line);
        try {
            g.ground_truth = normalize_ground_truth(gt);
        } catch (const InvalidGroundTruth& e) {
            schema_error(line, e.what());
        }
        const auto& traces = field(j, "traces", line);
        if (!traces.is_array()) schema_error(line, "field 'traces' must be an array");
        for (const auto& t : traces) {
            RolloutTrace tr;
            tr.text = get<std::string>(t, "text", line);
            tr.cur = logprobs_from(t, "cur", line);
            tr.old = logprobs_from(t, "old", line);
            tr.ref = logprobs_from(t, "ref", line);
            g.traces.push_back(std::move(tr));
        }
        out.push_back(std::move(g));
    });
    return out;
}

/// {id, predictions: [[s, e], ...], ground_truths: [[s, e], ...]}
inline std::vector<GroundingInstance> load_grounding(std::istream& in) {
    std::vector<GroundingInstance> out;
    pipeline::for_each_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
        using namespace io_detail;
        if (!j.is_object()) schema_error(line, "expected a JSON object");
        GroundingInstance inst;
        inst.id = id_of(j, "id", line);
        inst.predictions = spans_from(j, "predictions", line);
        inst.ground_truths = spans_from(j, "ground_truths", line);
        if (inst.ground_truths.empty()) schema_error(line, "instance has no ground-truth spans");
        out.push_back(std::move(inst));
    });
    return out;
}

/// {id, candidate, reference}
inline std::vector<CaptionPair> load_captions(std::istream& in) {
    std::vector<CaptionPair> out;
    pipeline::for_each_jsonl(in, [&](std::size_t line, const nlohmann::json& j) {
        using namespace io_detail;
        if (!j.is_object()) schema_error(line, "expected a JSON object");
        out.push_back({id_of(j, "id", line), get<std::string>(j, "candidate", line),
                       get<std::string>(j, "reference", line)});
    });
    return out;
}

}  // namespace vtrace
