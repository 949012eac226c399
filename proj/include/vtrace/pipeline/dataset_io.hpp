#pragma once

// JSON-lines persistence for source samples and curated datasets. Field
// order is fixed so files diff cleanly.

#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtrace/errors.hpp"
#include "vtrace/pipeline/types.hpp"

namespace vtrace::pipeline {

using ojson = nlohmann::ordered_json;

namespace io_detail {

[[noreturn]] inline void schema_error(std::size_t line, const std::string& what) {
    throw SchemaViolation("line " + std::to_string(line) + ": " + what);
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* key, std::size_t line) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) schema_error(line, std::string("missing field '") + key + "'");
    return *it;
}

template <class T>
T get(const nlohmann::json& j, const char* key, std::size_t line) {
    const auto& v = field(j, key, line);
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        schema_error(line, std::string("field '") + key + "' has the wrong type");
    }
}

inline TimeSpan span_from(const nlohmann::json& j, std::size_t line) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        schema_error(line, "span must be [start, end]");
    TimeSpan s{j[0].get<double>(), j[1].get<double>()};
    if (!s.valid()) schema_error(line, "span violates 0 <= start <= end");
    return s;
}

inline char letter_from(const nlohmann::json& j, const char* key, std::size_t line) {
    const auto s = get<std::string>(j, key, line);
    if (s.size() != 1 || !is_letter(s[0])) schema_error(line, std::string("field '") + key + "' must be a letter A-Z");
    return s[0];
}

inline ojson video_to_json(const VideoMeta& v) {
    return ojson{{"video_id", v.video_id},
                 {"frame_count", v.frame_count},
                 {"duration", v.duration},
                 {"source_dataset", std::string(to_string(v.source_dataset))},
                 {"corrupted", v.corrupted}};
}

inline VideoMeta video_from_json(const nlohmann::json& j, std::size_t line) {
    VideoMeta v;
    v.video_id = get<std::string>(j, "video_id", line);
    v.frame_count = get<std::int64_t>(j, "frame_count", line);
    v.duration = j.contains("duration") ? get<double>(j, "duration", line) : 0.0;
    const auto src = get<std::string>(j, "source_dataset", line);
    const auto parsed = source_from_string(src);
    if (!parsed) schema_error(line, "unknown source_dataset '" + src + "'");
    v.source_dataset = *parsed;
    v.corrupted = j.contains("corrupted") ? get<bool>(j, "corrupted", line) : false;
    return v;
}

inline ojson context_to_json(const SampleContext& c) {
    ojson j = ojson::object();
    if (c.background) j["background"] = *c.background;
    if (c.title) j["title"] = *c.title;
    if (c.transcript) j["transcript"] = *c.transcript;
    return j;
}

inline SampleContext context_from_json(const nlohmann::json& j, std::size_t line) {
    SampleContext c;
    if (!j.is_object()) schema_error(line, "context must be an object");
    if (j.contains("background")) c.background = get<std::string>(j, "background", line);
    if (j.contains("title")) c.title = get<std::string>(j, "title", line);
    if (j.contains("transcript")) c.transcript = get<std::string>(j, "transcript", line);
    return c;
}

inline SampleKind kind_from(const nlohmann::json& j, std::size_t line) {
    const auto k = get<std::string>(j, "kind", line);
    if (k == "caption_labeled") return SampleKind::caption_labeled;
    if (k == "qa_labeled") return SampleKind::qa_labeled;
    schema_error(line, "unknown kind '" + k + "'");
}

inline ojson trace_to_json(const ReasoningTrace& t) {
    ojson segs = ojson::array();
    for (const auto& s : t.segments) {
        segs.push_back(ojson{{"span", {s.span.start, s.span.end}}, {"caption", s.caption}, {"think", s.think}});
    }
    ojson j{{"preamble", t.preamble}, {"segments", std::move(segs)}};
    j["answer"] = t.answer ? ojson(std::string(1, *t.answer)) : ojson(nullptr);
    return j;
}

inline ReasoningTrace trace_from_json(const nlohmann::json& j, std::size_t line) {
    ReasoningTrace t;
    t.preamble = j.contains("preamble") ? get<std::string>(j, "preamble", line) : std::string();
    for (const auto& s : field(j, "segments", line)) {
        t.segments.push_back({span_from(field(s, "span", line), line), get<std::string>(s, "caption", line),
                              s.contains("think") ? get<std::string>(s, "think", line) : std::string()});
    }
    if (j.contains("answer") && !j["answer"].is_null()) t.answer = letter_from(j, "answer", line);
    return t;
}

}  // namespace io_detail

inline ojson to_json(const SourceSample& s) {
    using namespace io_detail;
    ojson segs = ojson::array();
    for (const auto& seg : s.segments) {
        ojson js{{"span", {seg.span.start, seg.span.end}}};
        if (seg.caption) js["caption"] = *seg.caption;
        segs.push_back(std::move(js));
    }
    ojson j{{"video", video_to_json(s.video)}, {"kind", std::string(to_string(s.kind))}};
    if (s.question) j["question"] = *s.question;
    if (s.options) j["options"] = *s.options;
    if (s.answer) j["answer"] = std::string(1, *s.answer);
    j["segments"] = std::move(segs);
    j["context"] = context_to_json(s.context);
    return j;
}

inline SourceSample source_from_json(const nlohmann::json& j, std::size_t line) {
    using namespace io_detail;
    if (!j.is_object()) schema_error(line, "expected a JSON object");
    SourceSample s;
    s.video = video_from_json(field(j, "video", line), line);
    s.kind = kind_from(j, line);
    if (j.contains("question") && !j["question"].is_null()) s.question = get<std::string>(j, "question", line);
    if (j.contains("options") && !j["options"].is_null())
        s.options = get<std::vector<std::string>>(j, "options", line);
    if (j.contains("answer") && !j["answer"].is_null()) s.answer = letter_from(j, "answer", line);
    if (j.contains("segments")) {
        for (const auto& seg : j["segments"]) {
            AnnotatedSegment a{span_from(field(seg, "span", line), line), std::nullopt};
            if (seg.contains("caption") && !seg["caption"].is_null())
                a.caption = get<std::string>(seg, "caption", line);
            s.segments.push_back(std::move(a));
        }
    }
    if (j.contains("context")) s.context = context_from_json(j["context"], line);
    try {
        check_source(s);
    } catch (const SchemaViolation& e) {
        schema_error(line, e.what());
    }
    return s;
}

inline ojson to_json(const CuratedSample& s) {
    using namespace io_detail;
    ojson segs = ojson::array();
    for (const auto& seg : s.segments)
        segs.push_back(ojson{{"span", {seg.span.start, seg.span.end}}, {"caption", seg.caption}});
    return ojson{{"video", video_to_json(s.video)},
                 {"kind", std::string(to_string(s.kind))},
                 {"question", s.question},
                 {"options", s.options},
                 {"answer", std::string(1, s.answer)},
                 {"segments", std::move(segs)},
                 {"context", context_to_json(s.context)},
                 {"trace", trace_to_json(s.trace)},
                 {"trace_text", render_trace(s.trace)},
                 {"provenance",
                  {{"attempts", s.provenance.attempts},
                   {"verified", s.provenance.verified},
                   {"generator_ids", s.provenance.generator_ids}}}};
}

/// Parses one dataset line. `trace_text` is derived data and is ignored.
inline CuratedSample curated_from_json(const nlohmann::json& j, std::size_t line) {
    using namespace io_detail;
    if (!j.is_object()) schema_error(line, "expected a JSON object");
    CuratedSample s;
    s.video = video_from_json(field(j, "video", line), line);
    s.kind = kind_from(j, line);
    s.question = get<std::string>(j, "question", line);
    s.options = get<std::vector<std::string>>(j, "options", line);
    s.answer = letter_from(j, "answer", line);
    for (const auto& seg : field(j, "segments", line))
        s.segments.push_back({span_from(field(seg, "span", line), line), get<std::string>(seg, "caption", line)});
    if (j.contains("context")) s.context = context_from_json(j["context"], line);
    s.trace = trace_from_json(field(j, "trace", line), line);
    const auto& prov = field(j, "provenance", line);
    s.provenance.attempts = get<int>(prov, "attempts", line);
    s.provenance.verified = get<bool>(prov, "verified", line);
    s.provenance.generator_ids = get<std::vector<std::string>>(prov, "generator_ids", line);
    try {
        check_curated(s);
    } catch (const SchemaViolation& e) {
        schema_error(line, e.what());
    }
    return s;
}

/// Calls `fn(line_number, json)` for each non-blank line.
inline void for_each_jsonl(std::istream& in, const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (vtrace::detail::trim(text).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            io_detail::schema_error(line, std::string("invalid JSON: ") + e.what());
        }
        fn(line, j);
    }
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path + "' for reading");
    return in;
}

inline std::vector<SourceSample> load_sources(std::istream& in) {
    std::vector<SourceSample> out;
    for_each_jsonl(in, [&](std::size_t line, const nlohmann::json& j) { out.push_back(source_from_json(j, line)); });
    return out;
}

inline std::vector<SourceSample> load_sources(const std::string& path) {
    auto in = open_input(path);
    return load_sources(in);
}

inline std::vector<CuratedSample> load_dataset(std::istream& in) {
    std::vector<CuratedSample> out;
    for_each_jsonl(in, [&](std::size_t line, const nlohmann::json& j) { out.push_back(curated_from_json(j, line)); });
    return out;
}

inline std::vector<CuratedSample> load_dataset(const std::string& path) {
    auto in = open_input(path);
    return load_dataset(in);
}

inline void persist_dataset(std::ostream& out, const std::vector<CuratedSample>& dataset) {
    for (const auto& s : dataset) out << to_json(s).dump() << '\n';
    if (!out) throw IoFailure("write failed");
}

inline void persist_dataset(const std::string& path, const std::vector<CuratedSample>& dataset) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    persist_dataset(out, dataset);
}

}  // namespace vtrace::pipeline
