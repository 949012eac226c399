#pragma once

// Structured reasoning traces: `<time>`, `<caption>`, `<think>` and
// `<answer>` tagged model output, with a strict/lenient parser, a canonical
// renderer and a format checker that feeds the format reward.

#include <array>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "vtrace/errors.hpp"

namespace vtrace {

struct TimeSpan {
    double start = 0.0;
    double end = 0.0;

    bool valid() const noexcept {
        return std::isfinite(start) && std::isfinite(end) && start >= 0.0 && end >= start;
    }
    double length() const noexcept { return end - start; }

    friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

struct ReasoningSegment {
    TimeSpan span;
    std::string caption;
    std::string think;

    friend bool operator==(const ReasoningSegment&, const ReasoningSegment&) = default;
};

struct ReasoningTrace {
    std::vector<ReasoningSegment> segments;
    std::string preamble;
    std::optional<char> answer;

    friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

struct FormatReport {
    bool has_time = false;
    bool has_caption = false;
    bool has_think = false;
    bool has_answer = false;
    bool well_nested = false;
    bool spans_parseable = false;
    std::vector<std::string> violations;

    bool ok() const noexcept { return violations.empty(); }
};

enum class ParseMode { strict, lenient };

enum class TagFamily { time, caption, think, answer };

inline constexpr std::array<std::string_view, 4> kTagNames = {"time", "caption", "think", "answer"};

inline std::string_view tag_name(TagFamily f) noexcept {
    return kTagNames[static_cast<std::size_t>(f)];
}

namespace detail {

inline bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline void append_paragraph(std::string& dst, std::string_view piece) {
    if (piece.empty()) return;
    if (!dst.empty()) dst += '\n';
    dst.append(piece);
}

struct Lexeme {
    enum class Kind { text, open, close };
    Kind kind;
    TagFamily family = TagFamily::time;
    std::string_view text;  // raw slice for text lexemes
    std::size_t offset = 0;
};

// Matches `<name>` or `</name>` for a known tag at `pos`; returns the
// consumed length or 0.
inline std::size_t match_tag(std::string_view s, std::size_t pos, bool& closing,
                             TagFamily& family) noexcept {
    if (pos >= s.size() || s[pos] != '<') return 0;
    std::size_t p = pos + 1;
    closing = p < s.size() && s[p] == '/';
    if (closing) ++p;
    for (std::size_t i = 0; i < kTagNames.size(); ++i) {
        const auto name = kTagNames[i];
        if (s.substr(p, name.size()) == name && p + name.size() < s.size() &&
            s[p + name.size()] == '>') {
            family = static_cast<TagFamily>(i);
            return p + name.size() + 1 - pos;
        }
    }
    return 0;
}

inline std::vector<Lexeme> lex(std::string_view s) {
    std::vector<Lexeme> out;
    std::size_t text_start = 0;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const auto lt = s.find('<', pos);
        if (lt == std::string_view::npos) break;
        bool closing = false;
        TagFamily family{};
        const auto len = match_tag(s, lt, closing, family);
        if (len == 0) {
            pos = lt + 1;
            continue;
        }
        if (lt > text_start) {
            out.push_back({Lexeme::Kind::text, family, s.substr(text_start, lt - text_start),
                           text_start});
        }
        out.push_back({closing ? Lexeme::Kind::close : Lexeme::Kind::open, family, {}, lt});
        pos = lt + len;
        text_start = pos;
    }
    if (text_start < s.size()) {
        out.push_back({Lexeme::Kind::text, TagFamily::time, s.substr(text_start), text_start});
    }
    return out;
}

// A tagged region or a run of free text, after structural recovery.
struct Element {
    bool tagged = false;
    TagFamily family = TagFamily::time;
    std::string body;
    std::size_t offset = 0;
};

struct Structure {
    std::vector<Element> elements;
    std::vector<std::string> problems;  // empty iff tags are well nested
};

// Pairs open/close tags. Known tags never nest: an open tag while another is
// open, a mismatched close, a stray close and an unclosed tag are all
// recorded as problems and recovered from by closing the region implicitly.
inline Structure structure(std::string_view s) {
    Structure st;
    std::optional<Element> open;
    auto flush_open = [&] {
        st.elements.push_back(std::move(*open));
        open.reset();
    };
    for (const auto& lx : lex(s)) {
        switch (lx.kind) {
            case Lexeme::Kind::text:
                if (open) {
                    open->body.append(lx.text);
                } else {
                    st.elements.push_back({false, TagFamily::time, std::string(lx.text), lx.offset});
                }
                break;
            case Lexeme::Kind::open:
                if (open) {
                    st.problems.push_back("<" + std::string(tag_name(lx.family)) +
                                          "> opened inside unclosed <" +
                                          std::string(tag_name(open->family)) + "> at offset " +
                                          std::to_string(lx.offset));
                    flush_open();
                }
                open = Element{true, lx.family, {}, lx.offset};
                break;
            case Lexeme::Kind::close:
                if (!open) {
                    st.problems.push_back("stray </" + std::string(tag_name(lx.family)) +
                                          "> at offset " + std::to_string(lx.offset));
                } else if (open->family != lx.family) {
                    st.problems.push_back("</" + std::string(tag_name(lx.family)) +
                                          "> closes <" + std::string(tag_name(open->family)) +
                                          "> at offset " + std::to_string(lx.offset));
                    flush_open();
                } else {
                    flush_open();
                }
                break;
        }
    }
    if (open) {
        st.problems.push_back("unclosed <" + std::string(tag_name(open->family)) +
                              "> at offset " + std::to_string(open->offset));
        flush_open();
    }
    return st;
}

inline std::optional<double> parse_decimal(std::string_view s) noexcept {
    if (s.empty()) return std::nullopt;
    int dots = 0;
    int digits = 0;
    for (char c : s) {
        if (c == '.') {
            ++dots;
        } else if (c >= '0' && c <= '9') {
            ++digits;
        } else {
            return std::nullopt;
        }
    }
    if (dots > 1 || digits == 0) return std::nullopt;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::fixed);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline bool all_digits(std::string_view s) noexcept {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

// "12.5", "12.5s", "1:05", "1:02:03.5"
inline std::optional<double> parse_clock(std::string_view s) noexcept {
    s = trim(s);
    if (!s.empty() && s.back() == 's') s.remove_suffix(1);
    std::array<std::string_view, 3> parts{};
    std::size_t n = 0;
    while (true) {
        const auto colon = s.find(':');
        if (n == parts.size()) return std::nullopt;
        parts[n++] = s.substr(0, colon);
        if (colon == std::string_view::npos) break;
        s.remove_prefix(colon + 1);
    }
    if (n == 1) return parse_decimal(parts[0]);
    // Leading fields are integral; the last may carry a fraction.
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!all_digits(parts[i])) return std::nullopt;
        const auto v = parse_decimal(parts[i]);
        if (!v) return std::nullopt;
        if (i > 0 && *v >= 60.0) return std::nullopt;
        total = total * 60.0 + *v;
    }
    const auto secs = parse_decimal(parts[n - 1]);
    if (!secs || *secs >= 60.0) return std::nullopt;
    return total * 60.0 + *secs;
}

}  // namespace detail

/// Parses the body of a `<time>` tag. Accepts plain seconds and MM:SS or
/// H:MM:SS clock forms, separated by '-' or an en dash. The result may be
/// inverted (end < start); callers decide whether that is acceptable.
inline std::optional<TimeSpan> parse_time_bounds(std::string_view body) noexcept {
    body = detail::trim(body);
    std::size_t sep = body.find('-');
    std::size_t sep_len = 1;
    if (sep == std::string_view::npos) {
        sep = body.find("\xE2\x80\x93");  // U+2013
        sep_len = 3;
    }
    if (sep == std::string_view::npos) return std::nullopt;
    const auto start = detail::parse_clock(body.substr(0, sep));
    const auto end = detail::parse_clock(body.substr(sep + sep_len));
    if (!start || !end) return std::nullopt;
    TimeSpan span{*start, *end};
    if (!std::isfinite(span.start) || !std::isfinite(span.end)) return std::nullopt;
    return span;
}

/// Shortest fixed-notation decimal that reads back to the same double.
inline std::string format_seconds(double v) {
    std::array<char, 400> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed);
    return std::string(buf.data(), res.ptr);
}

/// Content of the last `<answer>` tag, trimmed and uppercased, when it is a
/// single ASCII letter.
inline std::optional<char> extract_answer(std::string_view text) noexcept {
    constexpr std::string_view open = "<answer>";
    constexpr std::string_view close = "</answer>";
    const auto pos = text.rfind(open);
    if (pos == std::string_view::npos) return std::nullopt;
    const auto body_start = pos + open.size();
    const auto end = text.find(close, body_start);
    if (end == std::string_view::npos) return std::nullopt;
    const auto body = detail::trim(text.substr(body_start, end - body_start));
    if (body.size() != 1) return std::nullopt;
    const char c = body.front();
    if (c >= 'a' && c <= 'z') return static_cast<char>(c - 'a' + 'A');
    if (c >= 'A' && c <= 'Z') return c;
    return std::nullopt;
}

/// Groups tagged content into segments in document order. A `<time>` tag
/// opens a segment; captions and thinks that precede a time tag bind to it,
/// those that follow bind to the most recent segment. Untagged text before
/// the first segment is the preamble, later untagged text joins the current
/// segment's think. Strict mode throws MalformedTag on any structural or
/// span problem; lenient mode recovers and drops what cannot be placed.
inline ReasoningTrace parse_trace(std::string_view text, ParseMode mode = ParseMode::strict) {
    using detail::append_paragraph;
    using detail::trim;
    const bool strict = mode == ParseMode::strict;

    auto st = detail::structure(text);
    if (strict && !st.problems.empty()) throw MalformedTag(st.problems.front());

    ReasoningTrace trace;
    std::optional<std::size_t> cur;
    std::optional<std::string> pending_caption;
    std::string pending_think;
    bool has_pending_think = false;
    // set once a `<time>` fails to parse in lenient mode, so its caption and
    // think are discarded with it
    bool orphaned = false;

    for (const auto& el : st.elements) {
        const auto body = trim(el.body);
        if (!el.tagged) {
            if (body.empty()) continue;
            if (cur) {
                append_paragraph(trace.segments[*cur].think, body);
            } else {
                append_paragraph(trace.preamble, body);
            }
            continue;
        }
        switch (el.family) {
            case TagFamily::time: {
                auto span = parse_time_bounds(body);
                if (!span || (strict && !span->valid())) {
                    if (strict) {
                        throw MalformedTag("unparseable time span '" + std::string(body) +
                                           "' at offset " + std::to_string(el.offset));
                    }
                    orphaned = true;
                    pending_caption.reset();
                    pending_think.clear();
                    has_pending_think = false;
                    break;
                }
                orphaned = false;
                ReasoningSegment seg{*span, {}, {}};
                if (pending_caption) seg.caption = std::move(*pending_caption);
                if (has_pending_think) seg.think = std::move(pending_think);
                pending_caption.reset();
                pending_think.clear();
                has_pending_think = false;
                trace.segments.push_back(std::move(seg));
                cur = trace.segments.size() - 1;
                break;
            }
            case TagFamily::caption: {
                if (orphaned) break;
                if (cur && trace.segments[*cur].caption.empty() && !pending_caption) {
                    trace.segments[*cur].caption = std::string(body);
                } else if (!pending_caption) {
                    pending_caption = std::string(body);
                } else if (strict) {
                    throw MalformedTag("two captions without a time span at offset " +
                                       std::to_string(el.offset));
                }
                break;
            }
            case TagFamily::think: {
                if (orphaned) break;
                if (pending_caption || !cur) {
                    append_paragraph(pending_think, body);
                    has_pending_think = true;
                } else {
                    append_paragraph(trace.segments[*cur].think, body);
                }
                break;
            }
            case TagFamily::answer:
                break;
        }
    }

    if (pending_caption || has_pending_think) {
        if (strict) throw MalformedTag("caption or think not attached to any <time> span");
        // lenient: keep the text somewhere visible rather than drop it
        std::string& dst = cur ? trace.segments[*cur].think : trace.preamble;
        if (pending_caption) append_paragraph(dst, *pending_caption);
        append_paragraph(dst, pending_think);
    }

    if (strict) {
        for (const auto& seg : trace.segments) {
            if (trim(seg.caption).empty()) {
                throw MalformedTag("segment " + format_seconds(seg.span.start) + "-" +
                                   format_seconds(seg.span.end) + " has no caption");
            }
        }
    }

    trace.answer = extract_answer(text);
    return trace;
}

/// Canonical text form; parse_trace(render_trace(t)) == t for valid traces.
inline std::string render_trace(const ReasoningTrace& trace) {
    std::string out;
    if (!trace.preamble.empty()) {
        out += trace.preamble;
        out += '\n';
    }
    for (const auto& seg : trace.segments) {
        out += "<time>";
        out += format_seconds(seg.span.start);
        out += '-';
        out += format_seconds(seg.span.end);
        out += "</time>\n<caption>";
        out += seg.caption;
        out += "</caption>\n<think>";
        out += seg.think;
        out += "</think>\n";
    }
    if (trace.answer) {
        out += "<answer>";
        out += *trace.answer;
        out += "</answer>";
    }
    return out;
}

/// True when `text` contains no known open/close tag.
inline bool is_tag_free(std::string_view text) {
    for (const auto& lx : detail::lex(text))
        if (lx.kind != detail::Lexeme::Kind::text) return false;
    return true;
}

/// Checks a trace against its invariants; returns a description of the first
/// violation, if any.
inline std::optional<std::string> check_trace(const ReasoningTrace& trace) {
    using detail::trim;
    if (trim(trace.preamble) != trace.preamble) return "preamble has surrounding whitespace";
    if (!is_tag_free(trace.preamble)) return "preamble contains tags";
    for (std::size_t i = 0; i < trace.segments.size(); ++i) {
        const auto& seg = trace.segments[i];
        const auto where = "segment " + std::to_string(i) + ": ";
        if (!seg.span.valid()) return where + "invalid time span";
        if (trim(seg.caption).empty()) return where + "empty caption";
        if (trim(seg.caption) != seg.caption || trim(seg.think) != seg.think)
            return where + "text has surrounding whitespace";
        if (!is_tag_free(seg.caption) || !is_tag_free(seg.think)) return where + "text contains tags";
    }
    if (trace.answer && (*trace.answer < 'A' || *trace.answer > 'Z'))
        return "answer is not a letter A-Z";
    return std::nullopt;
}

inline FormatReport validate_format(std::string_view text) {
    using detail::trim;
    FormatReport r;
    const auto st = detail::structure(text);

    std::size_t time_tags = 0;
    std::size_t bad_spans = 0;
    bool seen_time = false;
    bool inter_text = false;
    bool think_tag = false;
    bool answer_tag = false;
    for (const auto& el : st.elements) {
        if (!el.tagged) {
            if (seen_time && !trim(el.body).empty()) inter_text = true;
            continue;
        }
        switch (el.family) {
            case TagFamily::time: {
                ++time_tags;
                seen_time = true;
                const auto span = parse_time_bounds(el.body);
                if (!span || !span->valid()) {
                    ++bad_spans;
                    r.violations.push_back("time span '" + std::string(trim(el.body)) +
                                           "' at offset " + std::to_string(el.offset) +
                                           (span ? " has end before start" : " does not parse"));
                }
                break;
            }
            case TagFamily::caption:
                if (!trim(el.body).empty()) r.has_caption = true;
                break;
            case TagFamily::think:
                think_tag = true;
                break;
            case TagFamily::answer:
                answer_tag = true;
                break;
        }
    }

    r.has_time = time_tags > 0;
    r.has_think = think_tag || inter_text;
    r.has_answer = extract_answer(text).has_value();
    r.well_nested = st.problems.empty();
    r.spans_parseable = time_tags > 0 && bad_spans == 0;

    if (!r.has_time) r.violations.emplace_back("no <time> span");
    if (!r.has_caption) r.violations.emplace_back("no non-empty <caption>");
    if (!r.has_think) r.violations.emplace_back("no <think> tag or reasoning text");
    if (!r.has_answer) {
        r.violations.emplace_back(answer_tag ? "last <answer> is not a single letter A-Z"
                                             : "no <answer> tag");
    }
    for (const auto& p : st.problems) r.violations.push_back(p);
    return r;
}

}  // namespace vtrace
