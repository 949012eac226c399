// vtrace: batch entry point for trace validation, reward scoring, GRPO
// objective evaluation, grounding/caption metrics and dataset synthesis.
//
// Exit codes: 0 success, 1 data or validation failure, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vtrace/config.hpp"
#include "vtrace/vtrace.hpp"

namespace {

using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GlobalOptions {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_path;
};

// Writes to --out when given, stdout otherwise.
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
            if (!*file_) throw vtrace::IoFailure("cannot open '" + path + "' for writing");
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }
    bool is_file() const { return file_ != nullptr; }
    void line(const json& j) { stream() << j.dump() << '\n'; }

private:
    std::unique_ptr<std::ofstream> file_;
};

vtrace::CliConfig load_config(const GlobalOptions& g) {
    if (g.config_path.empty()) return {};
    return vtrace::load_config(g.config_path);
}

std::ifstream open(const std::string& path) { return vtrace::pipeline::open_input(path); }

json reward_json(const vtrace::RewardBreakdown& r) {
    return json{{"correctness", r.correctness}, {"format", r.format}, {"total", r.total}};
}

// ---------------------------------------------------------------------------
// validate

// A line is a JSON object with a "text" field, a JSON string, or raw text.
std::string trace_text_of(const std::string& line) {
    const auto t = vtrace::detail::trim(line);
    if (!t.empty() && (t.front() == '{' || t.front() == '"')) {
        try {
            const auto j = nlohmann::json::parse(t);
            if (j.is_string()) return j.get<std::string>();
            if (j.is_object() && j.contains("text") && j["text"].is_string()) return j["text"].get<std::string>();
        } catch (const nlohmann::json::exception&) {
        }
    }
    return line;
}

int cmd_validate(const GlobalOptions& g, const std::string& input) {
    const auto cfg = load_config(g);
    auto in = open(input);
    Output out(g.out_path);

    std::size_t traces = 0, passed = 0;
    std::map<std::string, std::size_t> check_failures{{"has_time", 0},    {"has_caption", 0},
                                                      {"has_think", 0},   {"has_answer", 0},
                                                      {"well_nested", 0}, {"spans_parseable", 0},
                                                      {"strict_parse", 0}};
    std::vector<std::size_t> failed_lines;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (vtrace::detail::trim(line).empty()) continue;
        ++traces;
        const auto text = trace_text_of(line);
        const auto rep = vtrace::validate_format(text);
        auto violations = rep.violations;
        bool strict_ok = true;
        try {
            (void)vtrace::parse_trace(text, vtrace::ParseMode::strict);
        } catch (const vtrace::MalformedTag& e) {
            strict_ok = false;
            violations.push_back(std::string("strict parse: ") + e.what());
        }
        const bool ok = rep.ok() && strict_ok;
        check_failures["has_time"] += !rep.has_time;
        check_failures["has_caption"] += !rep.has_caption;
        check_failures["has_think"] += !rep.has_think;
        check_failures["has_answer"] += !rep.has_answer;
        check_failures["well_nested"] += !rep.well_nested;
        check_failures["spans_parseable"] += !rep.spans_parseable;
        check_failures["strict_parse"] += !strict_ok;
        if (ok) {
            ++passed;
        } else {
            failed_lines.push_back(lineno);
        }
        out.line(json{{"line", lineno},
                      {"ok", ok},
                      {"format_reward", vtrace::format_reward(text, cfg.rewards.format_mode)},
                      {"checks",
                       {{"has_time", rep.has_time},
                        {"has_caption", rep.has_caption},
                        {"has_think", rep.has_think},
                        {"has_answer", rep.has_answer},
                        {"well_nested", rep.well_nested},
                        {"spans_parseable", rep.spans_parseable},
                        {"strict_parse", strict_ok}}},
                      {"violations", violations}});
    }
    const std::size_t failed = traces - passed;
    out.line(json{{"summary",
                   {{"traces", traces},
                    {"passed", passed},
                    {"failed", failed},
                    {"failed_lines", failed_lines},
                    {"check_failures", check_failures}}}});
    std::cerr << traces << " traces, " << passed << " passed, " << failed << " failed\n";
    for (auto l : failed_lines) std::cerr << "line " << l << ": format violation\n";
    return failed == 0 ? kExitOk : kExitData;
}

// ---------------------------------------------------------------------------
// score / grpo-eval

struct ScoredGroup {
    std::vector<vtrace::RewardBreakdown> rewards;
    std::vector<double> advantages;
};

ScoredGroup score_group(const vtrace::RolloutGroup& group, const vtrace::CliConfig& cfg) {
    ScoredGroup s;
    std::vector<double> totals;
    for (const auto& tr : group.traces) {
        s.rewards.push_back(vtrace::total_reward(tr.text, std::string(1, group.ground_truth), cfg.rewards.format_mode));
        totals.push_back(s.rewards.back().total);
    }
    s.advantages = vtrace::group_advantages(totals, cfg.rewards.std_epsilon);
    return s;
}

int cmd_score(const GlobalOptions& g, const std::string& input) {
    const auto cfg = load_config(g);
    auto in = open(input);
    const auto groups = vtrace::load_rollouts(in);
    Output out(g.out_path);
    int rc = kExitOk;
    for (const auto& group : groups) {
        try {
            const auto s = score_group(group, cfg);
            json rewards = json::array();
            for (const auto& r : s.rewards) rewards.push_back(reward_json(r));
            out.line(json{{"question_id", group.question_id}, {"rewards", rewards}, {"advantages", s.advantages}});
        } catch (const vtrace::Error& e) {
            std::cerr << "group '" << group.question_id << "': " << e.kind() << ": " << e.what() << '\n';
            rc = kExitData;
        }
    }
    return rc;
}

int cmd_grpo_eval(const GlobalOptions& g, const std::string& input, bool check_gradients) {
    const auto cfg = load_config(g);
    auto in = open(input);
    const auto groups = vtrace::load_rollouts(in);
    Output out(g.out_path);
    int rc = kExitOk;
    double sum = 0.0;
    std::size_t evaluated = 0;
    double max_rel = 0.0;
    std::size_t checked = 0;
    for (auto group : groups) {
        try {
            const auto s = score_group(group, cfg);
            for (std::size_t i = 0; i < group.traces.size(); ++i) group.traces[i].reward = s.rewards[i];
            const double j = vtrace::grpo_objective(group, s.advantages, cfg.grpo);
            json row{{"question_id", group.question_id}, {"objective", j}, {"advantages", s.advantages}};
            if (check_gradients) {
                const auto res = vtrace::check_grpo_gradient(group, s.advantages, cfg.grpo);
                row["max_relative_error"] = res.max_relative_error;
                max_rel = std::max(max_rel, res.max_relative_error);
                checked += res.entries;
            }
            out.line(row);
            sum += j;
            ++evaluated;
        } catch (const vtrace::Error& e) {
            std::cerr << "group '" << group.question_id << "': " << e.kind() << ": " << e.what() << '\n';
            rc = kExitData;
        }
    }
    json summary{{"groups", evaluated},
                 {"mean_objective", evaluated ? json(sum / static_cast<double>(evaluated)) : json(nullptr)}};
    if (check_gradients) {
        summary["gradient_entries"] = checked;
        summary["max_relative_error"] = max_rel;
        std::cerr << "gradient check: " << checked << " entries, max relative error " << max_rel << '\n';
    }
    out.line(json{{"summary", summary}});
    return rc;
}

// ---------------------------------------------------------------------------
// eval

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int cmd_eval(const GlobalOptions& g, const std::string& grounding_path, const std::string& caption_path,
             bool verbose) {
    if (grounding_path.empty() && caption_path.empty())
        throw UsageError("eval needs --grounding and/or --captions");
    const auto cfg = load_config(g);
    std::vector<vtrace::GroundingInstance> grounding;
    std::vector<vtrace::CaptionPair> captions;
    if (!grounding_path.empty()) {
        auto in = open(grounding_path);
        grounding = vtrace::load_grounding(in);
        if (grounding.empty()) throw vtrace::EmptyCorpus("grounding file '" + grounding_path + "' is empty");
    }
    if (!caption_path.empty()) {
        auto in = open(caption_path);
        captions = vtrace::load_captions(in);
        if (captions.empty()) throw vtrace::EmptyCorpus("caption file '" + caption_path + "' is empty");
    }
    const auto rep = vtrace::evaluate_corpus(grounding, captions, cfg.metrics);

    json j;
    j["miou"] = opt(rep.grounding ? std::optional(rep.grounding->miou) : std::nullopt);
    j["recall_03"] = opt(rep.grounding ? std::optional(rep.grounding->recall_03) : std::nullopt);
    j["recall_05"] = opt(rep.grounding ? std::optional(rep.grounding->recall_05) : std::nullopt);
    j["bleu1"] = opt(rep.captioning ? std::optional(rep.captioning->bleu1) : std::nullopt);
    j["meteor"] = opt(rep.captioning ? std::optional(rep.captioning->meteor) : std::nullopt);
    j["rouge_l"] = opt(rep.captioning ? std::optional(rep.captioning->rouge_l) : std::nullopt);
    j["n_instances"] = rep.n_instances;
    j["n_grounding"] = rep.n_grounding;
    j["n_captions"] = rep.n_captions;
    if (verbose) {
        json rows = json::array();
        for (const auto& inst : grounding) {
            const auto s = vtrace::score_grounding(std::span(&inst, 1));
            rows.push_back(json{{"id", inst.id},
                                {"family", "grounding"},
                                {"miou", s.miou},
                                {"recall_03", s.recall_03},
                                {"recall_05", s.recall_05}});
        }
        for (const auto& pair : captions) {
            const auto s = vtrace::score_caption(pair, cfg.metrics);
            rows.push_back(json{{"id", pair.id},
                                {"family", "caption"},
                                {"bleu1", s.bleu1},
                                {"meteor", s.meteor},
                                {"rouge_l", s.rouge_l}});
        }
        j["instances"] = std::move(rows);
    }
    Output out(g.out_path);
    out.stream() << j.dump(2) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// synthesize

int cmd_synthesize(const GlobalOptions& g, const std::string& input, const std::string& mock_path, bool live,
                   const std::vector<std::string>& quota_flags, const std::string& keep_rejected,
                   std::optional<std::size_t> workers) {
    namespace pl = vtrace::pipeline;
    if (mock_path.empty() == !live) throw UsageError("synthesize needs exactly one of --mock SCRIPT or --live");
    auto cfg = load_config(g);
    for (const auto& q : quota_flags) {
        const auto eq = q.find('=');
        const auto src = eq == std::string::npos ? std::nullopt : pl::source_from_string(q.substr(0, eq));
        if (!src) throw UsageError("--quota expects SOURCE=N, got '" + q + "'");
        try {
            cfg.pipeline.quotas[*src] = static_cast<std::size_t>(std::stoull(q.substr(eq + 1)));
        } catch (const std::exception&) {
            throw UsageError("--quota expects SOURCE=N, got '" + q + "'");
        }
    }
    if (cfg.pipeline.quotas.empty())
        throw UsageError("per-source quotas are required (config pipeline.quotas or --quota SOURCE=N)");
    if (workers) cfg.pipeline.worker_count = *workers;
    cfg.pipeline.seed = g.seed;

    const auto sources = pl::load_sources(input);

    std::vector<std::unique_ptr<pl::ModelClient>> owned;
    pl::PipelineClients clients;
    auto assign = [&](pl::ClientRole role, pl::ModelClient* c) {
        switch (role) {
            case pl::ClientRole::question_generator: clients.question_generator = c; break;
            case pl::ClientRole::caption_generator: clients.caption_generator = c; break;
            case pl::ClientRole::trace_synthesizer: clients.trace_synthesizer = c; break;
            case pl::ClientRole::verifier: clients.verifier = c; break;
        }
    };
    const std::array roles{pl::ClientRole::question_generator, pl::ClientRole::caption_generator,
                           pl::ClientRole::trace_synthesizer, pl::ClientRole::verifier};
    if (live) {
        for (auto role : roles) {
            const auto it = cfg.endpoints.find(role);
            if (it == cfg.endpoints.end() || it->second.url.empty())
                throw vtrace::InvalidConfig("--live needs pipeline.clients." + std::string(pl::to_string(role)) +
                                            ".url in the config");
            owned.push_back(std::make_unique<pl::HttpClient>(it->second));
            assign(role, owned.back().get());
        }
    } else {
        auto script = pl::MockScript::from_file(mock_path);
        for (auto role : roles) {
            owned.push_back(std::make_unique<pl::MockClient>(script, role));
            assign(role, owned.back().get());
        }
        cfg.pipeline.retry.base_delay = std::chrono::milliseconds(0);
    }

    const auto report = pl::run_pipeline(sources, clients, cfg.pipeline);

    Output out(g.out_path);
    pl::persist_dataset(out.stream(), report.dataset);
    out.stream().flush();
    if (!keep_rejected.empty()) pl::persist_dataset(keep_rejected, report.dropped);

    std::map<std::string, std::size_t> by_reason;
    for (const auto& r : report.rejected) ++by_reason[r.reason];
    std::size_t transport_failures = 0;
    for (const auto& f : report.failed) {
        std::cerr << "failed " << f.video_id << ": " << f.kind << ": " << f.message << '\n';
        if (f.kind == "ClientTransport") ++transport_failures;
    }
    for (const auto& d : report.dropped)
        std::cerr << "dropped " << d.video.video_id << " after " << d.provenance.attempts << " attempt(s)\n";

    const json summary{{"input", report.input},
                       {"kept", report.input - report.rejected.size()},
                       {"rejected", report.rejected.size()},
                       {"rejected_by_reason", by_reason},
                       {"failed", report.failed.size()},
                       {"dropped_after_max_attempts", report.dropped.size()},
                       {"curated", report.curated},
                       {"sampled", report.dataset.size()}};
    (out.is_file() ? std::cout : std::cerr) << summary.dump() << '\n';
    return transport_failures == 0 ? kExitOk : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vtrace: structured reasoning traces, GRPO rewards and objectives, grounding/caption metrics, "
                 "and hindsight-curated dataset synthesis"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--out", g.out_path, "Write results to this file instead of stdout");

    std::string input;
    auto* validate = app.add_subcommand("validate", "Check the trace format of each line of a file");
    validate->add_option("input", input, "Traces, one per line (raw, JSON string, or {\"text\": ...})")->required();

    auto* score = app.add_subcommand("score", "Rewards and group advantages for a rollout file");
    score->add_option("rollouts", input, "Rollout groups as JSON lines")->required();

    bool check_gradients = false;
    auto* grpo = app.add_subcommand("grpo-eval", "GRPO objective per rollout group");
    grpo->add_option("rollouts", input, "Rollout groups with cur/old/ref log-probabilities")->required();
    grpo->add_flag("--check-gradients", check_gradients, "Compare analytic gradients with finite differences");

    std::string grounding_path, caption_path;
    bool verbose = false;
    auto* eval = app.add_subcommand("eval", "Grounding and caption metrics report");
    eval->add_option("--grounding", grounding_path, "Grounding corpus (JSON lines)");
    eval->add_option("--captions", caption_path, "Caption corpus (JSON lines)");
    eval->add_flag("--verbose", verbose, "Add per-instance rows");

    std::string mock_path, keep_rejected;
    bool live = false;
    std::vector<std::string> quotas;
    std::optional<std::size_t> workers;
    auto* synth = app.add_subcommand("synthesize", "Curate a training dataset from source samples");
    synth->add_option("sources", input, "Source samples (JSON lines)")->required();
    synth->add_option("--mock", mock_path, "Scripted mock-client responses (offline)");
    synth->add_flag("--live", live, "Call the HTTP endpoints from the config");
    synth->add_option("--quota", quotas, "Per-source quota SOURCE=N (repeatable)");
    synth->add_option("--keep-rejected", keep_rejected, "Write samples dropped after verification here");
    synth->add_option("--workers", workers, "Parallel sample workers");

    for (auto* sub : {validate, score, grpo, eval, synth}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        (void)app.exit(e);
        return kExitUsage;
    }

    try {
        if (*validate) return cmd_validate(g, input);
        if (*score) return cmd_score(g, input);
        if (*grpo) return cmd_grpo_eval(g, input, check_gradients);
        if (*eval) return cmd_eval(g, grounding_path, caption_path, verbose);
        if (*synth) return cmd_synthesize(g, input, mock_path, live, quotas, keep_rejected, workers);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const vtrace::InvalidConfig& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const vtrace::Error& e) {
        std::cerr << e.kind() << ": " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
