// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <unistd.h>
#include <string>
#include <vector>

#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/process.hpp"
#include "vtrace/config.hpp"
#include "vtrace/vtrace.hpp"

using namespace vtrace;
using namespace vtrace::pipeline;

namespace {

const std::string kFx = std::string(VTRACE_FIXTURE_DIR) + "/";
const std::string kCli = VTRACE_CLI_PATH;

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool ok = true;
    std::string detail;
};

// Records the first failure; later checks keep running so the detail stays
// about the earliest problem.
struct Checker {
    Outcome out;
    void expect(bool cond, const std::string& what) {
        if (!cond && out.ok) {
            out.ok = false;
            out.detail = what;
        }
    }
    void near(double got, double want, double tol, const std::string& what) {
        std::ostringstream s;
        s.precision(17);
        s << what << ": got " << got << ", want " << want << " +- " << tol;
        expect(std::abs(got - want) <= tol, s.str());
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------------------

Outcome trace_round_trip() {
    Checker c;
    gen::Rng rng(1001);
    for (int n = 0; n < 1000; ++n) {
        const auto t = gen::trace(rng);
        const auto text = render_trace(t);
        try {
            c.expect(parse_trace(text) == t, "round trip differs for: " + text);
        } catch (const Error& e) {
            c.expect(false, std::string("strict parse threw on rendered trace: ") + e.what());
        }
    }
    const std::string pieces[] = {"<time>", "</time>", "<caption>", "</caption>", "<think>", "</think>",
                                  "<answer>", "</answer>", "<", ">", "/", "-", ":"};
    for (int n = 0; n < 10000; ++n) {
        std::string s;
        const int len = gen::integer(rng, 0, 64);
        for (int i = 0; i < len; ++i) {
            if (gen::coin(rng, 0.7)) {
                s += static_cast<char>(gen::integer(rng, 0, 255));
            } else {
                s += pieces[gen::integer(rng, 0, 12)];
            }
        }
        try {
            (void)parse_trace(s, ParseMode::lenient);
        } catch (const std::exception& e) {
            c.expect(false, std::string("lenient parse threw: ") + e.what());
        }
    }
    return c.out;
}

Outcome advantage_normalization() {
    Checker c;
    gen::Rng rng(2002);
    for (int n = 0; n < 1000; ++n) {
        std::vector<double> r(static_cast<std::size_t>(gen::integer(rng, 2, 16)));
        for (auto& x : r) x = gen::integer(rng, 0, 10) * 0.2;
        if (std::all_of(r.begin(), r.end(), [&](double x) { return x == r[0]; })) r[0] += 0.2;
        const auto a = group_advantages(r, 0.0);
        const double mu = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
        double var = 0;
        for (double x : a) var += (x - mu) * (x - mu);
        c.expect(std::abs(mu) < 1e-9, "mean not zero");
        c.expect(std::abs(std::sqrt(var / a.size()) - 1.0) < 1e-9, "population std not one");
    }
    c.expect(group_advantages(std::vector<double>{1, 1, 0, 0}, 0.0) == std::vector<double>{1, 1, -1, -1},
             "[1,1,0,0] does not map to [1,1,-1,-1]");
    for (double v : {0.0, 1.0, 2.0})
        c.expect(group_advantages(std::vector<double>(6, v)) == std::vector<double>(6, 0.0),
                 "all-equal group is not all zero");
    return c.out;
}

Outcome gradient_check() {
    Checker c;
    gen::Rng rng(3003);
    double worst = 0;
    int clipped = 0, unclipped = 0;
    for (int n = 0; n < 100; ++n) {
        const auto in = gen::grpo_instance(rng, n % 2 ? 0.04 : 0.0);
        const auto analytic = grpo_gradient(gen::to_group(in), in.adv, gen::to_config(in));
        const auto numeric = oracle::fd_gradient(in, 1e-6);
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            for (std::size_t t = 0; t < analytic[i].size(); ++t) {
                worst = std::max(worst, relative_error(analytic[i][t], numeric[i][t]));
                const double r = std::exp(in.traces[i].cur[t] - in.traces[i].old[t]);
                (std::abs(r - 1) > in.eps ? clipped : unclipped)++;
            }
        }
    }
    c.expect(clipped > 0 && unclipped > 0, "instances did not mix clipped and unclipped ratios");
    char buf[64];
    std::snprintf(buf, sizeof buf, "max relative error %.3e", worst);
    c.expect(worst < 1e-5, buf);
    if (c.out.ok) c.out.detail = buf;
    return c.out;
}

RolloutTrace rollout(std::vector<double> cur, std::vector<double> old, std::vector<double> ref) {
    RolloutTrace t;
    t.cur = TokenLogProbs(std::move(cur));
    t.old = TokenLogProbs(std::move(old));
    t.ref = TokenLogProbs(std::move(ref));
    return t;
}

Outcome degenerate_identities() {
    Checker c;
    RolloutGroup same;
    same.traces = {rollout({-0.3, -1.1}, {-0.3, -1.1}, {-0.3, -1.1}), rollout({-2.0}, {-2.0}, {-2.0})};
    c.near(grpo_objective(same, std::vector<double>{1.0, -1.0}), 0.0, 1e-12, "identity policies");

    RolloutGroup g;
    g.traces = {rollout({-0.2, -0.9}, {-0.5, -0.4}, {-0.9, -0.1}), rollout({-1.0}, {-1.3}, {-0.2}),
                rollout({-2.0, -0.5, -0.1}, {-1.0, -1.0, -1.0}, {-2.5, -0.4, -0.3})};
    const auto adv = group_advantages(std::vector<double>{1.4, 1.4, 1.4});
    // mean over traces of the token-mean of e^x - x - 1, summed by hand here
    long double kl = 0;
    for (const auto& tr : g.traces) {
        long double s = 0;
        for (std::size_t t = 0; t < tr.cur.size(); ++t) {
            const long double x = static_cast<long double>(tr.ref[t]) - tr.cur[t];
            s += std::exp(x) - x - 1;
        }
        kl += s / tr.cur.size();
    }
    kl /= g.traces.size();
    c.near(grpo_objective(g, adv), static_cast<double>(-0.04L * kl), 1e-12, "all-equal rewards");

    std::ifstream clip_in(kFx + "rollouts_clip.jsonl");
    const auto clip_groups = load_rollouts(clip_in);
    const auto cfg = load_config(kFx + "config_clip.json");
    std::vector<double> rewards;
    for (const auto& tr : clip_groups.at(0).traces)
        rewards.push_back(total_reward(tr.text, std::string(1, clip_groups[0].ground_truth)).total);
    const auto clip_adv = group_advantages(rewards, cfg.rewards.std_epsilon);
    c.near(grpo_objective(clip_groups.at(0), clip_adv, cfg.grpo), 0.1, 1e-12, "clip fixture");
    return c.out;
}

Outcome kl_estimator() {
    Checker c;
    gen::Rng rng(5005);
    for (int n = 0; n < 10000; ++n) {
        const double cur = -gen::uniform(rng, 1e-6, 20.0), ref = -gen::uniform(rng, 1e-6, 20.0);
        c.expect(kl_penalty(TokenLogProbs({cur}), TokenLogProbs({ref})) >= 0.0, "negative KL");
        c.expect(kl_penalty(TokenLogProbs({cur}), TokenLogProbs({cur})) == 0.0, "KL not exactly zero at cur == ref");
    }
    const double ln2 = std::log(2.0);
    c.near(kl_penalty(TokenLogProbs({-1.0}), TokenLogProbs({-1.0 + ln2})), 0.30685281944005469, 1e-12, "x = ln 2");
    c.near(kl_penalty(TokenLogProbs({-1.0}), TokenLogProbs({-1.0 - ln2})), 0.19314718055994531, 1e-12, "x = -ln 2");
    return c.out;
}

// Every sequence over {0,1,2} of length 0..8 against every other, with the
// oracle answering from each sequence's set of distinct subsequences.
Outcome lcs_exhaustive() {
    Checker c;
    constexpr int kAlphabet = 3, kMaxLen = 8;
    std::vector<std::vector<int>> seqs{{}};
    for (std::size_t from = 0; from < seqs.size(); ++from) {
        if (seqs[from].size() == kMaxLen) continue;
        for (int s = 0; s < kAlphabet; ++s) {
            auto next = seqs[from];
            next.push_back(s);
            seqs.push_back(std::move(next));
        }
    }
    std::vector<std::vector<std::pair<int, std::uint32_t>>> subs;
    subs.reserve(seqs.size());
    for (const auto& s : seqs) subs.push_back(oracle::subsequences(s, kAlphabet));

    std::uint32_t code_space = 1;
    for (int i = 0; i < kMaxLen; ++i) code_space *= kAlphabet + 1;
    std::vector<std::uint8_t> in_b(code_space, 0);
    std::uint64_t pairs = 0;
    for (std::size_t j = 0; j < seqs.size() && c.out.ok; ++j) {
        for (const auto& [len, code] : subs[j]) in_b[code] = 1;
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            std::size_t want = 0;
            for (const auto& [len, code] : subs[i]) {
                if (in_b[code]) {
                    want = static_cast<std::size_t>(len);
                    break;
                }
            }
            const auto got = lcs_length(seqs[i], seqs[j]);
            if (got != want) {
                c.expect(false, "pair " + std::to_string(i) + "," + std::to_string(j) + ": " + std::to_string(got) +
                                    " vs " + std::to_string(want));
                break;
            }
            ++pairs;
        }
        for (const auto& [len, code] : subs[j]) in_b[code] = 0;
    }
    c.expect(pairs == static_cast<std::uint64_t>(seqs.size()) * seqs.size(), "sweep incomplete");
    if (c.out.ok) c.out.detail = std::to_string(pairs) + " pairs";
    return c.out;
}

Outcome grounding_metrics() {
    Checker c;
    gen::Rng rng(7007);
    for (int n = 0; n < 10000; ++n) {
        std::int64_t e[4];
        for (auto& x : e) x = gen::integer(rng, 0, 100000);
        if (e[0] > e[1]) std::swap(e[0], e[1]);
        if (e[2] > e[3]) std::swap(e[2], e[3]);
        const double scale = gen::coin(rng) ? 1.0 : 0.25;  // exact binary fractions
        const TimeSpan a{e[0] * scale, e[1] * scale}, b{e[2] * scale, e[3] * scale};
        c.near(interval_iou(a, b), static_cast<double>(oracle::iou_exact(e[0], e[1], e[2], e[3]).value()), 1e-12,
               "interval_iou");
    }
    for (int n = 0; n < 100; ++n) {
        std::vector<GroundingInstance> corpus(static_cast<std::size_t>(gen::integer(rng, 1, 20)));
        for (auto& inst : corpus) {
            for (int k = gen::integer(rng, 1, 3); k > 0; --k) inst.ground_truths.push_back(gen::span(rng));
            for (int k = gen::integer(rng, 0, 4); k > 0; --k) inst.predictions.push_back(gen::span(rng));
            if (gen::coin(rng)) {
                auto near = inst.ground_truths[0];
                near.end += gen::uniform(rng, 0, 5);
                inst.predictions.push_back(near);
            }
        }
        double prev = 2.0;
        for (int k = 1; k <= 9; ++k) {
            const double r = recall_at_k(corpus, k / 10.0);
            c.expect(r <= prev, "recall increased with k");
            prev = r;
        }
        auto exact = corpus;
        for (auto& inst : exact) inst.predictions = inst.ground_truths;
        c.expect(miou(exact) == 1.0, "exact-match mIoU != 1");
        for (int k = 1; k <= 9; ++k) c.expect(recall_at_k(exact, k / 10.0) == 1.0, "exact-match recall != 1");
    }
    return c.out;
}

Outcome caption_examples() {
    Checker c;
    c.near(bleu1(tokenize("the the cat"), tokenize("the cat sat")), 2.0 / 3.0, 1e-9, "BLEU@1");
    c.near(rouge_l(tokenize("a b c d"), tokenize("a c d")), 0.8798076923076923, 1e-9, "ROUGE-L");
    c.near(meteor(tokenize("the cat sat"), tokenize("the cat ran")), 0.625, 1e-9, "METEOR");
    std::ifstream in(kFx + "captions.jsonl");
    const auto pairs = load_captions(in);
    c.near(score_caption(pairs.at(0)).bleu1, 2.0 / 3.0, 1e-9, "fixture BLEU@1");
    c.near(score_caption(pairs.at(1)).rouge_l, 0.8798076923076923, 1e-9, "fixture ROUGE-L");
    c.near(score_caption(pairs.at(2)).meteor, 0.625, 1e-9, "fixture METEOR");
    return c.out;
}

// ---------------------------------------------------------------------------
// Pipeline

const std::string kTrace =
    "<time>1-5</time><caption>x is shown</caption><think>so x</think><answer>B</answer>";

SourceSample star(const std::string& id, const std::string& question) {
    SourceSample s;
    s.video = {id, 200, 20.0, SourceDataset::STAR, false};
    s.kind = SampleKind::qa_labeled;
    s.question = question;
    s.options = std::vector<std::string>{"w", "x", "y", "z"};
    s.answer = 'B';
    s.segments = {{{1, 5}, std::nullopt}};
    return s;
}

PipelineReport run_script(const nlohmann::json& rules, const std::vector<SourceSample>& sources,
                          std::map<SourceDataset, std::size_t> quotas) {
    auto script = MockScript::from_json({{"rules", rules}});
    MockClient q(script, ClientRole::question_generator), cg(script, ClientRole::caption_generator),
        s(script, ClientRole::trace_synthesizer), v(script, ClientRole::verifier);
    PipelineConfig cfg;
    cfg.quotas = std::move(quotas);
    cfg.retry.base_delay = std::chrono::milliseconds(0);
    cfg.seed = 7;
    return run_pipeline(sources, {&q, &cg, &s, &v}, cfg);
}

Outcome retry_bound() {
    Checker c;
    auto rules_with = [](const nlohmann::json& verdicts) {
        return nlohmann::json::array({
            {{"role", "caption_generator"}, {"replies", {"x is shown"}}},
            {{"role", "trace_synthesizer"}, {"replies", {kTrace}}},
            {{"role", "verifier"}, {"replies", verdicts}},
        });
    };
    const auto pass = run_script(rules_with({"A", "C", "B"}), {star("v", "q?")}, {{SourceDataset::STAR, 1}});
    c.expect(pass.dataset.size() == 1 && pass.dataset[0].provenance.attempts == 3 &&
                 pass.dataset[0].provenance.verified,
             "fail-fail-pass did not give attempts = 3, verified");
    const auto drop = run_script(rules_with({"A", "A", "A"}), {star("v", "q?")}, {});
    c.expect(drop.dataset.empty() && drop.dropped.size() == 1 && drop.dropped[0].provenance.attempts == 3,
             "fail x3 was not dropped after 3 attempts");

    const auto logged = proc::run(kCli + " --config " + kFx + "config_synth.json synthesize " + kFx +
                                      "sources.jsonl --mock " + kFx + "mock_script.json --out /dev/null",
                                  true);
    c.expect(logged.out.find("dropped star_003 after 3 attempt(s)") != std::string::npos,
             "CLI did not log the dropped sample");

    gen::Rng rng(9009);
    for (int n = 0; n < 1000; ++n) {
        nlohmann::json rules = nlohmann::json::array();
        rules.push_back({{"role", "caption_generator"}, {"replies", {"x is shown"}}});
        std::vector<SourceSample> sources;
        for (int i = 0; i < 3; ++i) {
            const std::string q = "question " + std::to_string(i) + "?";
            sources.push_back(star("v" + std::to_string(i), q));
            nlohmann::json synth = nlohmann::json::array(), verdicts = nlohmann::json::array();
            for (int k = gen::integer(rng, 1, 4); k > 0; --k) synth.push_back(gen::coin(rng, 0.7) ? kTrace : "<time>x");
            for (int k = gen::integer(rng, 1, 5); k > 0; --k) {
                if (gen::coin(rng, 0.05)) {
                    verdicts.push_back({{"transport_error", "flaky"}});
                } else {
                    verdicts.push_back(std::string(1, "ABCD"[gen::integer(rng, 0, 3)]));
                }
            }
            rules.push_back({{"role", "trace_synthesizer"}, {"contains", q}, {"replies", synth}});
            rules.push_back({{"role", "verifier"}, {"contains", q}, {"replies", verdicts}});
        }
        const auto probe = run_script(rules, sources, {});
        const auto full = run_script(rules, sources, {{SourceDataset::STAR, probe.curated}});
        for (const auto& s : full.dataset)
            c.expect(s.provenance.attempts >= 1 && s.provenance.attempts <= 3, "emitted sample with attempts > 3");
        for (const auto& s : full.dropped) c.expect(s.provenance.attempts <= 3, "dropped after more than 3 attempts");
    }

    auto framed = [](std::int64_t frames) {
        SourceSample s = star("f" + std::to_string(frames), "q");
        s.video.frame_count = frames;
        return s;
    };
    const auto f = filter_sources({framed(64), framed(63), framed(65)});
    c.expect(f.kept.size() == 2 && f.kept[0].video.frame_count == 64, "64 frames not admitted");
    c.expect(f.rejected.size() == 1 && f.rejected[0].sample.video.frame_count == 63, "63 frames not rejected");
    return c.out;
}

Outcome determinism() {
    Checker c;
    const auto dir = std::filesystem::temp_directory_path() / ("vtrace_accept_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    std::vector<std::string> outputs;
    for (int run = 0; run < 2; ++run) {
        const auto path = (dir / ("run" + std::to_string(run) + ".jsonl")).string();
        const auto r = proc::run(kCli + " --config " + kFx + "config_synth.json --seed 7 synthesize " + kFx +
                                 "sources.jsonl --mock " + kFx + "mock_script.json --workers 4 --out " + path);
        c.expect(r.code == 0, "synthesize exited " + std::to_string(r.code));
        outputs.push_back(slurp(path));
    }
    std::filesystem::remove_all(dir);
    c.expect(!outputs[0].empty(), "empty output");
    c.expect(outputs[0] == outputs[1], "outputs differ");
    return c.out;
}

Outcome sft_values() {
    Checker c;
    c.near(sft_loss(TokenLogProbs({0.0, 0.0, 0.0})), 0.0, 0.0, "certainty");
    c.near(sft_loss(TokenLogProbs({std::log(0.5)})), 0.6931471805599453, 1e-12, "[ln 0.5]");
    c.near(sft_loss(TokenLogProbs({std::log(0.5), std::log(0.25)})), 1.0397207708399179, 1e-12,
           "[ln 0.5, ln 0.25]");
    return c.out;
}

Outcome cli_smoke() {
    Checker c;
    const std::vector<std::string> commands = {
        "validate " + kFx + "traces_valid.jsonl",
        "score " + kFx + "rollouts.jsonl",
        "grpo-eval --check-gradients " + kFx + "rollouts_random.jsonl",
        "eval --grounding " + kFx + "grounding.jsonl --captions " + kFx + "captions.jsonl",
        "--config " + kFx + "config_synth.json synthesize " + kFx + "sources.jsonl --mock " + kFx +
            "mock_script.json",
    };
    for (const auto& cmd : commands) {
        const auto r = proc::run(kCli + " " + cmd);
        c.expect(r.code == 0 && !r.out.empty(), "'" + cmd + "' exited " + std::to_string(r.code));
    }
    const auto start = Clock::now();
    const auto unit = proc::run(std::string(VTRACE_UNIT_TESTS_PATH) + " --gtest_brief=1");
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    c.expect(unit.code == 0, "unit tests failed");
    c.expect(secs < 60.0, "unit tests took " + std::to_string(secs) + " s");
    if (c.out.ok) c.out.detail = "unit suite " + std::to_string(secs) + " s";
    return c.out;
}

struct Criterion {
    int number;
    const char* name;
    double limit_seconds;  // 0: no runtime bound
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "trace round trip and lenient fuzz", 5, trace_round_trip},
        {2, "advantage normalization", 1, advantage_normalization},
        {3, "GRPO gradient check", 10, gradient_check},
        {4, "GRPO degenerate identities", 0, degenerate_identities},
        {5, "KL estimator", 0, kl_estimator},
        {6, "exhaustive LCS sweep", 30, lcs_exhaustive},
        {7, "grounding metrics", 0, grounding_metrics},
        {8, "caption metric examples", 0, caption_examples},
        {9, "curation retry bound and frame filter", 0, retry_bound},
        {10, "synthesize determinism", 0, determinism},
        {11, "SFT loss values", 0, sft_values},
        {12, "CLI smoke and suite runtime", 60, cli_smoke},
    };
    int failures = 0;
    const auto suite_start = Clock::now();
    for (const auto& cr : criteria) {
        const auto start = Clock::now();
        Outcome out;
        try {
            out = cr.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(Clock::now() - start).count();
        if (cr.limit_seconds > 0 && secs >= cr.limit_seconds) {
            out.ok = false;
            out.detail = "took " + std::to_string(secs) + " s, limit " + std::to_string(cr.limit_seconds) + " s";
        }
        if (!out.ok) ++failures;
        std::printf("%s  %2d  %-40s %8.3f s%s%s\n", out.ok ? "PASS" : "FAIL", cr.number, cr.name, secs,
                    out.detail.empty() ? "" : "  ", out.detail.c_str());
        std::fflush(stdout);
    }
    const double total = std::chrono::duration<double>(Clock::now() - suite_start).count();
    std::printf("%d/%zu criteria passed in %.3f s\n", static_cast<int>(criteria.size()) - failures, criteria.size(),
                total);
    return failures == 0 ? 0 : 1;
}
