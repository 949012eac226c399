#include <gtest/gtest.h>

#include <string_view>

#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "vtrace/metrics.hpp"

using namespace vtrace;

namespace {

GroundingInstance inst(std::vector<TimeSpan> preds, std::vector<TimeSpan> gts) {
    return {"i", std::move(preds), std::move(gts)};
}

TokenSequence toks(std::string_view s) { return tokenize(s); }

std::vector<std::string> words(const std::vector<int>& s) {
    std::vector<std::string> out;
    for (int x : s) out.push_back(std::string(1, static_cast<char>('a' + x)));
    return out;
}

}  // namespace

TEST(IntervalIou, Examples) {
    EXPECT_EQ(interval_iou({0, 10}, {0, 10}), 1.0);
    EXPECT_EQ(interval_iou({0, 10}, {20, 30}), 0.0);
    EXPECT_NEAR(interval_iou({0, 10}, {5, 15}), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(interval_iou({3, 3}, {3, 3}), 1.0);
    EXPECT_EQ(interval_iou({3, 3}, {4, 4}), 0.0);
    EXPECT_EQ(interval_iou({3, 3}, {0, 10}), 0.0);
    EXPECT_EQ(interval_iou({0, 5}, {5, 10}), 0.0);
}

TEST(IntervalIouProperty, MatchesRationalOracleAndIsSymmetric) {
    gen::Rng rng(10);
    for (int n = 0; n < 3000; ++n) {
        std::int64_t a0 = gen::integer(rng, 0, 5000), a1 = gen::integer(rng, 0, 5000);
        std::int64_t b0 = gen::integer(rng, 0, 5000), b1 = gen::integer(rng, 0, 5000);
        if (a1 < a0) std::swap(a0, a1);
        if (b1 < b0) std::swap(b0, b1);
        const TimeSpan a{a0 / 100.0, a1 / 100.0}, b{b0 / 100.0, b1 / 100.0};
        const double got = interval_iou(a, b);
        EXPECT_NEAR(got, static_cast<double>(oracle::iou_exact(a0, a1, b0, b1).value()), 1e-12);
        EXPECT_EQ(got, interval_iou(b, a));
        EXPECT_GE(got, 0.0);
        EXPECT_LE(got, 1.0);
    }
}

TEST(Miou, Examples) {
    const std::vector<GroundingInstance> perfect{inst({{0, 10}}, {{0, 10}}), inst({{1, 2}, {5, 9}}, {{5, 9}, {1, 2}})};
    EXPECT_EQ(miou(perfect), 1.0);
    const std::vector<GroundingInstance> none{inst({}, {{0, 10}}), inst({}, {{1, 2}, {3, 4}})};
    EXPECT_EQ(miou(none), 0.0);
    const std::vector<GroundingInstance> best{inst({{5, 15}, {0, 10}}, {{0, 10}})};
    EXPECT_EQ(miou(best), 1.0);
    // averaged over ground-truth spans, not instances
    const std::vector<GroundingInstance> mixed{inst({{0, 10}}, {{0, 10}}), inst({}, {{0, 1}, {2, 3}})};
    EXPECT_NEAR(miou(mixed), 1.0 / 3.0, 1e-15);
}

TEST(Miou, Errors) {
    EXPECT_THROW(miou(std::vector<GroundingInstance>{}), EmptyCorpus);
    EXPECT_THROW(miou(std::vector<GroundingInstance>{inst({{0, 1}}, {})}), EmptyCorpus);
}

TEST(RecallAtK, Examples) {
    const std::vector<GroundingInstance> c{inst({{5, 15}}, {{0, 10}})};
    EXPECT_EQ(recall_at_k(c, 0.3), 1.0);
    EXPECT_EQ(recall_at_k(c, 0.5), 0.0);
    EXPECT_THROW(recall_at_k(c, 0.0), InvalidThreshold);
    EXPECT_THROW(recall_at_k(c, 1.5), InvalidThreshold);
    EXPECT_EQ(recall_at_k(std::vector<GroundingInstance>{inst({{2, 4}}, {{2, 4}})}, 1.0), 1.0);
}

TEST(RecallAtKProperty, MonotoneInThreshold) {
    gen::Rng rng(44);
    for (int n = 0; n < 100; ++n) {
        std::vector<GroundingInstance> corpus;
        const int size = gen::integer(rng, 1, 6);
        for (int i = 0; i < size; ++i) {
            GroundingInstance g;
            for (int k = gen::integer(rng, 0, 3); k > 0; --k) g.predictions.push_back(gen::span(rng));
            for (int k = gen::integer(rng, 1, 3); k > 0; --k) g.ground_truths.push_back(gen::span(rng));
            corpus.push_back(std::move(g));
        }
        double prev = 2.0;
        for (int k = 1; k <= 9; ++k) {
            const double r = recall_at_k(corpus, k / 10.0);
            EXPECT_LE(r, prev);
            prev = r;
        }
    }
}

TEST(Tokenize, Rules) {
    EXPECT_EQ(tokenize("The cat, sat."), (TokenSequence{"the", "cat", "sat"}));
    EXPECT_EQ(tokenize(""), TokenSequence{});
    EXPECT_EQ(tokenize("a  b"), (TokenSequence{"a", "b"}));
    EXPECT_EQ(tokenize("\"Hello!\" -- it's (fine)"), (TokenSequence{"hello", "it's", "fine"}));
}

TEST(Bleu1, Examples) {
    EXPECT_EQ(bleu1(toks("the cat sat"), toks("the cat sat")), 1.0);
    EXPECT_EQ(bleu1(toks("dog runs"), toks("the cat sat")), 0.0);
    EXPECT_NEAR(bleu1(toks("the the cat"), toks("the cat sat")), 2.0 / 3.0, 1e-9);
    // brevity: one word against a three-word reference
    EXPECT_NEAR(bleu1(toks("cat"), toks("the cat sat")), std::exp(1.0 - 3.0), 1e-12);
    EXPECT_THROW(bleu1(TokenSequence{}, toks("a")), EmptyCandidate);
}

TEST(Bleu1, ClosestReferenceLengthForPenalty) {
    const std::vector<TokenSequence> refs{toks("a b c d e f"), toks("a b")};
    EXPECT_NEAR(bleu1(toks("a b"), refs), 1.0, 1e-15);
}

TEST(Bleu1Property, MatchesWordCountingOracle) {
    gen::Rng rng(6);
    for (int n = 0; n < 500; ++n) {
        std::vector<int> c, r;
        for (int k = gen::integer(rng, 1, 8); k > 0; --k) c.push_back(gen::integer(rng, 0, 3));
        for (int k = gen::integer(rng, 1, 8); k > 0; --k) r.push_back(gen::integer(rng, 0, 3));
        EXPECT_NEAR(bleu1(words(c), words(r)), oracle::bleu1_single(words(c), words(r)), 1e-12);
    }
}

TEST(RougeL, Examples) {
    EXPECT_EQ(rouge_l(toks("a b c"), toks("a b c")), 1.0);
    EXPECT_EQ(rouge_l(toks("a b"), toks("c d")), 0.0);
    EXPECT_NEAR(rouge_l(toks("a b c d"), toks("a c d")), 2.44 * 0.75 / (1.0 + 1.44 * 0.75), 1e-12);
    EXPECT_NEAR(rouge_l(toks("a b c d"), toks("a c d")), 0.87980769230769229, 1e-12);
    EXPECT_THROW(rouge_l(TokenSequence{}, toks("a")), EmptySequence);
}

TEST(LcsProperty, ExhaustiveShortSequences) {
    // every pair of sequences up to length 5 over {a, b, c}
    std::vector<std::vector<int>> all{{}};
    for (std::size_t start = 0; start < all.size(); ++start) {
        if (all[start].size() == 5) continue;
        for (int x = 0; x < 3; ++x) {
            auto s = all[start];
            s.push_back(x);
            all.push_back(std::move(s));
        }
    }
    ASSERT_EQ(all.size(), 364u);
    for (const auto& a : all) {
        const auto wa = words(a);
        for (const auto& b : all) {
            ASSERT_EQ(lcs_length(wa, words(b)), oracle::lcs_bruteforce(a, b, 3));
        }
    }
}

TEST(Meteor, Examples) {
    EXPECT_NEAR(meteor(toks("the cat sat"), toks("the cat ran")), 0.625, 1e-9);
    EXPECT_EQ(meteor(toks("a b"), toks("c d")), 0.0);
    EXPECT_NEAR(meteor(toks("a"), toks("a")), 0.5, 1e-15);
    EXPECT_NEAR(meteor(toks("a b c d"), toks("a b c d")), 1.0 - 0.5 / 64.0, 1e-15);
    EXPECT_THROW(meteor(toks("a"), TokenSequence{}), EmptySequence);
}

TEST(Meteor, FewestChunksAmongMaximalAlignments) {
    // greedy left-to-right pairs the first "a" with ref[0] and ends with two chunks
    const auto al = meteor_align(toks("a b a c"), toks("a x a b a c"));
    EXPECT_EQ(al.matches, 4u);
    EXPECT_EQ(al.chunks, 1u);
    EXPECT_TRUE(al.exact);
}

TEST(MeteorProperty, MatchesExhaustiveAlignment) {
    gen::Rng rng(19);
    for (int n = 0; n < 400; ++n) {
        std::vector<int> c, r;
        for (int k = gen::integer(rng, 1, 6); k > 0; --k) c.push_back(gen::integer(rng, 0, 2));
        for (int k = gen::integer(rng, 1, 6); k > 0; --k) r.push_back(gen::integer(rng, 0, 2));
        const auto wc = words(c), wr = words(r);
        const auto want = oracle::meteor_bruteforce(wc, wr);
        const auto got = meteor_align(wc, wr);
        ASSERT_EQ(got.matches, want.matches);
        ASSERT_EQ(got.chunks, want.chunks);
        EXPECT_NEAR(meteor(wc, wr), oracle::meteor_formula(want.matches, want.chunks, wc.size(), wr.size()), 1e-12);
    }
}

TEST(Meteor, FallsBackToGreedyWhenBudgetIsExhausted) {
    MeteorParams p;
    p.exact_state_budget = 1;
    const auto al = meteor_align(toks("a b a b a b"), toks("b a b a b a"), p);
    EXPECT_FALSE(al.exact);
    EXPECT_EQ(al.matches, 6u);
    EXPECT_GE(al.chunks, 1u);
}

TEST(CaptionMetricsProperty, RelabelingInvariance) {
    gen::Rng rng(2);
    const std::vector<std::string> alpha{"x", "y", "z"};
    for (int n = 0; n < 200; ++n) {
        std::vector<int> c, r;
        for (int k = gen::integer(rng, 1, 7); k > 0; --k) c.push_back(gen::integer(rng, 0, 2));
        for (int k = gen::integer(rng, 1, 7); k > 0; --k) r.push_back(gen::integer(rng, 0, 2));
        auto relabel = [&](const std::vector<int>& s) {
            TokenSequence out;
            for (int x : s) out.push_back(alpha[static_cast<std::size_t>((x + 1) % 3)]);
            return out;
        };
        EXPECT_EQ(bleu1(words(c), words(r)), bleu1(relabel(c), relabel(r)));
        EXPECT_EQ(rouge_l(words(c), words(r)), rouge_l(relabel(c), relabel(r)));
        EXPECT_EQ(meteor(words(c), words(r)), meteor(relabel(c), relabel(r)));
        for (double s : {bleu1(words(c), words(r)), rouge_l(words(c), words(r)), meteor(words(c), words(r))}) {
            EXPECT_GE(s, 0.0);
            EXPECT_LE(s, 1.0);
        }
    }
}

TEST(EvaluateCorpus, WorkedExamples) {
    const std::vector<CaptionPair> caps{{"a", "the the cat", "the cat sat"},
                                        {"b", "a b c d", "a c d"},
                                        {"c", "the cat sat", "the cat ran"}};
    const std::vector<GroundingInstance> grounding{inst({{5, 15}}, {{0, 10}})};
    const auto rep = evaluate_corpus(grounding, caps);
    ASSERT_TRUE(rep.grounding && rep.captioning);
    EXPECT_NEAR(rep.grounding->miou, 1.0 / 3.0, 1e-15);
    EXPECT_EQ(rep.grounding->recall_03, 1.0);
    EXPECT_EQ(rep.grounding->recall_05, 0.0);
    EXPECT_NEAR(score_caption(caps[0]).bleu1, 2.0 / 3.0, 1e-9);
    EXPECT_NEAR(score_caption(caps[1]).rouge_l, 0.87980769230769229, 1e-9);
    EXPECT_NEAR(score_caption(caps[2]).meteor, 0.625, 1e-9);
    const double mean_bleu = (score_caption(caps[0]).bleu1 + score_caption(caps[1]).bleu1 + score_caption(caps[2]).bleu1) / 3;
    EXPECT_NEAR(rep.captioning->bleu1, mean_bleu, 1e-15);
    EXPECT_EQ(rep.n_instances, 4u);
}

TEST(EvaluateCorpus, FamiliesAreOptionalButNotBoth) {
    const std::vector<CaptionPair> caps{{"a", "x", "x"}};
    const auto rep = evaluate_corpus({}, caps);
    EXPECT_FALSE(rep.grounding);
    ASSERT_TRUE(rep.captioning);
    EXPECT_EQ(rep.captioning->bleu1, 1.0);
    EXPECT_THROW(evaluate_corpus({}, {}), EmptyCorpus);
}

TEST(ScoreCaption, EmptyCandidateScoresZero) {
    const auto s = score_caption({"e", "", "a reference"});
    EXPECT_EQ(s.bleu1, 0.0);
    EXPECT_EQ(s.meteor, 0.0);
    EXPECT_EQ(s.rouge_l, 0.0);
    EXPECT_THROW(score_caption({"e", "x", " . "}), EmptySequence);
}
