#!/usr/bin/env python3
"""Regenerates the JSON fixtures in this directory. Output is deterministic."""

import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent


def trace(segments, answer, preamble=""):
    out = preamble + "\n" if preamble else ""
    for (s, e), cap, think in segments:
        out += f"<time>{s}-{e}</time>\n<caption>{cap}</caption>\n<think>{think}</think>\n"
    return out + f"<answer>{answer}</answer>"


def write_jsonl(name, rows):
    with open(HERE / name, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def write_json(name, obj):
    with open(HERE / name, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False)
        f.write("\n")


GOOD_B = trace([((0, 12), "A man stretches on the beach.", "He warms up first."),
                ((12, 40), "He runs into the water with a surfboard.", "So the answer is B.")], "B")
GOOD_C = trace([(("1:05", "1:30"), "A bowl of dough rests on the counter.", "Kneading is done.")], "C",
               preamble="Let me find the relevant part.")
WRONG_A = trace([((3.5, 9), "A dog sits by the door.", "Probably A.")], "A")


def traces():
    write_jsonl("traces_valid.jsonl", [{"text": GOOD_B}, {"text": GOOD_C}, {"text": WRONG_A}])
    write_jsonl("traces_mixed.jsonl", [
        {"text": GOOD_B},
        {"text": "<time>0-5</time><caption>unclosed caption<think>x</think><answer>A</answer>"},
        {"text": GOOD_C},
    ])


def lp(n, rng, lo=-3.0):
    return [round(rng.uniform(lo, -0.01), 6) for _ in range(n)]


def rollouts():
    rng = random.Random(11)
    # rewards [2, 2, 0, 0]: two correct well-formed traces, two empty ones
    a = lp(3, rng)
    b = lp(4, rng)
    group = {"question_id": "q-symmetric", "ground_truth": "B", "traces": [
        {"text": GOOD_B, "cur": a, "old": a, "ref": a},
        {"text": GOOD_B, "cur": b, "old": b, "ref": b},
        {"text": "", "cur": [-0.5], "old": [-0.5], "ref": [-0.5]},
        {"text": "", "cur": [-1.25, -0.75], "old": [-1.25, -0.75], "ref": [-1.25, -0.75]},
    ]}
    same = {"question_id": "q-identical", "ground_truth": "C", "traces": [
        {"text": GOOD_C, "cur": [-0.2, -0.4], "old": [-0.3, -0.4], "ref": [-0.1, -0.6]},
        {"text": GOOD_C, "cur": [-0.7], "old": [-0.7], "ref": [-0.9]},
        {"text": GOOD_C, "cur": [-1.0, -2.0], "old": [-1.0, -2.0], "ref": [-1.5, -2.0]},
    ]}
    write_jsonl("rollouts.jsonl", [group, same])

    # cur = old = ref with rewards [2, 1] -> advantages [1, -1]
    write_jsonl("rollouts_identity.jsonl", [{"question_id": 7, "ground_truth": "B", "traces": [
        {"text": GOOD_B, "cur": [-0.3, -1.1], "old": [-0.3, -1.1], "ref": [-0.3, -1.1]},
        {"text": WRONG_A, "cur": [-0.8], "old": [-0.8], "ref": [-0.8]},
    ]}])

    # single-token ratios [1.5, 1.0], advantages [1, -1] (needs std_epsilon 0, beta 0)
    old0 = -1.0
    write_jsonl("rollouts_clip.jsonl", [{"question_id": "clip", "ground_truth": "B", "traces": [
        {"text": GOOD_B, "cur": [old0 + math.log(1.5)], "old": [old0], "ref": [old0 + math.log(1.5)]},
        {"text": WRONG_A, "cur": [-0.4], "old": [-0.4], "ref": [-0.4]},
    ]}])
    write_json("config_clip.json", {"grpo": {"epsilon": 0.2, "beta": 0.0},
                                    "rewards": {"std_epsilon": 0.0}})

    write_jsonl("rollouts_size1.jsonl", [{"question_id": "lonely", "ground_truth": "A",
                                         "traces": [{"text": WRONG_A}]}])

    texts = [GOOD_B, GOOD_C, WRONG_A, "", "<answer>B</answer>", "<time>0-4</time><answer>C</answer>"]
    rows = []
    for g in range(12):
        size = rng.randint(2, 8)
        tr = []
        for _ in range(size):
            n = rng.randint(1, 16)
            old = lp(n, rng)
            # ratios spread over [0.6, 1.5] so both clip sides occur
            cur = [min(-1e-3, o + math.log(rng.uniform(0.6, 1.5))) for o in old]
            ref = [min(-1e-3, c + rng.uniform(-0.5, 0.5)) for c in cur]
            tr.append({"text": rng.choice(texts), "cur": [round(x, 6) for x in cur], "old": old,
                       "ref": [round(x, 6) for x in ref]})
        rows.append({"question_id": f"r{g:02d}", "ground_truth": rng.choice("ABC"), "traces": tr})
    write_jsonl("rollouts_random.jsonl", rows)


def metrics():
    write_jsonl("grounding.jsonl", [
        {"id": "g-overlap", "predictions": [[5, 15]], "ground_truths": [[0, 10]]},
        {"id": "g-best-of", "predictions": [[5, 15], [0, 10]], "ground_truths": [[0, 10]]},
        {"id": "g-disjoint", "predictions": [[20, 30]], "ground_truths": [[0, 10]]},
        {"id": "g-none", "predictions": [], "ground_truths": [[40, 50], [60, 61]]},
    ])
    write_jsonl("grounding_perfect.jsonl", [
        {"id": "p1", "predictions": [[0, 10]], "ground_truths": [[0, 10]]},
        {"id": "p2", "predictions": [[3.5, 7.25], [12, 20]], "ground_truths": [[12, 20], [3.5, 7.25]]},
    ])
    write_jsonl("captions.jsonl", [
        {"id": "c-bleu-clip", "candidate": "the the cat", "reference": "the cat sat"},
        {"id": "c-rouge", "candidate": "a b c d", "reference": "a c d"},
        {"id": "c-meteor", "candidate": "the cat sat", "reference": "the cat ran"},
    ])


def pipeline():
    def video(vid, frames, duration, source, corrupted=False):
        return {"video_id": vid, "frame_count": frames, "duration": duration,
                "source_dataset": source, "corrupted": corrupted}

    sources = [
        {"video": video("anet_001", 1800, 60, "ActivityNet"), "kind": "caption_labeled",
         "segments": [{"span": [0, 12], "caption": "A man stretches his arms on a sandy beach."},
                      {"span": [12, 40], "caption": "The man paddles out on a yellow surfboard."}],
         "context": {"background": "A man goes surfing at a beach."}},
        {"video": video("anet_002", 64, 30, "ActivityNet"), "kind": "caption_labeled",
         "segments": [{"span": [2, 10], "caption": "A girl ties her skates in a park."},
                      {"span": [10, 28], "caption": "The girl skates in circles around a cone."}],
         "context": {"background": "A girl roller skates."}},
        {"video": video("anet_003", 63, 30, "ActivityNet"), "kind": "caption_labeled",
         "segments": [{"span": [0, 5], "caption": "A short clip of a kite."}]},
        {"video": video("anet_004", 900, 45, "ActivityNet", corrupted=True), "kind": "caption_labeled",
         "segments": [{"span": [0, 5], "caption": "Static noise."}]},
        {"video": video("yc2_001", 2400, 95, "YouCook2"), "kind": "caption_labeled",
         "segments": [{"span": [5, 30], "caption": "crack two eggs into a bowl"},
                      {"span": [30, 62], "caption": "whisk the eggs with milk"},
                      {"span": [62, 90], "caption": "pour the mixture into a hot pan"}]},
        {"video": video("tvqa_001", 3000, 120, "TutorialVQA"), "kind": "caption_labeled",
         "segments": [{"span": [10, 50], "caption": "open the layers panel"},
                      {"span": [50, 110], "caption": "add a mask to the top layer"}],
         "context": {"title": "Masking layers", "transcript": "first open layers then add a mask"}},
        {"video": video("star_001", 600, 20, "STAR"), "kind": "qa_labeled",
         "question": "Which object did the person take after opening the fridge?",
         "options": ["The cup.", "The bottle.", "The bag.", "The book."], "answer": "B",
         "segments": [{"span": [4, 9]}, {"span": [9, 15]}]},
        {"video": video("star_002", 640, 22, "STAR"), "kind": "qa_labeled",
         "question": "What did the person put down before sitting on the sofa?",
         "options": ["The laptop.", "The towel.", "The phone.", "The box."], "answer": "C",
         "segments": [{"span": [1, 8]}]},
        {"video": video("star_003", 700, 25, "STAR"), "kind": "qa_labeled",
         "question": "Which door did the person close at the end?",
         "options": ["The closet door.", "The front door.", "The car door.", "The oven door."],
         "answer": "D", "segments": [{"span": [18, 24]}]},
    ]
    write_jsonl("sources.jsonl", sources)

    def qa_reply(q, opts, ans):
        return "```json\n" + json.dumps({"question": q, "options": opts, "answer": ans}) + "\n```"

    generated = {
        "anet_001": ("What does the man do after stretching on the beach?",
                     ["He swims.", "He paddles out on a surfboard.", "He sleeps.", "He eats."], "B",
                     [((0, 12), "A man stretches on the sand."), ((12, 40), "He paddles out on a surfboard.")]),
        "anet_002": ("What does the girl do after tying her skates?",
                     ["She skates around a cone.", "She runs.", "She sits.", "She leaves."], "A",
                     [((10, 28), "The girl skates around an orange cone.")]),
        "yc2_001": ("What is done right after whisking the eggs with milk?",
                    ["Crack eggs.", "Add salt.", "Pour the mixture into a pan.", "Serve.", "Chop onions."], "C",
                    [((30, 62), "Eggs and milk are whisked."), ((62, 90), "The mixture is poured into a pan.")]),
        "tvqa_001": ("What is added to the top layer?",
                     ["A filter.", "A mask.", "A border.", "A shadow."], "B",
                     [((50, 110), "A mask is added to the top layer.")]),
    }
    contains_keys = {"anet_001": "yellow surfboard", "anet_002": "ties her skates",
                     "yc2_001": "whisk the eggs with milk", "tvqa_001": "open the layers panel"}
    letters = "ABCDEF"
    rules = []
    for vid, (q, opts, ans, segs) in generated.items():
        rules.append({"role": "question_generator", "contains": contains_keys[vid],
                      "replies": [qa_reply(q, opts, ans)]})
        rules.append({"role": "trace_synthesizer", "contains": q,
                      "replies": [trace([(s, c, "This segment answers it.") for s, c in segs], ans)]})
        rules.append({"role": "verifier", "contains": q, "replies": [ans]})

    rules += [
        {"role": "caption_generator", "contains": "Video: star_001\nSegment: 4-9s",
         "replies": ["The person opens the fridge door."]},
        {"role": "caption_generator", "contains": "Video: star_001\nSegment: 9-15s",
         "replies": ["The person takes a bottle out of the fridge."]},
        {"role": "caption_generator", "contains": "Video: star_002",
         "replies": ["The person puts a phone on the table and sits on the sofa."]},
        {"role": "caption_generator", "contains": "Video: star_003",
         "replies": ["The person closes the oven door."]},
        {"role": "trace_synthesizer", "contains": "after opening the fridge",
         "replies": [trace([((4, 9), "The fridge is opened.", "Look at what comes next."),
                            ((9, 15), "A bottle is taken out.", "The bottle.")], "B")]},
        # first candidate is malformed and spends an attempt
        {"role": "trace_synthesizer", "contains": "before sitting on the sofa",
         "replies": ["<time>1-8</time><caption>unclosed",
                     trace([((1, 8), "A phone is put on the table.", "The phone.")], "C")]},
        {"role": "trace_synthesizer", "contains": "close at the end",
         "replies": [trace([((18, 24), "A door is closed.", "The oven door.")], "D")]},
        {"role": "verifier", "contains": "after opening the fridge", "replies": ["<answer>B</answer>"]},
        {"role": "verifier", "contains": "before sitting on the sofa", "replies": ["A", "C"]},
        {"role": "verifier", "contains": "close at the end", "replies": ["A"]},
    ]
    write_json("mock_script.json", {
        "clients": {"question_generator": "mock-qa-gen", "caption_generator": "mock-captioner",
                    "trace_synthesizer": "mock-synth", "verifier": "mock-verifier"},
        "rules": rules})

    # verifier wrong, wrong, right on a single clean sample
    retry_rules = [r for r in rules if r["role"] != "verifier"]
    for vid, (q, _, ans, _) in generated.items():
        wrong = [l for l in letters[:4] if l != ans]
        retry_rules.append({"role": "verifier", "contains": q, "replies": [wrong[0], wrong[1], ans]})
    retry_rules += [
        {"role": "verifier", "contains": "after opening the fridge", "replies": ["A", "C", "B"]},
        {"role": "verifier", "contains": "before sitting on the sofa", "replies": ["A", "C"]},
        {"role": "verifier", "contains": "close at the end", "replies": ["A"]},
    ]
    write_json("mock_script_retry.json", {"rules": retry_rules})

    write_json("config_synth.json", {
        "pipeline": {"quotas": {"ActivityNet": 2, "YouCook2": 1, "TutorialVQA": 1, "STAR": 2},
                     "worker_count": 2, "transport_retries": 2, "backoff_ms": 0}})
    write_json("config_live.json", {
        "pipeline": {"quotas": {"STAR": 1}, "clients": {
            role: {"id": f"{role}-endpoint", "url": "http://127.0.0.1:8080/v1/complete",
                   "api_key_env": "VTRACE_API_KEY", "timeout_seconds": 120, "max_tokens": 2048}
            for role in ["question_generator", "caption_generator", "trace_synthesizer", "verifier"]}}})


if __name__ == "__main__":
    traces()
    rollouts()
    metrics()
    pipeline()
