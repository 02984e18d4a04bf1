#!/usr/bin/env python3
"""Write mini_train.jsonl and its manifests.

The manifests are computed here, independently of the Rust code, and the
Rust test suite compares its own reports against them byte for byte.
Run from the repository root: python3 fixtures/make_fixture.py
"""

import json
import random
from fractions import Fraction
from pathlib import Path

OUT = Path(__file__).resolve().parent

EMOTIONS = ["anger", "sadness", "disgust", "depression", "neutral", "joy", "fear"]
STRATEGIES = [
    "open_questions", "approval", "self_disclosure", "restatement", "interpretation",
    "advisement", "communication_skills", "structuring_the_therapy", "guiding_the_pace", "others",
]

CLIENT_LINES = [
    "I keep waking up at night thinking about the accident",
    "My boss yelled at me again in front of everyone",
    "I do not know why I feel so empty lately",
    "She left and took the dog with her",
    "Every time the phone rings my chest gets tight",
    "I finally told my brother how I felt",
    "The smell of that place still makes me sick",
    "I got the job offer this morning",
    "Nobody at school talks to me anymore",
    "I dreamed about my father again last night",
    "I drank again after three weeks sober",
    "I snapped at my kids and I hate myself for it",
    "We had a good weekend for once",
    "I am scared the test results will be bad",
    "My mother never listened when I was little",
    "I think I am ready to talk about it",
    "He said I was being dramatic",
    "I cannot stop checking the locks",
    "It feels pointless to even get dressed",
    "My partner surprised me with flowers",
    "I still set two plates at dinner",
    "They promoted someone who started after me",
    "I feel like a stranger in my own family",
    "I went for a walk and it actually helped",
    "The nightmares are back",
    "I was so angry I punched the wall",
    "I am tired of pretending everything is fine",
    "My sister finally called me back",
    "I am afraid you will think I am weak",
    "I cannot remember the last time I laughed",
]

THERAPIST_LINES = {
    "open_questions": [
        "What goes through your mind when that happens",
        "How did that feel for you",
        "Can you tell me more about that night",
    ],
    "approval": [
        "That took real courage",
        "You handled that really well",
        "I am glad you shared that with me",
    ],
    "self_disclosure": [
        "I have felt that kind of loss too",
        "When I was younger I struggled with that as well",
    ],
    "restatement": [
        "So you feel invisible at work",
        "It sounds like the nights are the hardest part",
        "You are saying nobody noticed",
    ],
    "interpretation": [
        "Perhaps the anger is protecting a deeper hurt",
        "It may be that you learned to stay quiet as a child",
    ],
    "advisement": [
        "Try writing the thoughts down before bed",
        "It might help to plan one small thing each day",
    ],
    "communication_skills": [
        "Mm I see go on",
        "Right I am listening",
    ],
    "structuring_the_therapy": [
        "Let us spend today on what happened last week",
        "Today I would like to focus on your sleep",
    ],
    "guiding_the_pace": [
        "Take your time there is no rush",
        "We can slow down here if you need",
    ],
    "others": [
        "Good morning come on in",
        "Thank you for coming today",
    ],
}

SCENARIOS = [
    "ptsd", "work_stress", "low_mood", "romantic_relationships", "anxiety",
    "family_relationships", "grief_and_loss", "addiction", "anger_management",
    "childhood_shadow", "social_isolation", "dream_analysis",
]

# Speaker patterns: c = client, t = therapist.
PATTERNS = [
    "ctctct", "ctctctct", "tctctc", "ctct", "ctcttc", "ctctct",
    "ctctctct", "ctctc", "tctct", "ctctct", "ctctct", "ctcctct",
]


def build():
    rng = random.Random(20240517)
    client_pool = CLIENT_LINES[:]
    rng.shuffle(client_pool)
    dialogues = []
    ci = 0
    turn_no = 0
    for d, pattern in enumerate(PATTERNS):
        did = f"mini_{d + 1:02d}"
        turns = []
        t0 = 0.0
        for i, sp in enumerate(pattern, start=1):
            turn_no += 1
            if sp == "c":
                utt = client_pool[ci % len(client_pool)]
                ci += 1
                emo = EMOTIONS[rng.randrange(len(EMOTIONS))]
                turn = {"index": i, "speaker": "client", "utterance": utt, "emotion": emo}
                clips = [{"media_id": f"{did}_v", "start_s": t0, "end_s": t0 + 4.5, "kind": "video"}]
                if i % 3 == 0:
                    clips.append({"media_id": f"{did}_a", "start_s": t0, "end_s": t0 + 4.5, "kind": "audio"})
                turn["clips"] = clips
            else:
                strat = STRATEGIES[rng.randrange(len(STRATEGIES))]
                utt = rng.choice(THERAPIST_LINES[strat])
                emo = rng.choice(["neutral", "neutral", "joy", "sadness"])
                turn = {"index": i, "speaker": "therapist", "utterance": utt, "emotion": emo,
                        "strategy": strat, "clips": []}
            t0 += 6.0
            turn["raw_annotations"] = annotations(turn, turn_no, rng)
            if turn["raw_annotations"] is None:
                del turn["raw_annotations"]
            turns.append(turn)
        dialogues.append({"id": did, "scenario": SCENARIOS[d], "turns": turns})
    return dialogues


def annotations(turn, turn_no, rng):
    """Two first-pass annotators; some disagreement, one unannotated turn
    and one turn with a third annotator."""
    if turn_no == 4:
        return None
    ann = {}
    names = ["a1", "a2", "a3"] if turn_no == 11 else ["a1", "a2"]
    for k, name in enumerate(names):
        emo = turn["emotion"]
        if k == 1 and turn_no % 4 == 0:
            emo = EMOTIONS[(EMOTIONS.index(emo) + 1) % len(EMOTIONS)]
        rec = {"emotion": emo}
        if turn["speaker"] == "therapist":
            strat = turn["strategy"]
            if k == 1 and turn_no % 3 == 0:
                strat = STRATEGIES[(STRATEGIES.index(strat) + 2) % len(STRATEGIES)]
            rec["strategy"] = strat
        ann[name] = rec
    return ann


def half_up_one_decimal(fr):
    tenths = (20 * fr.numerator + fr.denominator) // (2 * fr.denominator)
    return tenths / 10


def stats(dialogues):
    n_utt = {"total": 0, "therapist": 0, "client": 0}
    n_tok = {"total": 0, "therapist": 0, "client": 0}
    emo = {e: 0 for e in EMOTIONS}
    strat = {s: 0 for s in STRATEGIES}
    scen = {}
    for d in dialogues:
        scen[d["scenario"]] = scen.get(d["scenario"], 0) + 1
        for t in d["turns"]:
            toks = len(t["utterance"].split())
            for role in ("total", t["speaker"]):
                n_utt[role] += 1
                n_tok[role] += toks
            emo[t["emotion"]] += 1
            if "strategy" in t:
                strat[t["strategy"]] += 1
    nd = len(dialogues)
    ratio = lambda a, b: Fraction(a, b) if b else Fraction(0)
    return {
        "n_dialogues": nd,
        "n_utterances": n_utt,
        "avg_dialogue_len": {k: half_up_one_decimal(ratio(v, nd)) for k, v in n_utt.items()},
        "avg_utterance_len": {k: half_up_one_decimal(ratio(n_tok[k], n_utt[k])) for k in n_utt},
        "emotion_histogram": emo,
        "strategy_histogram": strat,
        "scenario_histogram": scen,
    }


def phase(dialogues, buckets=4):
    counts = {s: [0] * buckets for s in STRATEGIES}
    for d in dialogues:
        n = len(d["turns"])
        for t in d["turns"]:
            if "strategy" in t:
                # smallest b with k/n <= b/buckets
                b = next(b for b in range(1, buckets + 1) if Fraction(t["index"], n) <= Fraction(b, buckets))
                counts[t["strategy"]][b - 1] += 1
    return {"n_buckets": buckets, "strategies": counts}


def fleiss(rows, n):
    items = len(rows)
    p_bar = sum(Fraction(sum(c * (c - 1) for c in r), n * (n - 1)) for r in rows) / items
    k = len(rows[0])
    p_e = sum(Fraction(sum(r[j] for r in rows), items * n) ** 2 for j in range(k))
    if p_bar == 1:
        return 1.0
    return float((p_bar - p_e) / (1 - p_e))


def kappa(dialogues):
    turns = [t for d in dialogues for t in d["turns"]]
    annotated = [t for t in turns if len(t.get("raw_annotations") or {}) >= 2]
    n = len(annotated[0]["raw_annotations"])
    usable = [t for t in annotated if len(t["raw_annotations"]) == n]

    def row(labels, vocab):
        return [sum(1 for l in labels if l == v) for v in vocab]

    emo_rows = [row([a["emotion"] for a in t["raw_annotations"].values()], EMOTIONS) for t in usable]
    therapist = [t for t in turns if t["speaker"] == "therapist"]
    strat_rows = [
        row([a["strategy"] for a in t["raw_annotations"].values()], STRATEGIES)
        for t in usable
        if t["speaker"] == "therapist" and all("strategy" in a for a in t["raw_annotations"].values())
    ]

    def rep(rows, excluded):
        return {"kappa": float(f"{fleiss(rows, n):.6f}"), "n_items": len(rows),
                "n_excluded": excluded, "n_raters": n}

    return {
        "emotion": rep(emo_rows, len(turns) - len(emo_rows)),
        "strategy": rep(strat_rows, len(therapist) - len(strat_rows)) if len(strat_rows) >= 2 else None,
    }


def canonical(obj):
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def main():
    dialogues = build()
    with open(OUT / "mini_train.jsonl", "w", encoding="utf-8") as f:
        f.write("#mesc-schema:1\n#split:train\n")
        for d in dialogues:
            f.write(json.dumps(d, separators=(",", ":"), ensure_ascii=False) + "\n")
    (OUT / "mini_train.stats.json").write_text(canonical(stats(dialogues)), encoding="utf-8")
    (OUT / "mini_train.phase.json").write_text(canonical(phase(dialogues)), encoding="utf-8")
    (OUT / "mini_train.kappa.json").write_text(canonical(kappa(dialogues)), encoding="utf-8")


if __name__ == "__main__":
    main()
