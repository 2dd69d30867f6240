#!/usr/bin/env python3
"""Brute-force reference values for the metric fixtures.

Written independently of the C++ code: plain loops over n-gram lists,
Fractions where the quantity is rational. Run it and paste the printed
constants into tests/unit/test_metrics.cpp (kOracle...). Output is also
written next to this file as metrics_oracle_output.json.
"""
import json
import math
import os
import re
from fractions import Fraction


def toks(s):
    return re.findall(r"[a-z0-9]+", s.lower())


def ngrams(p, n):
    return [tuple(p[i:i + n]) for i in range(len(p) - n + 1)]


def div_n(p, n):
    if not p:
        return Fraction(0)
    return Fraction(len(set(ngrams(p, n))), len(p))


def re_n(p, n=4):
    g = ngrams(p, n)
    if not g:
        return Fraction(0)
    rep = 0
    for x in set(g):
        rep += max(g.count(x) - 1, 0)
    return Fraction(rep, len(g))


def re4_per_activity(groups):
    # 4-grams pooled over the paragraphs of an activity; none span two videos
    vals = []
    for paras in groups:
        g = [x for p in paras for x in ngrams(p, 4)]
        if not any(paras):
            continue
        if not g:
            vals.append(Fraction(0))
            continue
        rep = sum(max(g.count(x) - 1, 0) for x in set(g))
        vals.append(Fraction(rep, len(g)))
    return sum(vals, Fraction(0)) / len(vals) if vals else Fraction(0)


def bleu4(c, refs):
    if not c:
        return 0.0
    logs = 0.0
    for n in range(1, 5):
        cg = ngrams(c, n)
        total = len(cg)
        clipped = 0
        for g in set(cg):
            best = max(ngrams(r, n).count(g) for r in refs)
            clipped += min(cg.count(g), best)
        p = clipped / total if clipped > 0 else 1e-9
        logs += math.log(p)
    clen = len(c)
    # closest reference length, shorter wins ties
    rlen = sorted((abs(len(r) - clen), len(r)) for r in refs)[0][1]
    bp = 1.0 if clen > rlen else math.exp(1 - rlen / clen)
    return bp * math.exp(logs / 4)


def cider_d(c, refs, all_ref_sets):
    N = len(all_ref_sets)
    df = {}
    for rs in all_ref_sets:
        seen = set()
        for r in rs:
            for n in range(1, 5):
                seen.update(ngrams(r, n))
        for g in seen:
            df[g] = df.get(g, 0) + 1

    def vec(p):
        out = []
        for n in range(1, 5):
            v = {}
            for g in set(ngrams(p, n)):
                v[g] = ngrams(p, n).count(g) * (math.log(N) - math.log(max(1, df.get(g, 0))))
            out.append(v)
        return out

    hv = vec(c)
    score = 0.0
    for r in refs:
        rv = vec(r)
        pen = math.exp(-((len(c) - len(r)) ** 2) / (2 * 36.0))
        s = 0.0
        for n in range(4):
            num = 0.0
            for g, w in hv[n].items():
                if g in rv[n]:
                    num += min(w, rv[n][g]) * rv[n][g]
            nh = math.sqrt(sum(w * w for w in hv[n].values()))
            nr = math.sqrt(sum(w * w for w in rv[n].values()))
            val = num / (nh * nr) if nh > 0 and nr > 0 else 0.0
            s += val * pen
        score += s / 4
    return score / len(refs) * 10


LEX = {
    "man": ("male", "single"), "men": ("male", "plural"),
    "woman": ("female", "single"), "women": ("female", "plural"),
    "girl": ("female", "single"), "girls": ("female", "plural"),
    "boy": ("male", "single"), "boys": ("male", "plural"),
    "guy": ("male", "single"), "guys": ("male", "plural"),
    "person": ("neutral", "single"), "people": ("neutral", "plural"),
    "lady": ("female", "single"), "ladies": ("female", "plural"),
    "child": ("neutral", "single"), "children": ("neutral", "plural"),
    "kid": ("neutral", "single"), "kids": ("neutral", "plural"),
    "he": ("male", "single"), "she": ("female", "single"), "they": ("neutral", "plural"),
}


def persons(p, mode):
    out = []
    for w in p:
        if w in LEX:
            out.append(w if mode == "exact" else LEX[w])
    return out


def person_f1(preds, refsets, mode):
    tp = npred = nref = 0
    for p, refs in zip(preds, refsets):
        pw = persons(p, mode)
        union = {}
        for r in refs:
            rw = persons(r, mode)
            for x in set(rw):
                union[x] = max(union.get(x, 0), rw.count(x))
        for x in set(pw):
            tp += min(pw.count(x), union.get(x, 0))
        npred += len(pw)
        nref += sum(union.values())
    if npred == 0 and nref == 0:
        return Fraction(1)
    if tp == 0:
        return Fraction(0)
    P = Fraction(tp, npred)
    R = Fraction(tp, nref)
    return 2 * P * R / (P + R)


# Two-video corpus fixture shared with the C++ test.
CORPUS = [
    {"id": "v0", "activity": 0,
     "refs0": ["a man throws a ball.", "he catches the ball in a large room."],
     "refs1": ["a guy is seen tossing a ball.", "he is seen grabbing the ball."],
     "pred": ["a man throws a ball.", "he throws a ball."]},
    {"id": "v1", "activity": 1,
     "refs0": ["two women paint a fence.", "they wash a bucket very slowly.", "they drop the brush."],
     "refs1": ["some ladies are seen coloring a fence.", "they are seen rinsing a bucket.",
               "they are seen releasing the brush."],
     "pred": ["a woman paints a fence.", "she paints a fence.", "she paints a fence."]},
]


def main():
    out = {}
    out["div1_a_man_is_seen_speaking"] = div_n(toks("a man is seen speaking"), 1)
    out["div1_aab"] = div_n(["a", "a", "b"], 1)
    out["div2_aab"] = div_n(["a", "a", "b"], 2)
    out["div1_same7"] = div_n(["x"] * 7, 1)
    out["re4_abcd3"] = re_n(list("abcdabcdabcd"), 4)
    out["re4_three"] = re_n(["a", "b", "c"], 4)
    sent = toks("a man is seen throwing a red ball")
    out["re4_act_generic"] = re4_per_activity([[sent] * 4])
    out["re4_act_two"] = (re_n(list("abcdabcdab"), 4) + re_n(list("abcdeabcde"), 4)) / 2
    out["re4_act_two_direct"] = re4_per_activity([[list("abcdabcdab")], [list("abcdeabcde")]])
    out["bleu_identical"] = bleu4(toks("a man throws a ball in a room"), [toks("a man throws a ball in a room")])
    tt = ngrams(["the", "the", "the"], 1)
    out["bleu_clipped_unigram"] = Fraction(min(tt.count(("the",)), 1), len(tt))
    out["bleu_the_the_the"] = bleu4(["the", "the", "the"], [["the", "cat"]])
    out["bleu_multi"] = bleu4(toks("a man is seen throwing a ball on the street"),
                              [toks("a man throws a ball on the street"),
                               toks("a guy is seen tossing the ball outside")])
    out["bleu_short"] = bleu4(toks("a man throws"), [toks("a man throws a ball"), toks("the man throws it far away")])
    out["bleu_no_overlap"] = bleu4(toks("dogs bark loudly today"), [toks("a man throws a ball")])
    s0 = toks("a man throws a ball")
    s1 = toks("two women paint the fence")
    out["cider_identical_disjoint"] = cider_d(s0, [s0], [[s0], [s1]])
    three = [[toks("a man throws a ball"), toks("a guy tosses the ball")],
             [toks("a woman throws a frisbee"), toks("a lady tosses a frisbee")],
             [toks("two kids kick a ball"), toks("some children boot the ball")]]
    out["cider_three_a"] = cider_d(toks("a man tosses a ball"), three[0], three)
    out["cider_three_b"] = cider_d(toks("a woman throws a ball a ball"), three[1], three)
    out["cider_no_overlap"] = cider_d(toks("zebra quietly"), three[2], three)
    out["person_f1_man_vs_man_woman"] = person_f1([["man"]], [[["man", "woman"]]], "exact")
    out["person_f1_guy_man_gp"] = person_f1([["guy"]], [[["man"]]], "gp")
    out["person_f1_guy_man_exact"] = person_f1([["guy"]], [[["man"]]], "exact")
    multi_p = [toks("a man and a woman talk he smiles"), toks("the kids play they run")]
    multi_r = [[toks("a man talks to a lady she smiles"), toks("a guy and a woman chat")],
               [toks("two children play they laugh"), toks("some kids run")]]
    out["person_f1_multi_exact"] = person_f1(multi_p, multi_r, "exact")
    out["person_f1_multi_gp"] = person_f1(multi_p, multi_r, "gp")

    # evaluate_corpus fixture
    refsets, preds, acts = [], [], {}
    for v in CORPUS:
        r0 = [w for s in v["refs0"] for w in toks(s)]
        r1 = [w for s in v["refs1"] for w in toks(s)]
        refsets.append([r0, r1])
        preds.append([w for s in v["pred"] for w in toks(s)])
    rep = {"bleu4": [], "cider_d": [], "div1": [], "div2": [], "re4": []}
    for p, rs in zip(preds, refsets):
        rep["bleu4"].append(bleu4(p, rs))
        rep["cider_d"].append(cider_d(p, rs, refsets))
        rep["div1"].append(float(div_n(p, 1)))
        rep["div2"].append(float(div_n(p, 2)))
        rep["re4"].append(float(re_n(p, 4)))
    for k, vals in rep.items():
        for i, x in enumerate(vals):
            out[f"corpus_{k}_v{i}"] = x
        out[f"corpus_{k}_mean"] = sum(vals) / len(vals)
    for v, p in zip(CORPUS, preds):
        acts.setdefault(v["activity"], []).append(p)
    out["corpus_re4_activity"] = re4_per_activity(list(acts.values()))
    out["corpus_vocab_size"] = len(set(w for p in preds for w in p))
    sents = [toks(s) for v in CORPUS for s in v["pred"]]
    out["corpus_sentence_length"] = Fraction(sum(len(s) for s in sents), len(sents))
    out["corpus_person_exact"] = person_f1(preds, refsets, "exact")
    out["corpus_person_gp"] = person_f1(preds, refsets, "gp")

    flat = {k: float(v) for k, v in out.items()}
    here = os.path.dirname(os.path.abspath(__file__))
    with open(os.path.join(here, "metrics_oracle_output.json"), "w") as f:
        json.dump(flat, f, indent=1, sort_keys=True)
    for k in sorted(flat):
        print(f"{{\"{k}\", {flat[k]!r}}},")


if __name__ == "__main__":
    main()
