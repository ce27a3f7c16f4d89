"""Brute-force reference scorer for the caption metrics.

Everything here is computed the slow, obvious way (explicit alignment
enumeration, subsequence enumeration, plain dictionaries) so it shares no
structure with the C++ scorer.

    python metrics_oracle.py write   # regenerate the frozen fixtures
    python metrics_oracle.py check   # recompute and compare with the fixtures
"""

import itertools
import json
import math
import pathlib
import sys

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def grams(tokens, n):
    out = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i:i + n])
        out[g] = out.get(g, 0) + 1
    return out


def bleu(cands, refs):
    hit = [0] * 4
    tot = [0] * 4
    c_len = 0
    r_len = 0
    for c, rs in zip(cands, refs):
        c_len += len(c)
        r_len += sorted((abs(len(r) - len(c)), len(r)) for r in rs)[0][1]
        for n in range(1, 5):
            cg = grams(c, n)
            for g, k in cg.items():
                best = max(grams(r, n).get(g, 0) for r in rs)
                hit[n - 1] += min(k, best)
                tot[n - 1] += k
    scores = []
    for n in range(1, 5):
        if c_len == 0 or any(hit[k] == 0 or tot[k] == 0 for k in range(n)):
            scores.append(0.0)
            continue
        bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
        geo = math.exp(sum(math.log(hit[k] / tot[k]) for k in range(n)) / n)
        scores.append(bp * geo)
    return scores


def alignments(c, r):
    """Every one-to-one map from candidate positions to equal reference tokens."""
    def rec(i, used):
        if i == len(c):
            yield []
            return
        yield from rec(i + 1, used)
        for j, t in enumerate(r):
            if t == c[i] and j not in used:
                for rest in rec(i + 1, used | {j}):
                    yield [(i, j)] + rest
    yield from rec(0, frozenset())


def chunks(pairs):
    pairs = sorted(pairs)
    count = 0
    for k, (i, j) in enumerate(pairs):
        if k == 0 or not (i == pairs[k - 1][0] + 1 and j == pairs[k - 1][1] + 1):
            count += 1
    return count


def meteor_one(c, r):
    if not c or not r:
        return 0.0
    best = None
    for a in alignments(c, r):
        key = (-len(a), chunks(a))
        if best is None or key < best:
            best = key
    m, ch = -best[0], best[1]
    if m == 0:
        return 0.0
    p = m / len(c)
    rec = m / len(r)
    fmean = 10 * p * rec / (rec + 9 * p)
    return fmean * (1 - 0.5 * (ch / m) ** 3)


def lcs(a, b):
    for size in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), size):
            sub = [a[i] for i in idx]
            it = iter(b)
            if all(any(x == y for y in it) for x in sub):
                return size
    return 0


def rouge_one(c, rs):
    if not c:
        return 0.0
    p = max(lcs(c, r) / len(c) for r in rs if r)
    rec = max(lcs(c, r) / len(r) for r in rs if r)
    if p == 0 or rec == 0:
        return 0.0
    beta2 = 1.2 ** 2
    return (1 + beta2) * p * rec / (rec + beta2 * p)


def cider(cands, refs):
    n_docs = len(cands)
    df = {}
    for rs in refs:
        seen = set()
        for r in rs:
            for n in range(1, 5):
                seen.update(grams(r, n).keys())
        for g in seen:
            df[g] = df.get(g, 0) + 1

    def vec(tokens, n):
        return {g: k * (math.log(n_docs) - math.log(max(1, df.get(g, 0)))) for g, k in grams(tokens, n).items()}

    out = []
    for c, rs in zip(cands, refs):
        total = 0.0
        for n in range(1, 5):
            vc = vec(c, n)
            per_ref = []
            for r in rs:
                vr = vec(r, n)
                nc = math.sqrt(sum(v * v for v in vc.values()))
                nr = math.sqrt(sum(v * v for v in vr.values()))
                dot = sum(v * vr.get(g, 0.0) for g, v in vc.items())
                sim = dot / (nc * nr) if nc > 0 and nr > 0 else 0.0
                sim *= math.exp(-((len(c) - len(r)) ** 2) / (2 * 6.0 ** 2))
                per_ref.append(sim)
            total += sum(per_ref) / len(per_ref)
        out.append(total / 4 * 10)
    return out


def score(cands, refs):
    b = bleu(cands, refs)
    n = len(cands)
    return {
        "bleu1": b[0], "bleu2": b[1], "bleu3": b[2], "bleu4": b[3],
        "meteor": sum(max(meteor_one(c, r) for r in rs) for c, rs in zip(cands, refs)) / n,
        "rouge_l": sum(rouge_one(c, rs) for c, rs in zip(cands, refs)) / n,
        "cider": sum(cider(cands, refs)) / n,
    }


CORPORA = {
    "metrics_single_refs": (
        ["a man walks into the room", "the dog runs on the grass", "a woman is cooking in a kitchen"],
        [["a man walks into a room"], ["a dog runs on the green grass"], ["a woman cooks food in the kitchen"]],
    ),
    "metrics_multi_refs": (
        ["a man plays a guitar on a stage", "two kids play ball", "someone opens a door slowly"],
        [["a man plays the guitar on a stage", "a guitarist performs on stage", "man playing guitar"],
         ["two children play with a ball outside", "kids are playing ball"],
         ["a person slowly opens the door", "someone opens the door", "the door is opened by a man"]],
    ),
    "metrics_repeats": (
        ["the the cat sat the mat", "", "a b c a b c", "red car red car"],
        [["the cat sat on the mat", "the mat the cat"],
         ["an empty candidate"],
         ["a b c d a b c", "c b a"],
         ["a red car", "the car is red"]],
    ),
}


def build():
    out = {}
    for name, (cands, refs) in CORPORA.items():
        c = [s.split() for s in cands]
        r = [[s.split() for s in rs] for rs in refs]
        out[name] = {"candidates": cands, "references": refs, "expected": score(c, r)}
    return out


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "check"
    fixtures = build()
    if mode == "write":
        for name, data in fixtures.items():
            (FIXTURES / (name + ".json")).write_text(json.dumps(data, indent=2) + "\n")
        return 0
    bad = 0
    for name, data in fixtures.items():
        stored = json.loads((FIXTURES / (name + ".json")).read_text())
        for k, v in data["expected"].items():
            if abs(stored["expected"][k] - v) > 1e-12:
                print(f"{name}: {k} stored {stored['expected'][k]} recomputed {v}")
                bad += 1
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
