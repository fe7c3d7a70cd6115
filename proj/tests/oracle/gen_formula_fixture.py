#!/usr/bin/env python3
"""Brute-force reference values for the closed-form reward, return, surrogate,
accuracy-gain and clamp formulas. Writes tests/data/formula_fixture.json.

Written independently of the C++ sources: plain loops, no shared code.
"""
import json
import math
import random
import sys
from pathlib import Path

N = 120
rng = random.Random(20240611)
ACTIONS = [-100, -25, 0, 25, 100]


def coeffs():
    return {
        "alpha": rng.uniform(0.0, 3.0),
        "beta": rng.uniform(0.0, 2.0),
        "delta": rng.uniform(0.0, 0.5),
        "eta": rng.uniform(0.0, 2.0),
        "gamma": 0.99,
    }


def sgd(a, da, t, b, c):
    total = a
    if da > 0:
        total += c["alpha"] * da
    total -= c["beta"] * t
    total -= c["delta"] * (math.log(b, 2) - 5)
    return total


def adaptive(a, da, t, s, s2, b, c):
    return sgd(a, da, t, b, c) - c["eta"] * (s2 + s)


def discounted(rs, g):
    total = 0.0
    for i in range(len(rs)):
        w = 1.0
        for _ in range(i):
            w *= g
        total += w * rs[i]
    return total


def clipped(ratio, adv, eps):
    lo, hi = 1 - eps, 1 + eps
    c = lo if ratio < lo else hi if ratio > hi else ratio
    return min(ratio * adv, c * adv)


def gain(xs, w):
    n = len(xs)
    mean = sum(xs) / n
    var = sum((x - mean) ** 2 for x in xs) / n
    sd = math.sqrt(var)
    if sd == 0:
        return 0.0
    z = [(x - mean) / sd for x in xs]
    first = sum(z[:w]) / w
    last = sum(z[n - w:]) / w
    return last - first


def clamp(b, a):
    v = b + a
    if v > 1024:
        v = 1024
    if v < 32:
        v = 32
    return v


def main(out):
    cases = {k: [] for k in ["reward_sgd", "reward_adaptive", "discounted_return", "clipped_objective",
                             "accuracy_gain", "apply_action"]}
    for _ in range(N):
        c = coeffs()
        a, da, t = rng.random(), rng.uniform(-3, 3), rng.uniform(0.01, 2.0)
        b = rng.randint(32, 1024)
        cases["reward_sgd"].append({"A": a, "dA": da, "T": t, "B": b, "coeffs": c, "expected": sgd(a, da, t, b, c)})
        s = rng.uniform(0, 1.5)
        s2 = rng.uniform(0, 2.0)
        cases["reward_adaptive"].append({"A": a, "dA": da, "T": t, "sigma": s, "sigma_sq": s2, "B": b, "coeffs": c,
                                         "expected": adaptive(a, da, t, s, s2, b, c)})
        rs = [rng.uniform(-2, 2) for _ in range(rng.randint(1, 60))]
        g = rng.uniform(0.5, 1.0)
        cases["discounted_return"].append({"rewards": rs, "gamma": g, "expected": discounted(rs, g)})
        ratio, adv, eps = rng.uniform(0.2, 2.5), rng.uniform(-5, 5), rng.uniform(0.05, 0.45)
        cases["clipped_objective"].append({"ratio": ratio, "advantage": adv, "epsilon": eps,
                                           "expected": clipped(ratio, adv, eps)})
        n = rng.randint(2, 32)
        xs = [rng.random() for _ in range(n)]
        w = rng.randint(1, n // 2)
        cases["accuracy_gain"].append({"series": xs, "window": w, "expected": gain(xs, w)})
        bb = rng.randint(32, 1024)
        act = rng.choice(ACTIONS)
        cases["apply_action"].append({"batch": bb, "delta": act, "expected": clamp(bb, act)})
    # Boundary cases.
    for bb, act in [(1000, 100), (32, -100), (256, 0), (1024, 25), (50, -25), (33, -100), (1024, 100), (32, 0)]:
        cases["apply_action"].append({"batch": bb, "delta": act, "expected": clamp(bb, act)})
    Path(out).write_text(json.dumps(cases, indent=1) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else str(Path(__file__).resolve().parents[1] / "data" / "formula_fixture.json"))
