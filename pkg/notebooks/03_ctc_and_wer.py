#!/usr/bin/env python3
# CTC loss in log space against brute force, and WER with its error breakdown.

# %%
import itertools

import numpy as np

from adaptsign.ctc import ctc_brute_force, ctc_forward_loss, greedy_decode, is_feasible
from adaptsign.metrics import align_and_count, corpus_breakdown, wer

# %% uniform lattice over {blank, a}: 3 of the 4 two-step paths collapse to "a"
lattice = np.log(np.full((2, 2), 0.5))
float(ctc_forward_loss(lattice, [1]).data), -np.log(3 / 4)

# %% random lattices: the dynamic programme matches enumeration of all paths
rng = np.random.default_rng(1)
for steps, target in [(4, [1, 2]), (5, [1, 1]), (6, [2, 1, 2])]:
    z = rng.standard_normal((steps, 3))
    lp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    print(steps, target, float(ctc_forward_loss(lp, target).data), ctc_brute_force(lp, target))

# %% a repeated label needs a blank between its copies
is_feasible(2, [1, 1]), float(ctc_forward_loss(np.log(np.full((2, 2), 0.5)), [1, 1]).data)

# %% greedy decoding: best label per step, merge repeats, drop blanks
lp = np.full((5, 3), -9.0)
lp[np.arange(5), [1, 1, 0, 1, 2]] = 0.0
greedy_decode(lp)

# %% WER is (S + D + I) / N; it can exceed 100 with many insertions
for ref, hyp in [([1, 2, 3], [1, 3, 4]), ([1, 2, 3], []), ([1], [1, 2, 2, 2, 2, 2])]:
    b = align_and_count(ref, hyp)
    print(ref, hyp, b.substitutions, b.deletions, b.insertions, f"{wer(b):.2f}")

# %% corpus WER pools counts rather than averaging sentence scores
pairs = [([1, 2], [1, 2]), ([1, 2, 3, 4, 5, 6], [])]
wer(corpus_breakdown(pairs)), np.mean([wer(align_and_count(r, h)) for r, h in pairs])

# %% exhaustive check on short sequences against a plain recursive distance
def dist(r, h):
    if not r or not h:
        return len(r) + len(h)
    return min(dist(r[1:], h[1:]) + (r[0] != h[0]), dist(r[1:], h) + 1, dist(r, h[1:]) + 1)

bad = 0
for n, m in itertools.product(range(1, 4), range(0, 4)):
    for r in itertools.product(range(1, 4), repeat=n):
        for h in itertools.product(range(1, 4), repeat=m):
            bad += align_and_count(list(r), list(h)).errors != dist(r, h)
bad
