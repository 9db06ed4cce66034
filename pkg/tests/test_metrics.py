import itertools
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptsign.errors import UndefinedWERError
from adaptsign.metrics import WerBreakdown, align_and_count, corpus_breakdown, wer


@lru_cache(maxsize=None)
def edit_distance(ref: tuple, hyp: tuple) -> int:
    """Plain recursive definition: the minimum over the three ways the last position can be produced."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    return min(
        edit_distance(ref[:-1], hyp[:-1]) + (ref[-1] != hyp[-1]),
        edit_distance(ref[:-1], hyp) + 1,
        edit_distance(ref, hyp[:-1]) + 1,
    )


def test_examples():
    assert align_and_count([1, 2, 3], [1, 2, 3]) == WerBreakdown(0, 0, 0, 3)
    assert align_and_count([1, 2, 3], []) == WerBreakdown(0, 0, 3, 3)
    b = align_and_count([1, 2, 3], [1, 3, 4])
    assert b.errors == 2
    assert (b.substitutions, b.insertions, b.deletions) == (2, 0, 0)
    assert wer(b) == pytest.approx(200 / 3)


def test_wer_formula():
    assert wer(WerBreakdown(0, 0, 0, 3)) == 0.0
    assert wer(WerBreakdown(1, 1, 0, 3)) == pytest.approx(66.6667, abs=1e-4)
    assert wer(WerBreakdown(0, 5, 0, 3)) == pytest.approx(166.6667, abs=1e-4)


def test_pure_insertions():
    assert align_and_count([1], [1, 2, 2]) == WerBreakdown(0, 2, 0, 1)


def test_tie_break_prefers_substitution_then_deletion():
    # two subs and a del+ins pair both cost 2; the canonical alignment picks the subs
    assert align_and_count([1, 2], [2, 1]) == WerBreakdown(2, 0, 0, 2)
    assert align_and_count([1, 2], [2]) == WerBreakdown(0, 0, 1, 2)
    assert align_and_count([1, 2], [3]) == WerBreakdown(1, 0, 1, 2)


def test_empty_reference_undefined():
    with pytest.raises(UndefinedWERError):
        align_and_count([], [1])
    with pytest.raises(UndefinedWERError):
        corpus_breakdown([])


def test_corpus_pools_operations():
    total = corpus_breakdown([([1, 2, 3], [1, 2, 3]), ([1], [2, 3])])
    assert total == WerBreakdown(1, 1, 0, 4)
    assert wer(total) == 50.0


def test_exhaustive_small_pairs():
    seqs = [s for n in range(4) for s in itertools.product(range(1, 4), repeat=n)]
    for ref in seqs:
        if not ref:
            continue
        for hyp in seqs:
            b = align_and_count(ref, hyp)
            assert b.errors == edit_distance(ref, hyp)
            assert b.deletions - b.insertions == len(ref) - len(hyp)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=6), st.lists(st.integers(1, 4), max_size=6))
def test_breakdown_is_a_minimal_alignment(ref, hyp):
    b = align_and_count(ref, hyp)
    assert b.errors == edit_distance(tuple(ref), tuple(hyp))
    assert b.ref_len == len(ref)
    assert b.deletions - b.insertions == len(ref) - len(hyp)
    assert wer(b) == pytest.approx(100 * b.errors / len(ref))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.lists(st.integers(1, 4), max_size=5), st.integers(2, 4))
def test_repeating_blocks_keeps_the_percentage(ref, hyp, k):
    single = wer(align_and_count(ref, hyp))
    assert wer(corpus_breakdown([(ref, hyp)] * k)) == pytest.approx(single)
    # one long sentence may align across block borders, which can only help
    big_ref, big_hyp = [], []
    for i in range(k):
        big_ref += ref + [100 + i]
        big_hyp += hyp + [100 + i]
    assert align_and_count(big_ref, big_hyp).errors <= k * align_and_count(ref, hyp).errors
