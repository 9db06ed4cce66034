"""Word error rate with a substitution/insertion/deletion breakdown."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import UndefinedWERError


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    def __post_init__(self):
        if self.ref_len < 1:
            raise UndefinedWERError("WER is undefined for an empty reference")
        if min(self.substitutions, self.insertions, self.deletions) < 0:
            raise ValueError("operation counts must be nonnegative")

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        return WerBreakdown(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_len + other.ref_len,
        )

    def to_dict(self) -> dict:
        return {
            "sub": self.substitutions,
            "ins": self.insertions,
            "del": self.deletions,
            "ref_len": self.ref_len,
            "wer": wer(self),
        }


def align_and_count(ref: Sequence[int], hyp: Sequence[int]) -> WerBreakdown:
    """Unit-cost Levenshtein alignment of ``hyp`` against ``ref``.

    On ties the backtrace prefers substitution, then deletion, then insertion,
    so the breakdown is deterministic.
    """
    n, m = len(ref), len(hyp)
    if n == 0:
        raise UndefinedWERError("WER is undefined for an empty reference")
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        row, above, r = cost[i], cost[i - 1], ref[i - 1]
        for j in range(1, m + 1):
            diag = above[j - 1] + (r != hyp[j - 1])
            best = above[j] + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = diag if diag < best else best

    sub = ins = dele = 0
    i, j = n, m
    while i or j:
        if i and j and cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            sub += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i and cost[i][j] == cost[i - 1][j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return WerBreakdown(sub, ins, dele, n)


def wer(b: WerBreakdown) -> float:
    """100 * (sub + ins + del) / ref_len; exceeds 100 when insertions pile up."""
    return 100.0 * b.errors / b.ref_len


def corpus_breakdown(pairs: Iterable[tuple[Sequence[int], Sequence[int]]]) -> WerBreakdown:
    """Pool operation counts over (ref, hyp) pairs; the corpus WER is then wer() of the sum."""
    total = None
    for ref, hyp in pairs:
        b = align_and_count(ref, hyp)
        total = b if total is None else total + b
    if total is None:
        raise UndefinedWERError("no reference sentences to score")
    return total
