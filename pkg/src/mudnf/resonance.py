"""Interval arithmetic on spectra and nonresonance checks.

Positions j are 1-based. A multi-index k = (k_1, ..., k_n) weights the
spectral intervals; its i-th entry refers to block i.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .dichotomy import Spectrum
from .errors import BudgetError, PreconditionError
from .linear import block_index

DEFAULT_BUDGET = 10**6


class MultiIndex(tuple):
    """Tuple of nonnegative integers with order |k| and factorial k!."""

    def __new__(cls, values):
        vals = tuple(int(v) for v in values)
        if any(v < 0 for v in vals) or any(int(v) != v for v in values):
            raise PreconditionError(f"multi-index entries must be nonnegative integers: {values!r}")
        return super().__new__(cls, vals)

    @property
    def order(self) -> int:
        return sum(self)

    @property
    def factorial(self) -> int:
        out = 1
        for v in self:
            out *= math.factorial(v)
        return out

    @property
    def slots(self) -> tuple:
        """0-based block of every tensor slot, in slot order."""
        return tuple(b for b, v in enumerate(self) for _ in range(v))

    def __repr__(self) -> str:
        return f"MultiIndex({tuple(self)!r})"


def multi_indices(n: int, order: int) -> Iterator[MultiIndex]:
    """All k in N_0^n with |k| = order, in descending lexicographic order."""
    if n == 1:
        yield MultiIndex((order,))
        return
    for first in range(order, -1, -1):
        for rest in multi_indices(n - 1, order - first):
            yield MultiIndex((first,) + tuple(rest))


def count_pairs(n: int, ell: int) -> int:
    """Number of (j, k) pairs with 2 <= |k| <= ell."""
    return n * sum(math.comb(m + n - 1, n - 1) for m in range(2, ell + 1))


class Status(str, enum.Enum):
    LEFT_GAP = "LeftGap"
    RIGHT_GAP = "RightGap"
    RESONANT = "Resonant"


@dataclass(frozen=True)
class ResonanceVerdict:
    status: Status
    dist: float | None
    j: int
    k: MultiIndex

    @property
    def direction(self) -> int:
        """+1 for the forward integral (left gap), -1 for the backward one."""
        return {Status.LEFT_GAP: 1, Status.RIGHT_GAP: -1}.get(self.status, 0)

    def as_dict(self) -> dict:
        return {"j": self.j, "k": list(self.k), "status": self.status.value, "dist": self.dist}


def intervals_of(spectrum, inflate: float = 0.0) -> tuple:
    """Intervals of a Spectrum (or a plain sequence), widened by ``inflate``."""
    if isinstance(spectrum, Spectrum):
        ivs = spectrum.intervals
    else:
        ivs = tuple((float(a), float(b)) for a, b in spectrum)
    for a, b in ivs:
        if not a <= b:
            raise PreconditionError(f"interval [{a}, {b}] has a > b")
    return tuple((a - inflate, b + inflate) for a, b in ivs)


def weighted_sum(spectrum, k: Sequence[int]) -> tuple:
    """The interval sum_i k_i [a_i, b_i]."""
    ivs = intervals_of(spectrum)
    k = MultiIndex(k)
    if len(k) != len(ivs):
        raise PreconditionError(f"multi-index has {len(k)} entries, spectrum has {len(ivs)} intervals")
    return (float(sum(ki * a for ki, (a, _) in zip(k, ivs))),
            float(sum(ki * b for ki, (_, b) in zip(k, ivs))))


def check_nonresonance(spectrum, j: int, k: Sequence[int], *, inflate: float = 0.0) -> ResonanceVerdict:
    """Compare the interval at position j with the k-weighted sum."""
    k = MultiIndex(k)
    if k.order < 2:
        raise PreconditionError("nonresonance is only posed for |k| >= 2")
    ivs = intervals_of(spectrum, inflate)
    jj = block_index(j, len(ivs))
    lo, hi = weighted_sum(ivs, k)
    a, b = ivs[jj]
    if a > hi:
        return ResonanceVerdict(Status.LEFT_GAP, a - hi, int(j), k)
    if b < lo:
        return ResonanceVerdict(Status.RIGHT_GAP, lo - b, int(j), k)
    return ResonanceVerdict(Status.RESONANT, None, int(j), k)


@dataclass
class H3Report:
    passed: bool
    ell: int
    violations: list = field(default_factory=list)
    min_dist: float | None = None
    verdicts: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "ell": self.ell,
                "violations": [(v.j, list(v.k)) for v in self.violations],
                "min_dist": self.min_dist}


def iter_pairs(n: int, ell: int) -> Iterator[tuple]:
    """(j, k) pairs, graded-lex over k with j innermost."""
    for m in range(2, ell + 1):
        for k in multi_indices(n, m):
            for j in range(1, n + 1):
                yield j, k


def check_H3(spectrum, ell: int, *, inflate: float = 0.0, budget: int = DEFAULT_BUDGET) -> H3Report:
    """Check nonresonance for every position and every 2 <= |k| <= ell."""
    if ell < 2:
        raise PreconditionError("the nonresonance sweep needs ell >= 2")
    ivs = intervals_of(spectrum, inflate)
    n = len(ivs)
    total = count_pairs(n, ell)
    if total > budget:
        raise BudgetError(f"{total} (j, k) pairs exceed the enumeration budget {budget}")
    verdicts = [check_nonresonance(ivs, j, k) for j, k in iter_pairs(n, ell)]
    bad = [v for v in verdicts if v.status is Status.RESONANT]
    dists = [v.dist for v in verdicts if v.dist is not None]
    return H3Report(not bad, int(ell), bad, min(dists) if dists else None, verdicts)
