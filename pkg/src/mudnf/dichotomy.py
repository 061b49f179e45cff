"""Numerical dichotomy tests and the dichotomy spectrum.

The evolution operator is sampled once on nodes uniform in u = log mu(t).
Shifting by gamma multiplies Phi(t, s) by (mu(t)/mu(s))^{-gamma}, which is an
exact translation of the sampled log-norms, so every gamma reuses the same
samples and the same envelope fits.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import InconclusiveError, NumericalError, PreconditionError, WindowError
from .growth import GrowthRate
from .linear import EvolutionOperator, block_index, fit_bounded_growth

DEFAULT_HORIZON = 20.0
DEFAULT_NODES = 41
DEFAULT_MARGIN = 0.02
_TIE = 1e-3
# the envelope objective is the bound evaluated at lag _ANCHOR * horizon
_ANCHOR = 0.5


@dataclass
class DichotomyEstimate:
    """Outcome of one dichotomy test at shift ``gamma``.

    ``alpha`` is -inf when the projector is zero and ``beta`` is +inf when it
    is the identity; there is nothing to fit on the empty side.
    """

    gamma: float
    admits: bool
    rank: int
    projector_blocks: tuple
    K: float
    alpha: float
    beta: float
    theta: float = 0.0
    nu: float = 0.0
    slack: float = 0.0
    mode: str = "uniform"

    def as_dict(self) -> dict:
        return {k: _finite_or_none(v) for k, v in self.__dict__.items()}


def _finite_or_none(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, tuple):
        return list(v)
    return v


@dataclass
class _Fit:
    c: float
    exponent: float
    drift: float


class DichotomyAnalyzer:
    """Cached samples and envelope fits for one evolution operator and rate."""

    def __init__(self, op: EvolutionOperator, rate: GrowthRate, *,
                 horizon: float = DEFAULT_HORIZON, n_nodes: int = DEFAULT_NODES,
                 margin: float = DEFAULT_MARGIN, cond_cap: float = 0.5):
        if horizon <= 0 or n_nodes < 5:
            raise PreconditionError("dichotomy sampling needs horizon > 0 and >= 5 nodes")
        self.op = op
        self.rate = rate
        self.horizon = float(horizon)
        self.margin = float(margin)
        self.cond_cap = float(cond_cap)
        self.u = np.linspace(-horizon, horizon, int(n_nodes))
        self.t = rate.inverse_log(self.u)
        self._samples: dict[int, tuple] = {}
        self._fits: dict[tuple, _Fit] = {}

    # ---- sampling ---------------------------------------------------------------
    def samples(self, b: int):
        """Forward and backward (log-norm, lag, u_s) arrays for 0-based block b."""
        got = self._samples.get(b)
        if got is not None:
            return got
        t, u = self.t, self.u
        n = t.size
        fwd_steps = [self.op._block(b, t[p + 1], t[p]) for p in range(n - 1)]
        bwd_steps = [self.op._block(b, t[p], t[p + 1]) for p in range(n - 1)]
        out = {"fwd": ([], [], []), "bwd": ([], [], [])}
        for p in range(n):
            m = np.eye(self.op.system.dims[b])
            for q in range(p + 1, n):
                if u[q] - u[p] > self.horizon + 1e-9:
                    break
                m = fwd_steps[q - 1] @ m
                _append(out["fwd"], m, u[q] - u[p], u[p])
            m = np.eye(self.op.system.dims[b])
            for q in range(p - 1, -1, -1):
                if u[p] - u[q] > self.horizon + 1e-9:
                    break
                m = bwd_steps[q] @ m
                _append(out["bwd"], m, u[q] - u[p], u[p])
        got = {k: tuple(np.array(a) for a in v) for k, v in out.items()}
        self._samples[b] = got
        return got

    def _stack(self, blocks: Sequence[int], side: str):
        ys = [self.samples(b)[side][0] for b in blocks]
        _, lag, us = self.samples(blocks[0])[side]
        return np.max(np.vstack(ys), axis=0), lag, us

    # ---- envelope fits ------------------------------------------------------------
    def fit(self, blocks: Sequence[int], side: str, mode: str) -> _Fit:
        """Envelope fit at gamma = 0 for the union of ``blocks``."""
        key = (tuple(sorted(blocks)), side, mode)
        got = self._fits.get(key)
        if got is not None:
            return got
        y, lag, us = self._stack(list(key[0]), side)
        U = self.horizon
        sgn = 1.0 if side == "fwd" else -1.0
        # variables: c >= 0, exponent free, drift >= 0 (zero in uniform mode)
        cost = np.array([1.0 + _TIE, sgn * _ANCHOR * U, _ANCHOR * U * (1.0 + _TIE)])
        a_ub = -np.column_stack([np.ones_like(y), lag, np.abs(us)])
        bounds = [(0, None), (None, None), (0, 0 if mode == "uniform" else None)]
        res = linprog(cost, A_ub=a_ub, b_ub=-y, bounds=bounds, method="highs")
        if not res.success:
            raise NumericalError(f"dichotomy envelope fit failed: {res.message}")
        got = _Fit(float(res.x[0]), float(res.x[1]), float(res.x[2]))
        self._fits[key] = got
        return got

    def block_constants(self, i0: int, gamma: float, side: str, mode: str) -> _Fit:
        """Fit for one block (0-based) of the gamma-shifted system."""
        f = self.fit([i0], side, mode)
        return _Fit(f.c, f.exponent - gamma, f.drift)

    # ---- tests --------------------------------------------------------------------
    def test(self, gamma: float, mode: str = "uniform",
             blocks: Sequence[int] | None = None) -> DichotomyEstimate:
        if mode not in ("uniform", "nonuniform"):
            raise PreconditionError(f"unknown dichotomy mode {mode!r}")
        dims = self.op.system.dims
        pool = list(range(len(dims))) if blocks is None else list(blocks)
        best = None
        admitted_ranks = set()
        for r in range(len(pool) + 1):
            for sub in itertools.combinations(pool, r):
                rest = [b for b in pool if b not in sub]
                est = self._candidate(gamma, mode, list(sub), rest)
                if est.admits:
                    admitted_ranks.add(est.rank)
                if best is None or (est.admits, est.slack) > (best.admits, best.slack):
                    best = est
        if len(admitted_ranks) > 1:
            # contradictory finite-horizon evidence: classify as spectral
            best.admits = False
            best.slack = min(best.slack, 0.0)
        if best.admits and best.K > 0 and math.log(best.K) > self.cond_cap * self.horizon:
            raise InconclusiveError(
                f"dichotomy constant log K = {math.log(best.K):.3g} exceeds "
                f"{self.cond_cap:g} * horizon; enlarge the horizon", value=gamma)
        return best

    def _candidate(self, gamma, mode, sub, rest) -> DichotomyEstimate:
        m = self.margin
        c = 0.0
        alpha, theta, beta, nu = -math.inf, 0.0, math.inf, 0.0
        scores = []
        if sub:
            f = self.fit(sub, "fwd", mode)
            alpha, theta, c = f.exponent - gamma, f.drift, max(c, f.c)
            scores.append(-(alpha + theta) - m)
        if rest:
            g = self.fit(rest, "bwd", mode)
            beta, nu, c = g.exponent - gamma, g.drift, max(c, g.c)
            scores.append(beta - nu - m)
        score = min(scores)
        dims = self.op.system.dims
        return DichotomyEstimate(
            gamma=float(gamma), admits=bool(score > 0), rank=int(sum(dims[b] for b in sub)),
            projector_blocks=tuple(b + 1 for b in sub), K=math.exp(c), alpha=alpha, beta=beta,
            theta=theta, nu=nu, slack=float(score), mode=mode)


def get_analyzer(op: EvolutionOperator, rate: GrowthRate | None = None, *,
                 horizon: float | None = None, n_nodes: int = DEFAULT_NODES,
                 margin: float = DEFAULT_MARGIN) -> DichotomyAnalyzer:
    """Return the cached analyzer for ``op`` with these sampling parameters."""
    rate = rate if rate is not None else op.rate
    horizon = DEFAULT_HORIZON if horizon is None else float(horizon)
    key = (id(rate), horizon, int(n_nodes), float(margin))
    got = op.analyzers.get(key)
    if got is None:
        got = DichotomyAnalyzer(op, rate, horizon=horizon, n_nodes=n_nodes, margin=margin)
        op.analyzers[key] = got
    return got


def test_dichotomy(op: EvolutionOperator, rate: GrowthRate | None = None, gamma: float = 0.0,
                   mode: str = "uniform", **opts) -> DichotomyEstimate:
    """Decide whether the gamma-shifted system admits a (non)uniform dichotomy."""
    return get_analyzer(op, rate, **opts).test(gamma, mode)


test_dichotomy.__test__ = False  # keep pytest from collecting it


@dataclass
class Spectrum:
    """Spectral intervals with the projector ranks of the gaps between them.

    With ``per_block`` set, ``intervals[i]`` is the spectrum of block i + 1 and
    the list follows block order rather than being sorted.
    """

    intervals: tuple
    gap_ranks: tuple = ()
    tol: float = 0.0
    mode: str = "uniform"
    per_block: bool = False
    probes: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.intervals = tuple((float(a), float(b)) for a, b in self.intervals)
        for a, b in self.intervals:
            if not a <= b:
                raise PreconditionError(f"spectral interval [{a}, {b}] has a > b")
        if not self.per_block:
            for (_, b1), (a2, _) in zip(self.intervals, self.intervals[1:]):
                if not b1 < a2:
                    raise PreconditionError("spectral intervals must be disjoint and sorted")
            if self.gap_ranks and any(r2 <= r1 for r1, r2 in zip(self.gap_ranks, self.gap_ranks[1:])):
                raise PreconditionError("gap projector ranks must increase left to right")

    @property
    def n(self) -> int:
        return len(self.intervals)

    def inflated(self, amount: float | None = None) -> tuple:
        w = self.tol if amount is None else float(amount)
        return tuple((a - w, b + w) for a, b in self.intervals)

    def as_dict(self) -> dict:
        return {"intervals": [list(i) for i in self.intervals], "gap_ranks": list(self.gap_ranks),
                "tol": self.tol, "mode": self.mode, "per_block": self.per_block}


def _classify(an: DichotomyAnalyzer, gamma: float, mode: str, blocks):
    est = an.test(gamma, mode, blocks)
    return (est.rank if est.admits else None), est


def compute_spectrum(op: EvolutionOperator, rate: GrowthRate | None = None,
                     window: tuple = (-5.0, 5.0), tol: float = 0.05, *, mode: str = "uniform",
                     blocks: Sequence[int] | None = None, check_growth: bool = True,
                     horizon: float | None = None, n_nodes: int = DEFAULT_NODES,
                     margin: float = DEFAULT_MARGIN) -> Spectrum:
    """Scan the window, bisect every transition and return the spectrum.

    ``blocks`` (1-based) restricts the analysis to a subsystem.
    """
    if tol <= 0:
        raise PreconditionError("spectrum tolerance must be positive")
    lo, hi = map(float, window)
    if not lo < hi:
        raise PreconditionError("spectral window must satisfy lo < hi")
    rate = rate if rate is not None else op.rate
    an = get_analyzer(op, rate, horizon=horizon, n_nodes=n_nodes, margin=margin)
    pool = None if blocks is None else [block_index(i, op.system.n) for i in blocks]
    if check_growth:
        fit = fit_bounded_growth(op, rate, rate.inverse_log(np.linspace(-10, 10, 11)))
        if not fit.admits:
            warnings.warn("system does not appear to have mu-bounded growth; "
                          "spectral intervals may be unbounded", RuntimeWarning, stacklevel=2)
    step = min(tol, an.margin)
    count = int(math.ceil((hi - lo) / step)) + 1
    grid = np.linspace(lo, hi, count)
    keys, probes = [], []
    for g in grid:
        k, est = _classify(an, float(g), mode, pool)
        keys.append(k)
        probes.append(est)
    if keys[0] is None or keys[-1] is None:
        edge = lo if keys[0] is None else hi
        raise WindowError(f"gamma = {edge:g} lies in the spectrum; widen the search window")

    def boundary(inside: float, key, outside: float) -> float:
        while abs(outside - inside) > tol / 4:
            mid = 0.5 * (inside + outside)
            if _classify(an, mid, mode, pool)[0] == key:
                inside = mid
            else:
                outside = mid
        return 0.5 * (inside + outside)

    intervals, ranks = [], [keys[0]]
    p = 0
    while p < count - 1:
        if keys[p + 1] == keys[p]:
            p += 1
            continue
        if keys[p + 1] is not None:
            raise NumericalError(
                f"resolvent ranks change from {keys[p]} to {keys[p + 1]} without a spectral "
                f"point near gamma = {grid[p]:g}; refine the scan")
        q = p + 1
        while keys[q] is None:
            q += 1
        a = boundary(float(grid[p]), keys[p], float(grid[p + 1]))
        b = boundary(float(grid[q]), keys[q], float(grid[q - 1]))
        intervals.append((a, max(a, b)))
        ranks.append(keys[q])
        p = q
    if any(r2 <= r1 for r1, r2 in zip(ranks, ranks[1:])):
        raise NumericalError(f"resolvent ranks {ranks} are not strictly increasing")
    return Spectrum(tuple(intervals), tuple(ranks), float(tol), mode, False, probes)


def block_spectra(op: EvolutionOperator, rate: GrowthRate | None = None,
                  window: tuple = (-5.0, 5.0), tol: float = 0.05, *, mode: str = "uniform",
                  **opts) -> Spectrum:
    """Spectrum of every block separately, in block order.

    Each block must carry exactly one spectral interval.
    """
    out = []
    for i in range(1, op.system.n + 1):
        sp = compute_spectrum(op, rate, window, tol, mode=mode, blocks=[i],
                              check_growth=(i == 1) and opts.pop("check_growth", True), **opts)
        if sp.n != 1:
            raise PreconditionError(
                f"block {i} carries {sp.n} spectral intervals; exactly one is required")
        out.append(sp.intervals[0])
    return Spectrum(tuple(out), (), float(tol), mode, True)


def _append(acc, m, lag, us):
    nrm = abs(m[0, 0]) if m.shape == (1, 1) else np.linalg.norm(m, 2)
    acc[0].append(math.log(nrm))
    acc[1].append(lag)
    acc[2].append(us)
