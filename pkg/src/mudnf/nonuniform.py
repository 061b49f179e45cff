"""Diagnostics for systems with only nonuniform bounded growth.

The forward and backward envelope fits of each block carry an exponent and a
drift theta (resp. nu) multiplying |log mu(s)|. For a pair (j, k) the
factors eta+/- collect the worst-case ratio of these envelopes along the
integration path; the h-bound and trumpet radius then inherit them.

Working in u = log mu, every factor is exp of a piecewise-linear function of
u_s, so the suprema are taken over u-grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import admissibility as adm
from .dichotomy import get_analyzer
from .errors import InconclusiveError, PreconditionError
from .growth import GrowthRate
from .linear import EvolutionOperator, block_index
from .resonance import MultiIndex, Status, check_nonresonance, intervals_of


@dataclass
class NonuniformContext:
    alpha: list
    beta: list
    theta: list
    nu: list
    K: float
    epsilon: float
    mode: str = "nonuniform"
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        bad = [i + 1 for i in range(len(self.alpha))
               if not (self.alpha[i] + self.theta[i] < 0 and self.beta[i] - self.nu[i] > 0)]
        if bad:
            raise PreconditionError(f"blocks {bad} violate alpha + theta < 0 or beta - nu > 0")

    @property
    def n(self) -> int:
        return len(self.alpha)

    def without_drift(self) -> "NonuniformContext":
        return NonuniformContext(list(self.alpha), list(self.beta), [0.0] * self.n, [0.0] * self.n,
                                 self.K, self.epsilon, "uniform", dict(self.details))

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "theta": self.theta, "nu": self.nu,
                "K": self.K, "epsilon": self.epsilon, "mode": self.mode}


def pair_epsilon(spectrum, j: int, k: Sequence[int]) -> float:
    """The epsilon used by the conjugation map for (j, k)."""
    v = check_nonresonance(intervals_of(spectrum, float(getattr(spectrum, "tol", 0.0) or 0.0)), j, k)
    if v.status is Status.RESONANT:
        raise PreconditionError(f"pair (j={j}, k={tuple(MultiIndex(k))}) is resonant")
    return v.dist / (2.0 * (MultiIndex(k).order + 1))


def fit_nonuniform_context(op: EvolutionOperator, spectrum, epsilon: float, *,
                           rate: GrowthRate | None = None, mode: str = "nonuniform",
                           horizon: float | None = None, n_nodes: int | None = None) -> NonuniformContext:
    """Per-block constants from envelope fits shifted to b_i + eps (forward) and a_i - eps (backward)."""
    rate = rate if rate is not None else op.rate
    if mode not in ("uniform", "nonuniform"):
        raise PreconditionError(f"unknown mode {mode!r}")
    ivs = intervals_of(spectrum, float(getattr(spectrum, "tol", 0.0) or 0.0))
    if len(ivs) != op.system.n:
        raise PreconditionError("spectrum must have one interval per block")
    opts = {k: v for k, v in (("horizon", horizon), ("n_nodes", n_nodes)) if v is not None}
    an = get_analyzer(op, rate, **opts)
    alpha, beta, theta, nu, logk = [], [], [], [], 0.0
    for i, (a, b) in enumerate(ivs):
        f = an.fit([i], "fwd", mode)
        g = an.fit([i], "bwd", mode)
        alpha.append(f.exponent - (b + epsilon))
        theta.append(f.drift)
        beta.append(g.exponent - (a - epsilon))
        nu.append(g.drift)
        logk = max(logk, f.c, g.c)
    return NonuniformContext(alpha, beta, theta, nu, math.exp(logk), float(epsilon), mode)


# ---- eta -------------------------------------------------------------------------------

def _log_eta_terms(ctx: NonuniformContext, j: int, k: MultiIndex, side: int):
    j0 = block_index(j, ctx.n)
    if side > 0:
        expo = ctx.beta[j0] - sum(ki * a for ki, a in zip(k, ctx.alpha))
        s_drift = ctx.nu[j0]
        t_drift = sum(ki * th for ki, th in zip(k, ctx.theta))
    else:
        expo = ctx.alpha[j0] - sum(ki * b for ki, b in zip(k, ctx.beta))
        s_drift = ctx.theta[j0]
        t_drift = sum(ki * v for ki, v in zip(k, ctx.nu))
    return expo, s_drift, t_drift


def _eta(ctx, rate, j, k, t, side: int, window: float, tol: float) -> float:
    k = MultiIndex(k)
    if len(k) != ctx.n:
        raise PreconditionError(f"multi-index needs {ctx.n} entries")
    expo, s_drift, t_drift = _log_eta_terms(ctx, j, k, side)
    ut = float(rate.log(t))

    def logval(us):
        return expo * (ut - us) + s_drift * np.abs(us) + t_drift * abs(ut)

    far = ut + side * window
    pts = 101
    prev = None
    for _ in range(12):
        us = np.linspace(ut, far, pts)
        if (ut < 0) != (far < 0):
            us = np.sort(np.append(us, 0.0))
        vals = logval(us)
        p = int(np.argmax(vals))
        lo, hi = us[max(p - 1, 0)], us[min(p + 1, us.size - 1)]
        fine = np.linspace(lo, hi, 201)
        best = max(float(vals[p]), float(np.max(logval(fine))))
        if prev is not None and abs(best - prev) <= math.log1p(tol):
            break
        prev = best
        pts = 2 * pts - 1
    edge = logval(np.array([far - side * 1e-3 * window, far]))
    # still increasing outward at the window edge: the sup may be infinite
    if edge[1] > edge[0] + 1e-12 * max(1.0, abs(edge[0])):
        raise InconclusiveError(
            f"eta sup not attained within |u_s - u_t| <= {window:g} at t = {t:g}",
            value=math.exp(best), trend={"edge": edge.tolist(), "best": best})
    return math.exp(best)


def eta_plus(ctx: NonuniformContext, rate: GrowthRate, j: int, k, t: float, *,
             window: float = 60.0, tol: float = 0.01) -> float:
    return _eta(ctx, rate, j, k, t, +1, window, tol)


def eta_minus(ctx: NonuniformContext, rate: GrowthRate, j: int, k, t: float, *,
              window: float = 60.0, tol: float = 0.01) -> float:
    return _eta(ctx, rate, j, k, t, -1, window, tol)


def eta_brute(ctx: NonuniformContext, rate: GrowthRate, j: int, k, t: float, side: int,
              window: float = 60.0, points: int = 100_000) -> float:
    """Plain scan in s (not u); an oracle for the grid search."""
    k = MultiIndex(k)
    expo, s_drift, t_drift = _log_eta_terms(ctx, j, k, side)
    ut = float(rate.log(t))
    s_far = float(rate.inverse_log(ut + side * window))
    ss = np.linspace(t, s_far, points)
    us = rate.log(ss)
    vals = expo * (ut - us) + s_drift * np.abs(us) + t_drift * abs(ut)
    return float(np.exp(np.max(vals)))


# ---- bounds and radii -------------------------------------------------------------------

def _branch(spectrum, j, k):
    ivs = intervals_of(spectrum, float(getattr(spectrum, "tol", 0.0) or 0.0))
    v = check_nonresonance(ivs, j, k)
    if v.status is Status.RESONANT:
        raise PreconditionError(f"pair (j={j}, k={tuple(MultiIndex(k))}) is resonant")
    return v


def weighted_factor(ctx: NonuniformContext, rate: GrowthRate, psi: adm.AdmissibleCandidate,
                    spectrum, j: int, k, t: float) -> float:
    """eta(t) * mu(t)^{+-dist/2} * zeta+-(t) on the applicable branch."""
    v = _branch(spectrum, j, k)
    delta = 0.5 * v.dist
    u = float(rate.log(t))
    if v.direction > 0:
        return eta_plus(ctx, rate, j, k, t) * math.exp(delta * u) * adm.zeta_plus(psi, rate, delta, t)
    return eta_minus(ctx, rate, j, k, t) * math.exp(-delta * u) * adm.zeta_minus(psi, rate, delta, t)


def nonuniform_h_bound(ctx: NonuniformContext, rate: GrowthRate, psi: adm.AdmissibleCandidate,
                       spectrum, j: int, k, t: float, x, dims: Sequence[int] | None = None) -> float:
    """(K^{|k|+1}/k!) * eta * mu^{+-dist/2} * zeta+- * prod |x_i|^{k_i}."""
    k = MultiIndex(k)
    x = np.asarray(x, float)
    dims = tuple(dims) if dims is not None else (1,) * len(k)
    offs = np.concatenate([[0], np.cumsum(dims)])
    prod = 1.0
    for b, kb in enumerate(k):
        if kb:
            prod *= float(np.linalg.norm(x[offs[b]:offs[b + 1]])) ** kb
    if prod == 0.0:
        return 0.0
    w = weighted_factor(ctx, rate, psi, spectrum, j, k, t)
    return ctx.K ** (k.order + 1) / k.factorial * w * prod


def _radius(K, order, n, z):
    if z <= 0.0:
        return math.inf
    return (2.0 * K ** (order + 1) * n * z) ** (1.0 / (1.0 - order))


def xi_nonuniform(ctx, rate, psi, spectrum, j, k, t) -> float:
    k = MultiIndex(k)
    return _radius(ctx.K, k.order, ctx.n, weighted_factor(ctx, rate, psi, spectrum, j, k, t))


@dataclass
class ShrinkageReport:
    rows: list

    def as_dict(self) -> dict:
        keys = ("t", "eta_plus", "eta_minus", "xi_uniform", "xi_nonuniform", "ratio")
        return {"rows": [dict(zip(keys, r)) for r in self.rows]}

    @property
    def min_ratio(self) -> float | None:
        vals = [r[5] for r in self.rows if r[5] is not None]
        return min(vals) if vals else None


def shrinkage_report(ctx: NonuniformContext, rate: GrowthRate, psi: adm.AdmissibleCandidate,
                     spectrum, j: int, k, grid: Sequence[float]) -> ShrinkageReport:
    """Per t: eta+, eta-, uniform xi (eta = 1), nonuniform xi and their ratio."""
    k = MultiIndex(k)
    v = _branch(spectrum, j, k)
    delta = 0.5 * v.dist
    rows = []
    for t in grid:
        t = float(t)
        u = float(rate.log(t))
        ep = eta_plus(ctx, rate, j, k, t)
        em = eta_minus(ctx, rate, j, k, t)
        if v.direction > 0:
            z = math.exp(delta * u) * adm.zeta_plus(psi, rate, delta, t)
            eta = ep
        else:
            z = math.exp(-delta * u) * adm.zeta_minus(psi, rate, delta, t)
            eta = em
        xu = _radius(ctx.K, k.order, ctx.n, z)
        xn = _radius(ctx.K, k.order, ctx.n, eta * z)
        ratio = xn / xu if math.isfinite(xu) and xu > 0 else None
        rows.append((t, ep, em, xu, xn, ratio))
    return ShrinkageReport(rows)
