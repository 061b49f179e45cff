"""Admissibility integrals zeta_plus / zeta_minus and uniform admissibility.

Semi-infinite integrals are summed over doubling panels. After every panel
the remaining tail is bounded using the candidate's decay descriptor, a
majorant of psi declared by the caller, and summation stops once that bound
drops below the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AdmissibilityDivergence, InconclusiveError, NumericalError, PreconditionError
from .growth import GrowthRate
from .quadrature import integrate

RTOL = 1e-9
ATOL = 1e-12
HORIZON_CAP = 1e8


@dataclass(frozen=True)
class DecayDescriptor:
    """Majorant psi(s) <= scale * (1+|s|)^power * exp(-rate|s| - gauss s^2).

    ``rate`` may be negative for growing candidates; the descriptor only has
    to be an upper bound.
    """

    scale: float = 1.0
    power: float = 0.0
    rate: float = 0.0
    gauss: float = 0.0

    def majorant(self, s) -> np.ndarray:
        a = np.abs(np.asarray(s, dtype=float))
        if self.scale == 0.0:
            return np.zeros_like(a)
        return self.scale * np.exp(self.power * np.log1p(a) - self.rate * a - self.gauss * a * a)

    def as_dict(self) -> dict:
        return dict(scale=self.scale, power=self.power, rate=self.rate, gauss=self.gauss)


@dataclass(frozen=True, eq=False)
class AdmissibleCandidate:
    """A nonnegative function psi with a declared decay descriptor."""

    func: Callable = field(repr=False)
    decay: DecayDescriptor
    name: str = "custom"
    params: tuple = ()
    kinks: tuple = (0.0,)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.asarray(self.func(s), dtype=float)
        if out.shape != s.shape:
            out = np.broadcast_to(out, s.shape).astype(float)
        return out

    def scaled(self, factor: float) -> "AdmissibleCandidate":
        if factor < 0:
            raise PreconditionError("admissible candidates may only be scaled by factors >= 0")
        f = self.func
        d = self.decay
        return AdmissibleCandidate(lambda s: factor * f(s),
                                   DecayDescriptor(d.scale * factor, d.power, d.rate, d.gauss),
                                   f"{factor:.6g}*{self.name}", self.params, self.kinks)

    def check(self, grid: Sequence[float] | None = None) -> None:
        g = np.asarray(grid if grid is not None else np.linspace(-50, 50, 2001), float)
        vals = self(g)
        if np.any(vals < 0) or np.any(~np.isfinite(vals)):
            raise PreconditionError(f"psi {self.name!r} must be finite and nonnegative")
        if np.any(vals > self.decay.majorant(g) * (1 + 1e-12) + 1e-300):
            raise PreconditionError(f"psi {self.name!r} exceeds its decay descriptor")

    def describe(self) -> dict:
        return {"name": self.name, "params": list(self.params), "decay": self.decay.as_dict()}


def zero() -> AdmissibleCandidate:
    return AdmissibleCandidate(lambda s: np.zeros_like(s), DecayDescriptor(0.0), "zero")


def gaussian(amplitude: float = 1.0) -> AdmissibleCandidate:
    """psi(s) = amplitude * exp(-s^2)."""
    return AdmissibleCandidate(lambda s: amplitude * np.exp(-s * s),
                               DecayDescriptor(amplitude, 0.0, 0.0, 1.0), "gaussian", (amplitude,))


def exp_tent(amplitude: float = 1.0) -> AdmissibleCandidate:
    """psi(s) = amplitude * exp(-|s|)."""
    return AdmissibleCandidate(lambda s: amplitude * np.exp(-np.abs(s)),
                               DecayDescriptor(amplitude, 0.0, 1.0), "exp-tent", (amplitude,))


def bounded_const(c: float = 1.0) -> AdmissibleCandidate:
    if c < 0:
        raise PreconditionError("bounded-const needs c >= 0")
    return AdmissibleCandidate(lambda s: np.full_like(s, float(c)), DecayDescriptor(float(c)),
                               "bounded-const", (c,), ())


def poly(coeffs: Sequence[float]) -> AdmissibleCandidate:
    """psi(s) = |p(s)| with p given by ascending coefficients."""
    cs = [float(c) for c in coeffs]
    deg = max(len(cs) - 1, 0)
    scale = sum(abs(c) for c in cs)
    return AdmissibleCandidate(lambda s: np.abs(np.polynomial.polynomial.polyval(s, cs)),
                               DecayDescriptor(scale, float(deg)), "poly", tuple(cs))


def lorentzian(amplitude: float = 1.0) -> AdmissibleCandidate:
    """psi(s) = amplitude / (1 + s^2)."""
    return AdmissibleCandidate(lambda s: amplitude / (1.0 + s * s),
                               DecayDescriptor(2.0 * amplitude, -2.0), "lorentzian", (amplitude,))


def exp_growth(rate: float = 1.0) -> AdmissibleCandidate:
    """psi(s) = exp(rate |s|); not admissible for small delta."""
    return AdmissibleCandidate(lambda s: np.exp(rate * np.abs(s)), DecayDescriptor(1.0, 0.0, -rate),
                               "exp-growth", (rate,))


def tabulated(ts: Sequence[float], values: Sequence[float],
              decay: DecayDescriptor | None) -> AdmissibleCandidate:
    """Piecewise-linear psi; outside the table the decay majorant is used."""
    if decay is None:
        raise PreconditionError("tabulated psi requires a decay descriptor")
    ts = np.asarray(ts, float)
    vals = np.asarray(values, float)
    if ts.ndim != 1 or ts.shape != vals.shape or ts.size < 2 or np.any(np.diff(ts) <= 0):
        raise PreconditionError("tabulated psi needs increasing nodes and matching values")
    if np.any(vals < 0):
        raise PreconditionError("tabulated psi must be nonnegative")

    def f(s):
        s = np.asarray(s, float)
        out = np.interp(s, ts, vals)
        outside = (s < ts[0]) | (s > ts[-1])
        out[outside] = decay.majorant(s[outside])
        return out

    return AdmissibleCandidate(f, decay, "tabulated", (), tuple(ts))


PRESETS = {
    "zero": zero,
    "gaussian": gaussian,
    "exp-tent": exp_tent,
    "bounded-const": bounded_const,
    "poly": poly,
    "lorentzian": lorentzian,
    "exp-growth": exp_growth,
}


# ---- integrals ---------------------------------------------------------------------

def _weighted(psi, rate, delta, sign):
    def f(s):
        return psi(s) * np.exp(sign * delta * rate.log(s))
    return f


def _tail_bound(g: Callable, start: float, direction: int, limit: float) -> float:
    """Upper sum of the majorant over doubling panels beyond ``start``.

    Once consecutive panel sums shrink, the rest is bounded by the geometric
    series with the observed ratio. Returns early once the bound clearly
    exceeds ``limit``, since the caller then keeps integrating anyway.
    """
    total = 0.0
    width = 1.0
    lo = start
    prev = None
    for _ in range(200):
        hi = lo + direction * width
        term = float(np.max(g(np.linspace(lo, hi, 17)))) * width
        if not math.isfinite(term):
            return math.inf
        total += term
        if total > 1e3 * limit and total > 0:
            return total
        if prev is not None and 0 < term < 0.95 * prev:
            ratio = term / prev
            rest = term * ratio / (1.0 - ratio)
            if rest <= 1e-2 * total or total + rest == 0.0:
                return total + rest
        elif term == 0.0 and prev == 0.0:
            return total
        prev = term
        lo = hi
        width *= 2.0
        if abs(lo - start) > HORIZON_CAP * max(1.0, abs(start)):
            return math.inf
    return math.inf


def _semi_infinite(psi: AdmissibleCandidate, rate: GrowthRate, delta: float, t: float,
                   direction: int, rtol: float, atol: float) -> float:
    sign = -direction
    f = _weighted(psi, rate, delta, sign)
    if psi.decay.scale == 0.0:
        return 0.0
    maj = psi.decay.majorant

    def g(s):
        return maj(s) * np.exp(sign * delta * rate.log(s))

    kinks = [k for k in psi.kinks]
    total = 0.0
    trace = []
    lo = float(t)
    width = 1.0
    while True:
        hi = lo + direction * width
        a, b = (lo, hi) if direction > 0 else (hi, lo)
        pts = [k for k in kinks if a < k < b]
        if width <= 64:
            pts += [float(x) for x in np.arange(math.ceil(a), math.floor(b) + 1)]
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                part = float(integrate(f, a, b, rtol=rtol * 0.1, atol=atol * 0.1, points=pts).value)
        except NumericalError as exc:
            raise AdmissibilityDivergence(
                f"admissibility integral for {psi.name!r} failed on [{a:g}, {b:g}]: {exc}",
                trace=trace[-10:]) from exc
        if not math.isfinite(part):
            raise AdmissibilityDivergence(
                f"admissibility integrand for {psi.name!r} overflowed on [{a:g}, {b:g}]",
                trace=trace[-10:])
        total += part
        trace.append((hi, total))
        tol = rtol * abs(total) + atol
        with np.errstate(over="ignore", invalid="ignore"):
            tail = _tail_bound(g, hi, direction, tol)
        if tail <= tol:
            return total
        if abs(hi - t) > HORIZON_CAP * max(1.0, abs(t)):
            raise AdmissibilityDivergence(
                f"admissibility integral for {psi.name!r} with delta={delta:g} did not settle "
                f"before |s - t| = {HORIZON_CAP:g}", trace=trace[-10:])
        lo = hi
        width *= 2.0


def zeta_plus(psi: AdmissibleCandidate, rate: GrowthRate, delta: float, t: float, *,
              rtol: float = RTOL, atol: float = ATOL) -> float:
    """Integral of psi(s) mu(s)^{-delta} over [t, inf)."""
    if not delta > 0:
        raise PreconditionError("zeta_plus needs delta > 0")
    return _semi_infinite(psi, rate, float(delta), float(t), +1, rtol, atol)


def zeta_minus(psi: AdmissibleCandidate, rate: GrowthRate, delta: float, t: float, *,
               rtol: float = RTOL, atol: float = ATOL) -> float:
    """Integral of psi(s) mu(s)^{+delta} over (-inf, t]."""
    if not delta > 0:
        raise PreconditionError("zeta_minus needs delta > 0")
    return _semi_infinite(psi, rate, float(delta), float(t), -1, rtol, atol)


@dataclass
class ZetaProfile:
    """zeta_plus, zeta_minus and their mu-weighted sum on a grid."""

    grid: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    weighted_plus: np.ndarray
    weighted_minus: np.ndarray

    @property
    def weighted(self) -> np.ndarray:
        return self.weighted_plus + self.weighted_minus


def zeta_profile(psi: AdmissibleCandidate, rate: GrowthRate, delta: float,
                 grid: Sequence[float], *, rtol: float = RTOL, atol: float = ATOL) -> ZetaProfile:
    """Cumulative evaluation of both integrals on a sorted grid."""
    g = np.asarray(grid, float)
    if g.ndim != 1 or g.size == 0 or np.any(np.diff(g) <= 0):
        raise PreconditionError("zeta grid must be nonempty and strictly increasing")
    fp = _weighted(psi, rate, delta, -1.0)
    fm = _weighted(psi, rate, delta, +1.0)
    plus = np.empty(g.size)
    minus = np.empty(g.size)
    plus[-1] = zeta_plus(psi, rate, delta, g[-1], rtol=rtol, atol=atol)
    minus[0] = zeta_minus(psi, rate, delta, g[0], rtol=rtol, atol=atol)
    for p in range(g.size - 2, -1, -1):
        pts = [k for k in psi.kinks if g[p] < k < g[p + 1]]
        plus[p] = plus[p + 1] + integrate(fp, g[p], g[p + 1], rtol=rtol, atol=atol * 0.1,
                                          points=pts).value
    for p in range(1, g.size):
        pts = [k for k in psi.kinks if g[p - 1] < k < g[p]]
        minus[p] = minus[p - 1] + integrate(fm, g[p - 1], g[p], rtol=rtol, atol=atol * 0.1,
                                            points=pts).value
    logs = rate.log(g)
    return ZetaProfile(g, plus, minus, np.exp(delta * logs) * plus, np.exp(-delta * logs) * minus)


@dataclass
class UniformityReport:
    uniform: bool
    sup_value: float
    delta: float
    profile: ZetaProfile = field(repr=False)

    def as_dict(self) -> dict:
        return {"uniform": self.uniform, "sup_value": self.sup_value, "delta": self.delta}


def default_grid(rate: GrowthRate, horizon: float = 30.0, points: int = 301) -> np.ndarray:
    """Grid uniform in log mu on [-horizon, horizon]; plain t-grid for e^t."""
    return rate.inverse_log(np.linspace(-horizon, horizon, points))


def check_uniform_admissibility(psi: AdmissibleCandidate, rate: GrowthRate, delta: float,
                                grid: Sequence[float] | None = None, *,
                                growth_tol: float = 0.01, rtol: float = RTOL,
                                atol: float = ATOL) -> UniformityReport:
    """Check boundedness of mu^delta zeta_plus + mu^{-delta} zeta_minus on a grid.

    The weighted sum is uniform when its running maximum, taken outward from
    the centre of the grid, grows by less than ``growth_tol`` (relative)
    over the outermost tenth of the grid on either side.
    """
    if not delta > 0:
        raise PreconditionError("uniform admissibility needs delta > 0")
    g = default_grid(rate) if grid is None else np.asarray(grid, float)
    if not (np.any(g < 0) and np.any(g > 0)):
        raise PreconditionError("uniformity grid must span both signs")
    prof = zeta_profile(psi, rate, delta, g, rtol=rtol, atol=atol)
    w = prof.weighted
    sup = float(np.max(w))
    if sup == 0.0:
        return UniformityReport(True, 0.0, float(delta), prof)
    u = np.abs(rate.log(g))
    umax = float(np.max(u))
    inner = u <= 0.9 * umax
    inner_sup = float(np.max(w[inner])) if np.any(inner) else 0.0
    if sup <= (1.0 + growth_tol) * inner_sup:
        return UniformityReport(True, sup, float(delta), prof)
    edge = {"t_left": float(g[0]), "w_left": float(w[0]), "t_right": float(g[-1]),
            "w_right": float(w[-1]), "inner_sup": inner_sup, "sup": sup}
    raise InconclusiveError(
        f"weighted admissibility integral of {psi.name!r} keeps growing at the grid edge "
        f"(sup {sup:.6g} vs inner sup {inner_sup:.6g})", value=sup, trend=edge)


def check_admissibility(psi: AdmissibleCandidate, rate: GrowthRate, deltas: Sequence[float],
                        ts: Sequence[float] = (-10.0, 0.0, 10.0)) -> dict:
    """Finite zeta values for every delta and t; divergence raises."""
    out = {}
    for delta in deltas:
        vals = [(float(t), zeta_plus(psi, rate, delta, t), zeta_minus(psi, rate, delta, t))
                for t in ts]
        out[float(delta)] = vals
    return out
