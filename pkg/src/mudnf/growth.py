"""Differentiable growth rates.

A rate is stored through log mu, which keeps every ratio mu(t)/mu(s) finite
far beyond the range where mu itself overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DomainError, InvariantError, PreconditionError

NUMERIC_DERIVATIVE_STEP = 1e-6

_KINDS = ("exponential", "polynomial", "induced")


def _as_vectorized(f: Callable) -> Callable:
    """Wrap ``f`` so that it accepts arrays even if written for scalars."""

    def g(t):
        arr = np.asarray(t, dtype=float)
        try:
            out = np.asarray(f(arr), dtype=float)
            if out.shape == arr.shape:
                return out
        except (TypeError, ValueError):
            pass
        flat = np.array([float(f(float(v))) for v in arr.ravel()])
        return flat.reshape(arr.shape)

    return g


@dataclass(frozen=True, eq=False)
class GrowthRate:
    """A strictly increasing rate mu with mu(0) = 1.

    ``log_fn`` returns log mu, ``dlog_fn`` returns mu'/mu and ``inv_fn`` maps
    a log value u back to the unique t with log mu(t) = u. All three must be
    vectorized over numpy arrays.
    """

    kind: str
    log_fn: Callable = field(repr=False)
    dlog_fn: Callable = field(repr=False)
    inv_fn: Callable = field(repr=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise PreconditionError(f"unknown rate kind {self.kind!r}")

    def log(self, t):
        return self.log_fn(np.asarray(t, dtype=float))

    def eval(self, t):
        return np.exp(self.log(t))

    __call__ = eval

    def dlog(self, t):
        return self.dlog_fn(np.asarray(t, dtype=float))

    def deriv(self, t):
        return self.eval(t) * self.dlog(t)

    def inverse_log(self, u):
        return self.inv_fn(np.asarray(u, dtype=float))

    def describe(self) -> dict:
        return {"kind": self.kind, "name": self.name or self.kind}


def _exp_log(t):
    return np.array(t, dtype=float, copy=True)


def _exp_dlog(t):
    return np.ones_like(t, dtype=float)


def exponential() -> GrowthRate:
    """The rate mu(t) = e^t."""
    return GrowthRate("exponential", _exp_log, _exp_dlog, _exp_log, "exp")


def _poly_log(t):
    return np.sign(t) * np.log1p(np.abs(t))


def _poly_dlog(t):
    return 1.0 / (1.0 + np.abs(t))


def _poly_inv(u):
    return np.sign(u) * np.expm1(np.abs(u))


def polynomial() -> GrowthRate:
    """The rate induced by nu(t) = t + 1."""
    return GrowthRate("polynomial", _poly_log, _poly_dlog, _poly_inv, "poly")


def _check_nu(nu: Callable, grid: np.ndarray) -> None:
    nu0 = float(nu(np.array([0.0]))[0])
    if not math.isfinite(nu0) or abs(nu0 - 1.0) > 1e-12:
        raise PreconditionError(f"induce requires nu(0) = 1, got {nu0!r}")
    with np.errstate(over="ignore"):
        vals = nu(grid)
    # float overflow far out is not a violation; check where nu is representable
    over = np.isposinf(vals) & (grid > 100.0)
    if np.any(over):
        keep = grid < grid[over].min()
        grid, vals = grid[keep], vals[keep]
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise PreconditionError("nu must be finite and positive on [0, inf)")
    if np.any(np.diff(vals) <= 0):
        bad = grid[1:][np.diff(vals) <= 0][0]
        raise PreconditionError(f"nu is not strictly increasing near t={bad:g}")


def induce(
    nu: Callable,
    dnu: Callable | None = None,
    *,
    allow_numeric_derivative: bool = False,
    name: str = "induced",
    check_grid: Sequence[float] | None = None,
) -> GrowthRate:
    """Build the rate with mu = nu on [0, inf) and mu(t) = 1/nu(|t|) for t < 0.

    The derivative of nu is needed for mu'/mu. Pass ``dnu`` or set
    ``allow_numeric_derivative`` to accept central differences with step 1e-6.
    """
    nu_v = _as_vectorized(nu)
    grid = (np.asarray(check_grid, dtype=float) if check_grid is not None
            else np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 200)]))
    _check_nu(nu_v, grid)

    if dnu is not None:
        dnu_v = _as_vectorized(dnu)
    elif allow_numeric_derivative:
        h = NUMERIC_DERIVATIVE_STEP

        def dnu_v(t):
            t = np.asarray(t, dtype=float)
            # one-sided at the origin, where nu is only defined on the right
            lo = np.maximum(t - h, 0.0)
            hi = lo + 2 * h
            return (nu_v(hi) - nu_v(lo)) / (hi - lo)
    else:
        raise PreconditionError(
            "induce needs dnu, or allow_numeric_derivative=True for central differences")

    def log_fn(t):
        t = np.asarray(t, dtype=float)
        return np.sign(t) * np.log(nu_v(np.abs(t)))

    def dlog_fn(t):
        a = np.abs(np.asarray(t, dtype=float))
        return dnu_v(a) / nu_v(a)

    def _inv_scalar(u: float) -> float:
        if u == 0.0:
            return 0.0
        target = abs(u)
        hi = 1.0
        while math.log(float(nu_v(np.array([hi]))[0])) < target:
            hi *= 2.0
            if hi > 1e300:
                raise DomainError(f"cannot invert rate at log value {u!r}")
        root = brentq(lambda s: math.log(float(nu_v(np.array([s]))[0])) - target,
                      0.0, hi, xtol=1e-14, rtol=1e-14, maxiter=500)
        return math.copysign(root, u)

    def inv_fn(u):
        u = np.asarray(u, dtype=float)
        flat = np.array([_inv_scalar(float(v)) for v in u.ravel()])
        return flat.reshape(u.shape)

    return GrowthRate("induced", log_fn, dlog_fn, inv_fn, name)


def induce_tabulated(ts: Sequence[float], values: Sequence[float],
                     name: str = "tabulated") -> GrowthRate:
    """Induced rate from tabulated (t, nu(t)) pairs starting at (0, 1).

    log nu is interpolated with a monotone cubic and continued linearly
    beyond the last node.
    """
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(values, dtype=float)
    if ts.ndim != 1 or ts.shape != vals.shape or ts.size < 2:
        raise PreconditionError("tabulated rate needs matching 1-D arrays of length >= 2")
    if ts[0] != 0.0 or vals[0] != 1.0:
        raise PreconditionError("tabulated rate must start at (0, 1)")
    if np.any(np.diff(ts) <= 0) or np.any(np.diff(vals) <= 0):
        raise PreconditionError("tabulated rate must be strictly increasing in t and nu")
    logs = np.log(vals)
    interp = PchipInterpolator(ts, logs, extrapolate=False)
    dinterp = interp.derivative()
    t_end, l_end = ts[-1], logs[-1]
    slope = float(dinterp(t_end))
    if slope <= 0:
        slope = (logs[-1] - logs[-2]) / (ts[-1] - ts[-2])

    def lognu(a):
        a = np.asarray(a, dtype=float)
        inside = a <= t_end
        out = np.empty_like(a)
        out[inside] = interp(a[inside])
        out[~inside] = l_end + slope * (a[~inside] - t_end)
        return out

    def dlognu(a):
        a = np.asarray(a, dtype=float)
        inside = a <= t_end
        out = np.empty_like(a)
        out[inside] = dinterp(a[inside])
        out[~inside] = slope
        return out

    return induce(lambda a: np.exp(lognu(a)), lambda a: np.exp(lognu(a)) * dlognu(a),
                  name=name, check_grid=np.linspace(0.0, t_end * 2.0, 400))


def power_rate(p: float) -> GrowthRate:
    """Induced rate for nu(t) = (t + 1)^p, p > 0."""
    if p <= 0:
        raise PreconditionError("power rate needs p > 0")
    return induce(lambda t: (np.asarray(t) + 1.0) ** p,
                  lambda t: p * (np.asarray(t) + 1.0) ** (p - 1.0),
                  name=f"power({p:g})")


NAMED_INDUCED = {
    "linear": lambda: power_rate(1.0),
    "quadratic": lambda: power_rate(2.0),
    "cubic": lambda: power_rate(3.0),
    # nu = e^t induces e^t itself; the closed form avoids overflow in log(nu)
    "exp": lambda: exponential(),
}


def log_ratio(rate: GrowthRate, t: float, s: float) -> float:
    """Return log(mu(t)/mu(s)) computed through log mu."""
    lt = float(rate.log(t))
    ls = float(rate.log(s))
    if not (math.isfinite(lt) and math.isfinite(ls)):
        raise DomainError(f"non-finite rate value at t={t!r} or s={s!r}")
    return lt - ls


def shift_coefficient(rate: GrowthRate, t: float) -> float:
    """Return mu'(t)/mu(t), the coefficient multiplying gamma in the shifted system."""
    lt = float(rate.log(t))
    if not math.isfinite(lt):
        raise InvariantError(f"mu({t!r}) is not a positive finite number")
    d = float(rate.dlog(t))
    if not math.isfinite(d):
        raise DomainError(f"mu'({t!r}) is not finite")
    return d


def check_rate(rate: GrowthRate, grid: Sequence[float] | None = None) -> None:
    """Raise :class:`InvariantError` if sampled values break the rate invariants."""
    g = np.sort(np.asarray(grid if grid is not None else np.linspace(-20, 20, 401), float))
    logs = rate.log(g)
    if rate.kind != "induced" and float(rate.log(0.0)) != 0.0:
        raise InvariantError("mu(0) must equal 1")
    if np.any(~np.isfinite(logs)):
        raise InvariantError("mu must be positive and finite on the grid")
    if np.any(np.diff(logs) <= 0):
        raise InvariantError("mu must be strictly increasing on the grid")
    if np.any(rate.dlog(g) <= 0):
        raise InvariantError("mu' must be positive on the grid")
    if rate.kind == "induced":
        sym = rate.log(g) + rate.log(-g)
        if np.max(np.abs(sym)) > 1e-12 * max(1.0, np.max(np.abs(logs))):
            raise InvariantError("induced rate must satisfy mu(-t) = 1/mu(t)")
