"""Perturbations with Taylor data at the origin.

Positions j are 1-based, multi-indices k have one entry per block. The
coefficient tensor for (j, k) at time t is D^k F_j(t, 0) / k!.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import admissibility as adm
from .admissibility import AdmissibleCandidate, DecayDescriptor
from .errors import HypothesisViolation, InconclusiveError, NumericalError, PreconditionError
from .growth import GrowthRate
from .resonance import MultiIndex, multi_indices
from .taylor import estimate_coefficient, symmetrize, taylor_tensor_apply, tensor_shape


# ---- time profiles -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Profile:
    """Scalar coefficient profile c(t) with a majorant of |c|."""

    func: Callable
    decay: DecayDescriptor
    name: str
    params: tuple = ()
    kinks: tuple = ()

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))

    def describe(self) -> dict:
        return {"name": self.name, "params": list(self.params)}


def constant_profile(c: float = 1.0) -> Profile:
    return Profile(lambda t: np.full(np.shape(t), float(c)), DecayDescriptor(abs(c)), "constant", (c,))


def gaussian_profile(c: float = 1.0) -> Profile:
    return Profile(lambda t: c * np.exp(-t * t), DecayDescriptor(abs(c), gauss=1.0), "gaussian", (c,))


def exp_tent_profile(c: float = 1.0) -> Profile:
    return Profile(lambda t: c * np.exp(-np.abs(t)), DecayDescriptor(abs(c), rate=1.0),
                   "exp-tent", (c,), (0.0,))


def bounded_profile(c: float = 1.0) -> Profile:
    """c * (2 + sin t) / 3, which stays in [c/3, c]."""
    return Profile(lambda t: c * (2.0 + np.sin(t)) / 3.0, DecayDescriptor(abs(c)), "bounded", (c,))


def linear_profile(c: float = 1.0) -> Profile:
    """c * t; unbounded, used to exercise domination failures."""
    return Profile(lambda t: c * t, DecayDescriptor(abs(c), power=1.0), "linear", (c,))


PROFILES: dict[str, Callable[..., Profile]] = {
    "constant": constant_profile,
    "gaussian": gaussian_profile,
    "exp-tent": exp_tent_profile,
    "bounded": bounded_profile,
    "linear": linear_profile,
}


# ---- remainders ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Remainder:
    """Higher-order term R(t, x) = o(|x|^ell); ``order`` is its vanishing order."""

    func: Callable
    order: int
    name: str
    params: tuple = ()

    def __call__(self, t, x):
        return self.func(t, x)

    def describe(self) -> dict:
        return {"name": self.name, "params": list(self.params), "order": self.order}


def power_tail(ell: int, c: float = 1.0, profile: Profile | None = None) -> Remainder:
    """c * p(t) * |x|^(2q) * x with 2q + 1 > ell."""
    q = ell // 2 + 1
    prof = profile or constant_profile(1.0)

    def f(t, x):
        x = np.asarray(x, float)
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        return c * float(prof(t)) * r2 ** q * x

    return Remainder(f, 2 * q + 1, "power-tail", (c,))


def sine_tail(ell: int, c: float = 1.0) -> Remainder:
    """c * (sin(x) minus its Taylor polynomial through degree ell), componentwise."""
    terms = [(m, (-1) ** ((m - 1) // 2) / math.factorial(m)) for m in range(1, ell + 1, 2)]

    def f(t, x):
        x = np.asarray(x, float)
        out = np.sin(x)
        for m, a in terms:
            out = out - a * x ** m
        return c * out

    return Remainder(f, ell + 1, "sine-tail", (c,))


REMAINDERS = {"power-tail": power_tail, "sine-tail": sine_tail}


# ---- nonlinearities ------------------------------------------------------------------

class Nonlinearity:
    """Interface for F with Taylor data; subclasses set dims, order and psi."""

    dims: tuple
    order: int
    psi: AdmissibleCandidate

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def d(self) -> int:
        return int(sum(self.dims))

    @property
    def offsets(self) -> tuple:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.dims)]))

    def split(self, x) -> list:
        x = np.asarray(x, float)
        o = self.offsets
        return [x[..., o[b]:o[b + 1]] for b in range(self.n)]

    def eval(self, t: float, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t, x):
        return self.eval(t, x)

    def taylor_coeff(self, j: int, k: Sequence[int], t: float) -> np.ndarray:
        raise NotImplementedError

    def taylor_coeff_batch(self, j: int, k: Sequence[int], ts) -> np.ndarray:
        return np.stack([self.taylor_coeff(j, k, float(t)) for t in np.atleast_1d(ts)])

    def has_term(self, j: int, k: Sequence[int]) -> bool:
        """False only when the coefficient is known to vanish identically."""
        return True

    def coeff_noise(self, j: int, k: Sequence[int]) -> float:
        """Absolute noise level of taylor_coeff (0 for analytic data)."""
        return 0.0

    def domain_radius(self, t: float) -> float:
        return math.inf

    def kinks(self) -> tuple:
        return ()

    def taylor_polynomial(self, m: int, t: float, x) -> np.ndarray:
        """Sum over |k| = m and all positions of the k-homogeneous terms."""
        x = np.asarray(x, float)
        xs = self.split(x)
        out = np.zeros_like(x)
        o = self.offsets
        for k in multi_indices(self.n, m):
            for j in range(1, self.n + 1):
                if not self.has_term(j, k):
                    continue
                out[..., o[j - 1]:o[j]] += taylor_tensor_apply(self.taylor_coeff(j, k, t), k, xs)
        return out

    def describe(self) -> dict:
        return {"type": type(self).__name__, "dims": list(self.dims), "order": self.order,
                "psi": self.psi.describe()}


def _check_key(key, n: int, order: int):
    j, k = key
    k = MultiIndex(k)
    if not 1 <= int(j) <= n:
        raise PreconditionError(f"position {j} outside 1..{n}")
    if len(k) != n:
        raise PreconditionError(f"multi-index {tuple(k)} needs {n} entries")
    if not 2 <= k.order <= order:
        raise PreconditionError(f"term {tuple(k)} has order {k.order} outside 2..{order}")
    return int(j), k


@dataclass(frozen=True)
class TaylorTerm:
    tensor: np.ndarray
    profile: Profile


class PolynomialNonlinearity(Nonlinearity):
    """F(t, x) = sum of profile(t) * tensor[x]^k over the listed terms, plus a remainder.

    ``terms`` maps (j, k) to (tensor, profile) or a bare tensor (constant
    profile 1). Tensors are symmetrized within block groups. When ``psi`` is
    omitted a dominating candidate is assembled from the term majorants.
    """

    def __init__(self, dims: Sequence[int], terms: Mapping, order: int | None = None,
                 psi: AdmissibleCandidate | None = None, remainder: Remainder | None = None):
        self.dims = tuple(int(v) for v in dims)
        if not self.dims or any(v < 1 for v in self.dims):
            raise PreconditionError(f"bad block dimensions {dims!r}")
        orders = [MultiIndex(k).order for _, k in terms]
        self.order = int(order if order is not None else max(orders, default=2))
        if self.order < 2:
            raise PreconditionError("order must be at least 2")
        self.terms: dict = {}
        for key, val in terms.items():
            j, k = _check_key(key, self.n, self.order)
            if isinstance(val, TaylorTerm):
                tensor, prof = val.tensor, val.profile
            elif isinstance(val, tuple):
                tensor, prof = val
            else:
                tensor, prof = val, constant_profile(1.0)
            tensor = np.asarray(tensor, float)
            shape = tensor_shape(self.dims, j - 1, k)
            if tensor.shape != shape:
                if tensor.size == math.prod(shape):
                    tensor = tensor.reshape(shape)
                else:
                    raise PreconditionError(f"term ({j}, {tuple(k)}) needs shape {shape}, got {tensor.shape}")
            self.terms[(j, k)] = TaylorTerm(symmetrize(tensor, k), prof)
        self.remainder = remainder
        if remainder is not None and remainder.order <= self.order:
            raise PreconditionError(f"remainder vanishes only to order {remainder.order}")
        self.psi = psi if psi is not None else self._auto_psi()

    def _auto_psi(self) -> AdmissibleCandidate:
        """Sum over orders of m! * injective-norm bound * |profile| (a majorant)."""
        parts = []
        for (j, k), term in self.terms.items():
            w = math.factorial(k.order) * float(np.sqrt(np.sum(term.tensor ** 2)))
            parts.append((w, term.profile))
        if not parts:
            return adm.zero()

        def f(s):
            return sum(w * np.abs(p(s)) for w, p in parts)

        ds = [p.decay for _, p in parts]
        desc = DecayDescriptor(sum(w * d.scale for (w, _), d in zip(parts, ds)),
                               max(d.power for d in ds), min(d.rate for d in ds),
                               min(d.gauss for d in ds))
        kinks = tuple(sorted({k for _, p in parts for k in p.kinks}))
        return AdmissibleCandidate(f, desc, "term-majorant", (), kinks or (0.0,))

    def eval(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, float)
        if x.shape[-1] != self.d:
            raise PreconditionError(f"state has dimension {x.shape[-1]}, expected {self.d}")
        xs = self.split(x)
        out = np.zeros_like(x)
        o = self.offsets
        for (j, k), term in self.terms.items():
            c = float(term.profile(t))
            if c != 0.0:
                out[..., o[j - 1]:o[j]] += c * taylor_tensor_apply(term.tensor, k, xs)
        if self.remainder is not None:
            out = out + self.remainder(t, x)
        return out

    def taylor_coeff(self, j: int, k: Sequence[int], t: float) -> np.ndarray:
        return self.taylor_coeff_batch(j, k, [t])[0]

    def taylor_coeff_batch(self, j: int, k: Sequence[int], ts) -> np.ndarray:
        j, k = _check_key((j, k), self.n, max(self.order, MultiIndex(k).order))
        ts = np.atleast_1d(np.asarray(ts, float))
        term = self.terms.get((j, k))
        if term is None:
            shape = tensor_shape(self.dims, j - 1, k)
            return np.zeros((len(ts),) + shape)
        c = np.asarray(term.profile(ts), float).reshape((-1,) + (1,) * term.tensor.ndim)
        return c * term.tensor[None]

    def has_term(self, j: int, k: Sequence[int]) -> bool:
        return (int(j), MultiIndex(k)) in self.terms

    def kinks(self) -> tuple:
        return tuple(sorted({k for t in self.terms.values() for k in t.profile.kinks}))

    def describe(self) -> dict:
        out = super().describe()
        out["terms"] = [{"j": j, "k": list(k), "tensor": term.tensor.tolist(),
                         "profile": term.profile.describe()} for (j, k), term in self.terms.items()]
        out["remainder"] = self.remainder.describe() if self.remainder else None
        return out


# ---- norms and hypothesis checks -----------------------------------------------------

def _unit_samples(d: int, samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((samples, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.vstack([np.eye(d), -np.eye(d), u])


def coefficient_norm(nl: Nonlinearity, m: int, t: float, *, samples: int = 200, seed: int = 0) -> float:
    """m! * max over sampled unit u of |P_m(t, u)|, P_m the order-m Taylor part.

    This under-estimates the injective norm by at most the sampling gap; in
    dimension 1 it is exact.
    """
    units = _unit_samples(nl.d, samples, seed)
    vals = nl.taylor_polynomial(m, t, units)
    return math.factorial(m) * float(np.max(np.linalg.norm(vals, axis=-1)))


@dataclass
class H2Report:
    passed: bool
    mode: str
    violations: list = field(default_factory=list)
    admissibility: dict = field(default_factory=dict)
    reason: str = ""

    def as_dict(self) -> dict:
        return {"passed": self.passed, "mode": self.mode, "reason": self.reason,
                "violations": [{"m": m, "t": t, "norm": v, "psi": p} for m, t, v, p in self.violations],
                "admissibility": self.admissibility}


def default_h2_grid(rate: GrowthRate, horizon: float = 8.0, points: int = 65) -> np.ndarray:
    return np.array([rate.inverse_log(u) for u in np.linspace(-horizon, horizon, points)])


def verify_H2(nl: Nonlinearity, rate: GrowthRate, mode: str = "admissible", *,
              deltas: Sequence[float] = (0.5,), grid: Sequence[float] | None = None,
              samples: int = 200, seed: int = 0, rel_tol: float = 1e-9,
              strict: bool = True) -> H2Report:
    """Check |D^m F(t, 0)| <= psi(t) for 2 <= m <= ell on a grid, then admissibility of psi.

    With ``strict`` a failure raises HypothesisViolation carrying the
    (m, t) list; otherwise the report is returned with ``passed`` False.
    """
    if mode not in ("admissible", "uniform"):
        raise PreconditionError(f"unknown mode {mode!r}")
    ts = np.asarray(grid if grid is not None else default_h2_grid(rate), float)
    psi = nl.psi
    violations = []
    for t in ts:
        bound = float(psi(t))
        for m in range(2, nl.order + 1):
            v = coefficient_norm(nl, m, float(t), samples=samples, seed=seed)
            if v > bound * (1.0 + rel_tol) + 1e-300:
                violations.append((m, float(t), v, bound))
    report = H2Report(not violations, mode, violations)
    if violations:
        report.reason = f"domination fails at {len(violations)} grid point(s)"
    else:
        for delta in deltas:
            try:
                if mode == "uniform":
                    rep = adm.check_uniform_admissibility(psi, rate, delta)
                    report.admissibility[str(delta)] = rep.as_dict()
                else:
                    adm.check_admissibility(psi, rate, [delta], ts)
                    report.admissibility[str(delta)] = {"admissible": True}
            except InconclusiveError as exc:
                report.passed = False
                report.reason = f"uniform admissibility not established at delta={delta}: {exc}"
                report.admissibility[str(delta)] = {"uniform": False, "trend": exc.trend}
            except NumericalError as exc:
                report.passed = False
                report.reason = f"psi is not admissible at delta={delta}: {exc}"
                report.admissibility[str(delta)] = {"admissible": False}
    if strict and not report.passed:
        raise HypothesisViolation(report.reason, violations=[(m, t) for m, t, _, _ in violations])
    return report


@dataclass
class ConsistencyReport:
    passed: bool
    failures: list = field(default_factory=list)
    max_coeff_error: float = 0.0


def check_consistency(nl: Nonlinearity, ts: Sequence[float] = (-1.0, 0.0, 2.0), *,
                      tol: float = 1e-4, seed: int = 0) -> ConsistencyReport:
    """F(t, 0) = 0, D_2 F(t, 0) = 0, supplied coefficients match fitted ones, remainder is o(|x|^ell)."""
    rng = np.random.default_rng(seed)
    fails, worst = [], 0.0
    zero = np.zeros(nl.d)
    for t in ts:
        t = float(t)
        f0 = np.max(np.abs(nl.eval(t, zero)))
        if f0 > 1e-12:
            fails.append(("F(t,0)", t, float(f0)))
        field_t = lambda x, t=t: nl.eval(t, x)
        for j in range(1, nl.n + 1):
            lin = [estimate_coefficient(field_t, nl.dims, j - 1, e) for e in multi_indices(nl.n, 1)]
            for e, est in zip(multi_indices(nl.n, 1), lin):
                if est.norm > 1e-6:
                    fails.append(("D2F(t,0)", t, j, tuple(e), est.norm))
            for m in range(2, nl.order + 1):
                for k in multi_indices(nl.n, m):
                    est = estimate_coefficient(field_t, nl.dims, j - 1, k)
                    err = float(np.max(np.abs(est.tensor - nl.taylor_coeff(j, k, t))))
                    worst = max(worst, err)
                    if err > tol:
                        fails.append(("coefficient", t, j, tuple(k), err))
        u = rng.standard_normal(nl.d)
        u /= np.linalg.norm(u)
        ratios = []
        for r in (1e-2, 1e-3):
            x = r * u
            approx = sum(nl.taylor_polynomial(m, t, x) for m in range(2, nl.order + 1))
            ratios.append(float(np.linalg.norm(nl.eval(t, x) - approx)) / r ** nl.order)
        if ratios[1] > max(ratios[0], 1e-6):
            fails.append(("remainder", t, ratios))
    return ConsistencyReport(not fails, fails, worst)
