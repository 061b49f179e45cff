"""The transformed field after one elimination, and the iterated normal form.

With z = H^{-1}(t, x), the transformed field is

    G~(t, x) = D_1 h(t, z) + (I + D_2 h(t, z)) [A(t) z + F(t, z)]

and G = G~ - A x is the new perturbation. Coefficients of G up to the
eliminated order are known exactly (copied from F, with the (j, k) entry
zeroed); higher ones are fitted on demand.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .admissibility import AdmissibleCandidate
from .errors import (DomainError, MudnfError, NumericalError, PreconditionError,
                     VerificationError)
from .growth import GrowthRate
from .homological import ConjugationMap, QuadControls
from .linear import EvolutionOperator
from .nonlinearity import Nonlinearity, coefficient_norm, default_h2_grid, verify_H2
from .resonance import MultiIndex, Status, check_H3, check_nonresonance, intervals_of, iter_pairs, multi_indices
from .taylor import (CoeffEstimate, estimate_coefficient, fit_origin, richardson,
                     taylor_tensor_apply, tensor_from_fit, tensor_shape)

DEFAULT_RADII = (1e-2, 5e-3, 2.5e-3)
DEFAULT_THRESHOLD = 1e-4
SAMPLE_TIMES = (-2.0, 0.0, 3.0)


def _linear(op: EvolutionOperator, t: float, x: np.ndarray) -> np.ndarray:
    return x @ op.system.A(t).T


class TransformedSystem:
    """G~, G and the remainder R for one conjugation map."""

    def __init__(self, cmap: ConjugationMap):
        self.map = cmap
        self.op = cmap.op
        self.F = cmap.nl

    def original_rhs(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, float)
        return _linear(self.op, t, x) + self.F.eval(t, x)

    def transformed_rhs(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, float)
        m = self.map
        z = m.H_inverse(t, x)
        w = _linear(self.op, t, z) + self.F.eval(t, z)
        return m.d1h_eval(t, z, check=False) + w + m.d2h_eval(t, z, w, check=False)

    def G(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, float)
        return self.transformed_rhs(t, x) - _linear(self.op, t, x)

    def remainder_R(self, t: float, x) -> np.ndarray:
        """R with G~ = A x + F(t, x) - [C(t)[x]^k at position j] + R(t, x)."""
        x = np.asarray(x, float)
        m = self.map
        z = m.H_inverse(t, x)
        fz = self.F.eval(t, z)
        fx = self.F.eval(t, x)
        out = fz - fx
        sl = self.op.system.slice(m.j0)
        c = self.F.taylor_coeff(m.j, m.k, t)
        sys = self.op.system
        kx = taylor_tensor_apply(c, m.k, sys.split(x))
        kz = taylor_tensor_apply(c, m.k, sys.split(z))
        out[..., sl] += m.d2h_eval(t, z, fz, check=False)[..., sl] + kx - kz
        return out

    def eliminated_term(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, float)
        m = self.map
        out = np.zeros_like(x)
        out[..., self.op.system.slice(m.j0)] = taylor_tensor_apply(
            self.F.taylor_coeff(m.j, m.k, t), m.k, self.op.system.split(x))
        return out


def estimate_origin_coeff(field, dims: Sequence[int], j: int, m: Sequence[int], t: float, *,
                          radii: Sequence[float] = DEFAULT_RADII, domain_radius: float = math.inf,
                          degree: int | None = None) -> CoeffEstimate:
    """Fitted m-th Taylor coefficient at x = 0 of ``field(t, x)`` at position j (1-based)."""
    return estimate_coefficient(lambda x: field(t, x), dims, int(j) - 1, m, radii=radii,
                                degree=degree, domain_radius=domain_radius)


class DerivedNonlinearity(Nonlinearity):
    """G = G~ - A x after eliminating (j, k) from a base nonlinearity."""

    def __init__(self, ts: TransformedSystem, *, radii: Sequence[float] = DEFAULT_RADII,
                 psi_grid: Sequence[float] | None = None):
        self.ts = ts
        self.base = ts.F
        self.dims = tuple(self.base.dims)
        self.order = self.base.order
        self.radii = tuple(radii)
        self.degree = self.order + 4
        self.eliminated = (ts.map.j, ts.map.k)
        self._fits: dict[float, list] = {}
        self._coeffs: dict[tuple, CoeffEstimate] = {}
        self._noise: dict[tuple, float] = {}
        self._psi: AdmissibleCandidate | None = None
        self._psi_grid = psi_grid
        self.psi_factor: float | None = None

    # ---- evaluation ------------------------------------------------------------------
    def eval(self, t: float, x) -> np.ndarray:
        return self.ts.G(t, x)

    def domain_radius(self, t: float) -> float:
        return 0.5 * min(self.ts.map.trumpet_radius(t), 2.0 * self.base.domain_radius(t))

    def kinks(self) -> tuple:
        return self.base.kinks()

    def _exact(self, j: int, k: MultiIndex) -> bool:
        return k.order <= self.ts.map.k.order

    def has_term(self, j: int, k) -> bool:
        k = MultiIndex(k)
        if (int(j), k) == self.eliminated:
            return False
        if self._exact(j, k):
            return self.base.has_term(j, k)
        return True

    def _stencil(self, t: float) -> list:
        got = self._fits.get(t)
        if got is None:
            reach = max(self.radii) * math.sqrt(self.d)
            if reach > self.domain_radius(t):
                raise DomainError(f"fit stencil {reach:.3g} exceeds the domain radius "
                                  f"{self.domain_radius(t):.3g} at t = {t:g}", time=t)
            field = lambda x: self.ts.G(t, x)
            got = [fit_origin(field, self.d, self.degree, r, vectorized=True) for r in self.radii]
            self._fits[t] = got
        return got

    def estimate(self, j: int, k, t: float) -> CoeffEstimate:
        k = MultiIndex(k)
        t = float(t)
        key = (int(j), k, t)
        got = self._coeffs.get(key)
        if got is None:
            fits = self._stencil(t)
            ests = [tensor_from_fit(f, self.dims, int(j) - 1, k) for f in fits]
            val, err = richardson(ests, self.degree + 1 - k.order)
            got = CoeffEstimate(val, err)
            self._coeffs[key] = got
        return got

    def taylor_coeff(self, j: int, k, t: float) -> np.ndarray:
        k = MultiIndex(k)
        if (int(j), k) == self.eliminated:
            return np.zeros(tensor_shape(self.dims, int(j) - 1, k))
        if self._exact(j, k):
            return self.base.taylor_coeff(j, k, t)
        return self.estimate(j, k, t).tensor

    def taylor_coeff_batch(self, j: int, k, ts) -> np.ndarray:
        k = MultiIndex(k)
        if self._exact(j, k) and (int(j), k) != self.eliminated:
            return self.base.taylor_coeff_batch(j, k, ts)
        return super().taylor_coeff_batch(j, k, ts)

    def coeff_noise(self, j: int, k) -> float:
        k = MultiIndex(k)
        if self._exact(j, k):
            return 0.0 if (int(j), k) == self.eliminated else self.base.coeff_noise(j, k)
        key = (int(j), k)
        if key not in self._noise:
            err = self.estimate(j, k, 0.0).error
            self._noise[key] = max(1e-10, 10.0 * err)
        return self._noise[key]

    # ---- dominating candidate --------------------------------------------------------
    @property
    def psi(self) -> AdmissibleCandidate:
        """lambda * psi_base, lambda fitted so the sampled coefficient norms are dominated."""
        if self._psi is None:
            base = self.base.psi
            grid = self._psi_grid
            if grid is None:
                grid = default_h2_grid(self.ts.map.rate, horizon=3.0, points=7)
            lam = 1.0
            for t in grid:
                b = float(base(t))
                for m in range(self.ts.map.k.order + 1, self.order + 1):
                    v = coefficient_norm(self, m, float(t))
                    if v > 0:
                        lam = max(lam, v / b if b > 0 else math.inf)
            if not math.isfinite(lam):
                raise NumericalError("derived coefficients are not dominated by a multiple of psi")
            lam *= 1.05
            self.psi_factor = lam
            self._psi = base.scaled(lam)
        return self._psi

    def describe(self) -> dict:
        return {"type": "DerivedNonlinearity", "dims": list(self.dims), "order": self.order,
                "eliminated": [self.eliminated[0], list(self.eliminated[1])],
                "psi_factor": self.psi_factor}


# ---- elimination ----------------------------------------------------------------------

@dataclass
class Elimination:
    j: int
    k: tuple
    status: str
    dist: float
    epsilon: float
    K: float
    xi0: float
    rho: float | None
    before: float
    after: float | None = None
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def eliminate_term(op: EvolutionOperator, nl: Nonlinearity, spectrum, j: int, k, *,
                   rate: GrowthRate | None = None, mode: str = "admissible",
                   verify: bool = True, controls: QuadControls | None = None,
                   radii: Sequence[float] = DEFAULT_RADII, **map_opts) -> DerivedNonlinearity:
    """Remove the (j, k) Taylor term; returns G as a new nonlinearity."""
    rate = rate if rate is not None else op.rate
    k = MultiIndex(k)
    ivs = intervals_of(spectrum, float(getattr(spectrum, "tol", 0.0) or 0.0))
    verdict = check_nonresonance(ivs, j, k)
    if verdict.status is Status.RESONANT:
        raise PreconditionError(f"pair (j={j}, k={tuple(k)}) is resonant")
    if verify:
        grid = default_h2_grid(rate, 3.0, 7) if isinstance(nl, DerivedNonlinearity) else None
        verify_H2(nl, rate, "uniform" if mode == "uniform" else "admissible", grid=grid)
    cmap = ConjugationMap(op, nl, spectrum, j, k, rate=rate, mode=mode, controls=controls, **map_opts)
    return DerivedNonlinearity(TransformedSystem(cmap), radii=radii)


def coefficient_table(nl: Nonlinearity, orders: Sequence[int], ts: Sequence[float] = SAMPLE_TIMES) -> list:
    """Rows (t, j, k, max |coefficient|) for every pair of the given orders."""
    rows = []
    for t in ts:
        for m in orders:
            for k in multi_indices(nl.n, m):
                for j in range(1, nl.n + 1):
                    c = nl.taylor_coeff(j, k, float(t))
                    rows.append((float(t), j, tuple(k), float(np.max(np.abs(c))) if c.size else 0.0))
    return rows


def fitted_table(field, dims: Sequence[int], orders: Sequence[int], ts: Sequence[float] = SAMPLE_TIMES,
                 *, radii: Sequence[float] = DEFAULT_RADII, domain_radius=None) -> list:
    """Like coefficient_table but with coefficients fitted from ``field(t, x)``."""
    rows = []
    n = len(dims)
    deg = max(orders) + 4
    d = int(sum(dims))
    for t in ts:
        t = float(t)
        if domain_radius is not None and max(radii) * math.sqrt(d) > domain_radius(t):
            raise DomainError(f"fit stencil exceeds the domain at t = {t:g}", time=t)
        fits = [fit_origin(lambda x: field(t, x), d, deg, r, vectorized=True) for r in radii]
        for m in orders:
            for k in multi_indices(n, m):
                for j in range(1, n + 1):
                    ests = [tensor_from_fit(f, dims, j - 1, k) for f in fits]
                    val, err = richardson(ests, deg + 1 - m)
                    rows.append((t, j, tuple(k), float(np.max(np.abs(val))), err))
    return rows


@dataclass
class NormalFormResult:
    nonlinearity: Nonlinearity
    transcript: list
    max_residual_coeff: float
    passed: bool
    table: list = field(default_factory=list)
    threshold: float = DEFAULT_THRESHOLD

    def as_dict(self) -> dict:
        return {"passed": self.passed, "max_coefficient": self.max_residual_coeff,
                "threshold": self.threshold, "transcript": [e.as_dict() for e in self.transcript]}


def normal_form(op: EvolutionOperator, nl: Nonlinearity, spectrum, ell: int | None = None, *,
                rate: GrowthRate | None = None, threshold: float = DEFAULT_THRESHOLD,
                sample_times: Sequence[float] = SAMPLE_TIMES, controls: QuadControls | None = None,
                verify: bool = True, **map_opts) -> NormalFormResult:
    """Eliminate every nonresonant term of orders 2..ell, graded-lex over k, then j."""
    rate = rate if rate is not None else op.rate
    ell = int(ell if ell is not None else nl.order)
    ivs = intervals_of(spectrum, float(getattr(spectrum, "tol", 0.0) or 0.0))
    h3 = check_H3(ivs, ell)
    if not h3.passed:
        bad = [(v.j, tuple(v.k)) for v in h3.violations]
        raise PreconditionError(f"spectrum is resonant for {bad[:5]}")
    if verify:
        verify_H2(nl, rate, "uniform")
    current = nl
    transcript: list[Elimination] = []
    for j, k in iter_pairs(op.system.n, ell):
        if not current.has_term(j, k):
            continue
        before = max(float(np.max(np.abs(current.taylor_coeff(j, k, t)))) for t in sample_times)
        if before <= threshold * 1e-3:
            continue
        t0 = time.perf_counter()
        try:
            nxt = eliminate_term(op, current, spectrum, j, k, rate=rate, mode="uniform",
                                 verify=verify and bool(transcript), controls=controls, **map_opts)
            cm = nxt.ts.map
            entry = Elimination(j, tuple(k), cm.verdict.status.value, cm.dist, cm.epsilon, cm.K,
                                cm.trumpet_radius(0.0), cm.tubular_radius(), before)
        except MudnfError as exc:
            raise VerificationError(f"elimination of (j={j}, k={tuple(k)}) failed: {exc}",
                                    transcript=[e.as_dict() for e in transcript]) from exc
        entry.seconds = time.perf_counter() - t0
        transcript.append(entry)
        current = nxt
    table = fitted_table(current.eval, current.dims, range(2, ell + 1), sample_times,
                         radii=DEFAULT_RADII, domain_radius=current.domain_radius) if transcript else \
        [(t, j, k, v, 0.0) for t, j, k, v in coefficient_table(current, range(2, ell + 1), sample_times)]
    worst = max((r[3] for r in table), default=0.0)
    for e in transcript:
        e.after = max(r[3] for r in table if r[1] == e.j and r[2] == e.k)
    return NormalFormResult(current, transcript, worst, worst <= threshold, table, threshold)


# ---- conjugacy along trajectories ------------------------------------------------------

@dataclass
class ConjugacyReport:
    forward: float
    reverse: float | None
    times: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {"forward_residual": self.forward, "reverse_residual": self.reverse}


def _trajectory(rhs, t0: float, x0: np.ndarray, horizon: float, n_points: int, fd: float):
    te = t0 + horizon
    sol = solve_ivp(lambda t, y: rhs(t, y), (t0, te + 2 * fd), x0, method="DOP853",
                    rtol=1e-12, atol=1e-15, dense_output=True)
    if not sol.success:
        raise NumericalError(f"trajectory integration failed: {sol.message}")
    return sol.sol


def _grid(t0, horizon, n_points, fd):
    return np.linspace(t0 + 2 * fd, t0 + horizon, n_points)


def conjugacy_residual(ts: TransformedSystem, t0: float, x0, horizon: float = 5.0, *,
                       n_points: int = 51, fd: float = 1e-4, reverse: bool = True) -> ConjugacyReport:
    """Max |v' - G~(t, v)| along v = H(t, u(t)), and the mirror check for u = H^{-1}(t, v(t))."""
    m = ts.map
    x0 = np.asarray(x0, float)
    if not np.any(x0):
        return ConjugacyReport(0.0, 0.0 if reverse else None)
    grid = _grid(t0, horizon, n_points, fd)
    u = _trajectory(ts.original_rhs, t0, x0, horizon, n_points, fd)
    for t in grid:
        if np.linalg.norm(u(t)) > m.trumpet_radius(t):
            raise DomainError(f"trajectory leaves the trumpet at t = {t:.6g}", time=float(t))
    fwd = 0.0
    for t in grid:
        vp = m.H_eval(t + fd, u(t + fd), check=False)
        vm = m.H_eval(t - fd, u(t - fd), check=False)
        vdot = (vp - vm) / (2 * fd)
        v = m.H_eval(t, u(t), check=False)
        fwd = max(fwd, float(np.linalg.norm(vdot - ts.transformed_rhs(t, v))))
    rev = None
    if reverse:
        y0 = m.H_eval(t0, x0, check=False)
        v = _trajectory(ts.transformed_rhs, t0, y0, horizon, n_points, fd)
        rev = 0.0
        for t in grid:
            up = m.H_inverse(t + fd, v(t + fd))
            um = m.H_inverse(t - fd, v(t - fd))
            udot = (up - um) / (2 * fd)
            uu = m.H_inverse(t, v(t))
            rev = max(rev, float(np.linalg.norm(udot - ts.original_rhs(t, uu))))
    return ConjugacyReport(fwd, rev, grid)


def composed_residual(transcript_systems: Sequence[TransformedSystem], t0: float, x0, horizon: float = 5.0,
                      *, n_points: int = 26, fd: float = 1e-4) -> float:
    """Residual of the composed maps against the last transformed field."""
    if not transcript_systems:
        return 0.0
    first = transcript_systems[0]
    u = _trajectory(first.original_rhs, t0, np.asarray(x0, float), horizon, n_points, fd)

    def compose(t, x):
        for s in transcript_systems:
            x = s.map.H_eval(t, x, check=False)
        return x

    last = transcript_systems[-1]
    worst = 0.0
    for t in _grid(t0, horizon, n_points, fd):
        vdot = (compose(t + fd, u(t + fd)) - compose(t - fd, u(t - fd))) / (2 * fd)
        v = compose(t, u(t))
        worst = max(worst, float(np.linalg.norm(vdot - last.transformed_rhs(t, v))))
    return worst
