"""The map h removing one Taylor term, and H = id + h with its inverse.

For a nonresonant pair (j, k) the j-th component of h is the improper
integral of Phi_j(t, s) D^k F_j(s, 0)/k! [Phi(s, t) x]^k over s in
[t, inf) (left gap) or minus the integral over (-inf, t] (right gap). The
integral is linear in each slot, so it is computed once per t as a tensor
T(t) of the same shape as the Taylor coefficient and then applied to x.
"""

from __future__ import annotations

import math
import string
import threading
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import admissibility as adm
from .dichotomy import get_analyzer
from .errors import DomainError, InconclusiveError, NumericalError, PreconditionError
from .growth import GrowthRate
from .linear import EvolutionOperator, block_index
from .nonlinearity import Nonlinearity
from .quadrature import integrate
from .resonance import MultiIndex, ResonanceVerdict, Status, check_nonresonance, intervals_of
from .taylor import apply_slots, taylor_tensor_apply, tensor_shape


class TrumpetWarning(RuntimeWarning):
    """Evaluation point lies outside the trumpet neighbourhood."""


@dataclass(frozen=True)
class QuadControls:
    rtol: float = 1e-10
    atol: float = 1e-13
    tail_tol: float = 1e-12
    horizon_cap: float = 1e3
    lattice_step: float = 1.0
    noise_factor: float = 20.0


@dataclass
class InverseResult:
    x: np.ndarray
    iterations: int
    contraction: float
    steps: list = field(default_factory=list, repr=False)


def _einsum_spec(m: int) -> str:
    slots = string.ascii_uppercase[:m]
    outs = string.ascii_lowercase[10:10 + m]
    ops = ["nab", "nb" + slots] + ["n" + s + o for s, o in zip(slots, outs)]
    return ",".join(ops) + "->na" + outs


class ConjugationMap:
    """h, H = id + h and H^{-1} for one nonresonant pair (j, k).

    Parameters
    ----------
    op, nl:
        Linear part and perturbation; block dimensions must agree.
    spectrum:
        Spectrum or sequence of intervals, one per block.
    j, k:
        1-based position and multi-index with |k| >= 2.
    epsilon:
        Shift of the spectral bounds; defaults to dist / (2(|k| + 1)).
    K:
        Dichotomy constant; fitted from the sampled evolution operator
        when omitted.
    mode:
        "admissible" or "uniform"; the tubular radius needs "uniform".
    """

    def __init__(self, op: EvolutionOperator, nl: Nonlinearity, spectrum, j: int, k: Sequence[int], *,
                 rate: GrowthRate | None = None, mode: str = "admissible",
                 epsilon: float | None = None, K: float | None = None,
                 controls: QuadControls | None = None, inflate: float | None = None,
                 horizon: float | None = None, n_nodes: int | None = None):
        if mode not in ("admissible", "uniform"):
            raise PreconditionError(f"unknown mode {mode!r}")
        self.op, self.nl = op, nl
        self.rate = rate if rate is not None else op.rate
        self.mode = mode
        self.controls = controls or QuadControls()
        if tuple(nl.dims) != tuple(op.system.dims):
            raise PreconditionError(f"nonlinearity blocks {nl.dims} differ from system blocks {op.system.dims}")
        self.n = op.system.n
        self.k = MultiIndex(k)
        if len(self.k) != self.n:
            raise PreconditionError(f"multi-index needs {self.n} entries")
        if self.k.order < 2:
            raise PreconditionError("the conjugation map is only defined for |k| >= 2")
        self.j = int(j)
        self.j0 = block_index(j, self.n)
        if inflate is None:
            inflate = float(getattr(spectrum, "tol", 0.0) or 0.0)
        self.intervals = intervals_of(spectrum, inflate)
        if len(self.intervals) != self.n:
            raise PreconditionError(f"spectrum has {len(self.intervals)} intervals for {self.n} blocks")
        self.verdict: ResonanceVerdict = check_nonresonance(self.intervals, j, self.k)
        if self.verdict.status is Status.RESONANT:
            raise PreconditionError(f"pair (j={j}, k={tuple(self.k)}) is resonant")
        self.direction = self.verdict.direction
        self.dist = float(self.verdict.dist)
        self.delta = 0.5 * self.dist
        eps_max = self.dist / (2.0 * (self.k.order + 1))
        self.epsilon = eps_max if epsilon is None else float(epsilon)
        if not 0.0 < self.epsilon <= eps_max * (1.0 + 1e-12):
            raise PreconditionError(f"epsilon must lie in (0, {eps_max:.6g}]")
        self.a_hat = [a - self.epsilon for a, _ in self.intervals]
        self.b_hat = [b + self.epsilon for _, b in self.intervals]
        self._sampling = {k2: v for k2, v in (("horizon", horizon), ("n_nodes", n_nodes)) if v is not None}
        self.K = float(K) if K is not None else self._fit_K()
        if not self.K >= 1.0 - 1e-12:
            raise PreconditionError("dichotomy constant K must be >= 1")
        self.Kpow = self.K ** (self.k.order + 1)
        self._tensors: dict[float, np.ndarray] = {}
        self._zetas: dict[float, float] = {}
        self._lock = threading.Lock()
        self._M: float | None = None
        self._spec = _einsum_spec(self.k.order)

    # ---- constants -------------------------------------------------------------------
    def _fit_K(self) -> float:
        an = get_analyzer(self.op, self.rate, **self._sampling)
        logk = 0.0
        for b in range(self.n):
            s = an.samples(b)
            y, lag, _ = s["fwd"]
            if y.size:
                logk = max(logk, float(np.max(y - self.b_hat[b] * lag)))
            y, lag, _ = s["bwd"]
            if y.size:
                logk = max(logk, float(np.max(y - self.a_hat[b] * lag)))
        return math.exp(logk)

    def zeta(self, t: float) -> float:
        """mu(t)^{+-delta} times the one-sided admissibility integral at t."""
        t = float(t)
        got = self._zetas.get(t)
        if got is not None:
            return got
        u = float(self.rate.log(t))
        psi = self.nl.psi
        if self.direction > 0:
            z = math.exp(self.delta * u) * adm.zeta_plus(psi, self.rate, self.delta, t)
        else:
            z = math.exp(-self.delta * u) * adm.zeta_minus(psi, self.rate, self.delta, t)
        self._zetas[t] = z
        return z

    def trumpet_radius(self, t: float) -> float:
        z = self.zeta(t)
        if z <= 0.0:
            return math.inf
        return (2.0 * self.Kpow * self.n * z) ** (1.0 / (1.0 - self.k.order))

    def sup_zeta(self, grid: Sequence[float] | None = None, growth_tol: float = 0.01) -> float:
        """M = sup_t zeta(t) from a cumulative profile; raises if it does not settle."""
        if self._M is not None and grid is None:
            return self._M
        g = adm.default_grid(self.rate) if grid is None else np.asarray(grid, float)
        prof = adm.zeta_profile(self.nl.psi, self.rate, self.delta, g)
        w = prof.weighted_plus if self.direction > 0 else prof.weighted_minus
        sup = float(np.max(w))
        u = np.abs(self.rate.log(g))
        inner = u <= 0.9 * float(np.max(u))
        inner_sup = float(np.max(w[inner])) if np.any(inner) else 0.0
        if sup > (1.0 + growth_tol) * inner_sup and sup > 0.0:
            raise InconclusiveError(
                f"sup of zeta does not settle on the grid (sup {sup:.6g}, inner {inner_sup:.6g})",
                value=sup, trend={"sup": sup, "inner_sup": inner_sup})
        if grid is None:
            self._M = sup
        return sup

    def tubular_radius(self) -> float:
        if self.mode != "uniform":
            raise PreconditionError("the tubular radius needs mode='uniform'")
        M = self.sup_zeta()
        if M <= 0.0:
            return 0.5
        p = 1.0 / (self.k.order - 1)
        return min(0.5, (self.k.factorial / (self.Kpow * M)) ** p,
                   0.5 * (1.0 / (self.n * self.Kpow * M)) ** p)

    # ---- the tensor T(t) -------------------------------------------------------------
    def _horizon(self, t: float) -> float:
        c = self.controls
        u_t = float(self.rate.log(t))
        u_star = u_t + self.direction * math.log(1.0 / c.tail_tol) / self.delta
        s_star = float(self.rate.inverse_log(u_star))
        cap = c.horizon_cap
        if abs(s_star) > cap:
            s_star = math.copysign(cap, s_star)
            if self.direction * (s_star - t) <= 0:
                raise NumericalError(f"t = {t:g} lies beyond the horizon cap {cap:g}")
            # the decay bound alone is not small here; use the admissibility tail
            psi = self.nl.psi
            if self.direction > 0:
                tail = math.exp(self.delta * u_t) * adm.zeta_plus(psi, self.rate, self.delta, s_star)
            else:
                tail = math.exp(-self.delta * u_t) * adm.zeta_minus(psi, self.rate, self.delta, s_star)
            tail *= self.Kpow / self.k.factorial
            if tail > 10.0 * c.tail_tol:
                raise NumericalError(
                    f"integral tail beyond the horizon cap is {tail:.3g} > {10 * c.tail_tol:.3g}",
                    trace=[("t", t), ("s_star", s_star), ("tail_bound", tail)])
        return s_star

    def _break_points(self, lo: float, hi: float) -> list:
        step = self.controls.lattice_step
        ulo, uhi = float(self.rate.log(lo)), float(self.rate.log(hi))
        pts = [float(self.rate.inverse_log(m * step))
               for m in range(math.ceil(ulo / step), math.floor(uhi / step) + 1)]
        pts += list(self.op.system.breakpoints()) + list(self.nl.kinks()) + list(self.nl.psi.kinks)
        return sorted(p for p in set(pts) if lo < p < hi)

    def tensor(self, t: float) -> np.ndarray:
        """T(t), so that h_j(t, x) = T(t)[x]^k; equals D^k h_j(t, 0)/k!."""
        t = float(t)
        got = self._tensors.get(t)
        if got is not None:
            return got
        shape = tensor_shape(self.op.system.dims, self.j0, self.k)
        if not self.nl.has_term(self.j, self.k) or self.nl.psi.decay.scale == 0.0:
            out = np.zeros(shape)
        else:
            out = self._integrate_tensor(t)
        with self._lock:
            self._tensors[t] = out
        return out

    def _integrate_tensor(self, t: float) -> np.ndarray:
        s_star = self._horizon(t)
        lo, hi = (t, s_star) if self.direction > 0 else (s_star, t)
        pull = self.op.pullback_from(self.j0, t, lo, hi)
        used = sorted(set(self.k.slots))
        props = {b: self.op.propagator_from(b, t, lo, hi) for b in used}
        j, k, nl, spec = self.j, self.k, self.nl, self._spec

        def f(s):
            p = pull(s)
            c = nl.taylor_coeff_batch(j, k, s)
            q = {b: props[b](s) for b in used}
            return np.einsum(spec, p, c, *[q[b] for b in k.slots], optimize=True)

        c = self.controls
        atol = c.atol + c.noise_factor * nl.coeff_noise(j, k) * abs(hi - lo)
        try:
            res = integrate(f, lo, hi, rtol=c.rtol, atol=atol, points=self._break_points(lo, hi))
        except NumericalError as exc:
            raise NumericalError(f"h quadrature at t = {t:g} over [{lo:g}, {hi:g}] failed: {exc}",
                                 trace=exc.trace) from exc
        return self.direction * res.value

    # ---- h, bounds, derivatives -------------------------------------------------------
    def _check_trumpet(self, t: float, x: np.ndarray) -> None:
        xi = self.trumpet_radius(t)
        r = float(np.max(np.linalg.norm(x, axis=-1)))
        if r > xi * (1.0 + 1e-12):
            warnings.warn(f"|x| = {r:.3g} exceeds the trumpet radius {xi:.3g} at t = {t:g}",
                          TrumpetWarning, stacklevel=3)

    def _place(self, x: np.ndarray, comp: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x, dtype=float)
        out[..., self.op.system.slice(self.j0)] = comp
        return out

    def h_eval(self, t: float, x, *, check: bool = True) -> np.ndarray:
        x = np.asarray(x, float)
        if check:
            self._check_trumpet(t, x)
        comp = taylor_tensor_apply(self.tensor(t), self.k, self.op.system.split(x))
        return self._place(x, comp)

    def h_bound(self, t: float, x) -> float:
        xs = self.op.system.split(np.asarray(x, float))
        prod = 1.0
        for b, kb in enumerate(self.k):
            if kb:
                prod *= float(np.linalg.norm(xs[b])) ** kb
        if prod == 0.0:
            return 0.0
        return self.Kpow / self.k.factorial * self.zeta(t) * prod

    def d2h_bound(self, t: float, x) -> float:
        return self.n * self.Kpow * self.zeta(t) * float(np.linalg.norm(x)) ** (self.k.order - 1)

    def _slot_sum(self, tensor: np.ndarray, xs: list, sub: list) -> np.ndarray:
        """Sum over slots of the form with one slot fed from ``sub`` instead of ``xs``."""
        slots = self.k.slots
        out = 0.0
        for p, b in enumerate(slots):
            vecs = [xs[c] for c in slots]
            vecs[p] = sub[b]
            out = out + apply_slots(tensor, vecs)
        return out

    def d2h_eval(self, t: float, x, direction, *, check: bool = True) -> np.ndarray:
        """D_2 h(t, x) applied to ``direction``."""
        x = np.asarray(x, float)
        if check:
            self._check_trumpet(t, x)
        sys = self.op.system
        comp = self._slot_sum(self.tensor(t), sys.split(x), sys.split(np.asarray(direction, float)))
        return self._place(x, comp)

    def d2h_matrix(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, float)
        return np.column_stack([self.d2h_eval(t, x, e, check=False) for e in np.eye(x.size)])

    def d1h_eval(self, t: float, x, *, check: bool = True) -> np.ndarray:
        """Time derivative: -C(t)[x]^k + A_j(t) h_j + T(t) with one slot fed by -A(t)x."""
        x = np.asarray(x, float)
        if check:
            self._check_trumpet(t, x)
        sys = self.op.system
        xs = sys.split(x)
        T = self.tensor(t)
        c = self.nl.taylor_coeff(self.j, self.k, t)
        hj = taylor_tensor_apply(T, self.k, xs)
        aj = sys.block_matrix(self.j, t)
        ax = [-(xs[b] @ sys.block_matrix(b + 1, t).T) for b in range(self.n)]
        comp = -taylor_tensor_apply(c, self.k, xs) + hj @ aj.T + self._slot_sum(T, xs, ax)
        return self._place(x, comp)

    # ---- H and its inverse ------------------------------------------------------------
    def H_eval(self, t: float, x, *, check: bool = True) -> np.ndarray:
        x = np.asarray(x, float)
        return x + self.h_eval(t, x, check=check)

    def H_inverse_detailed(self, t: float, y, *, tol: float = 1e-15, max_iter: int = 60) -> InverseResult:
        """Fixed-point iteration x <- y - h(t, x); ``y`` may carry leading batch axes."""
        y = np.asarray(y, float)
        xi = self.trumpet_radius(t) * (1.0 + 1e-12)
        scale = max(1.0, float(np.max(np.linalg.norm(y, axis=-1), initial=0.0)))
        x = y.copy()
        steps, ratios = [], []
        for it in range(1, max_iter + 1):
            # points of H(T_xi) have |y| <= 1.5 xi, so the early iterates may sit
            # slightly outside T_xi; only the fixed point itself must lie inside
            if np.any(np.linalg.norm(x, axis=-1) > 2.0 * xi):
                raise DomainError(f"fixed-point iterate left the trumpet at t = {t:g}", time=t)
            nxt = y - self.h_eval(t, x, check=False)
            step = float(np.max(np.linalg.norm(nxt - x, axis=-1), initial=0.0))
            if steps and steps[-1] > 1e-12 * scale:
                ratios.append(step / steps[-1])
            steps.append(step)
            x = nxt
            if step <= tol * scale:
                if np.any(np.linalg.norm(x, axis=-1) > xi):
                    raise DomainError(f"fixed point lies outside the trumpet at t = {t:g}", time=t)
                return InverseResult(x, it, max(ratios) if ratios else 0.0, steps)
        raise NumericalError(f"H inverse did not converge in {max_iter} iterations at t = {t:g}",
                             trace=steps[-10:])

    def H_inverse(self, t: float, y, **kw) -> np.ndarray:
        return self.H_inverse_detailed(t, y, **kw).x

    def describe(self) -> dict:
        return {"j": self.j, "k": list(self.k), "status": self.verdict.status.value,
                "dist": self.dist, "epsilon": self.epsilon, "K": self.K, "mode": self.mode,
                "delta": self.delta}
