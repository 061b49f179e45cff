"""Block-diagonal linear systems and their evolution operators.

Block indices in the public API are 1-based, matching the usual
mathematical labelling of spectral intervals; internal helpers prefixed with
an underscore take 0-based indices.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.optimize import linprog

from .errors import NumericalError, PreconditionError
from .growth import GrowthRate, exponential


def block_index(i: int, n: int) -> int:
    """Validate a 1-based block index and return its 0-based form."""
    if isinstance(i, bool) or not isinstance(i, (int, np.integer)):
        raise PreconditionError(f"block index must be an integer, got {i!r}")
    if not 1 <= int(i) <= n:
        raise PreconditionError(f"block index {i} out of range 1..{n}")
    return int(i) - 1


def _is_diagonal(m: np.ndarray) -> bool:
    return m.shape[0] == 1 or not np.any(m - np.diag(np.diagonal(m)))


def _expm_batch(m: np.ndarray, taus: np.ndarray) -> np.ndarray:
    """exp(tau * M) for every tau, shape (N, d, d)."""
    taus = np.asarray(taus, dtype=float)
    if _is_diagonal(m):
        diag = np.exp(taus[:, None] * np.diagonal(m)[None, :])
        out = np.zeros((taus.size,) + m.shape)
        idx = np.arange(m.shape[0])
        out[:, idx, idx] = diag
        return out
    return expm(taus[:, None, None] * m[None, :, :])


@dataclass(frozen=True, eq=False)
class ConstantBlock:
    matrix: np.ndarray
    kind = "constant"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise PreconditionError("constant block needs a nonempty square matrix")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def at(self, t: float) -> np.ndarray:
        return self.matrix

    @property
    def breakpoints(self) -> tuple:
        return ()

    def describe(self) -> dict:
        return {"constant": self.matrix.tolist()}


@dataclass(frozen=True, eq=False)
class PiecewiseConstantBlock:
    """Matrix ``matrices[m]`` is active on [breakpoints[m-1], breakpoints[m]).

    At a breakpoint the right-limit value is used.
    """

    breakpoints: tuple
    matrices: tuple
    kind = "piecewise-constant"

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        mats = tuple(np.array(m, dtype=float) for m in self.matrices)
        if len(mats) != len(bps) + 1:
            raise PreconditionError("piecewise block needs len(matrices) == len(breakpoints) + 1")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise PreconditionError("breakpoints must be strictly increasing")
        shape = mats[0].shape
        if len(shape) != 2 or shape[0] != shape[1] or any(m.shape != shape for m in mats):
            raise PreconditionError("piecewise block matrices must be square and of equal size")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "matrices", mats)

    @property
    def dim(self) -> int:
        return self.matrices[0].shape[0]

    def piece(self, t: float) -> int:
        return bisect.bisect_right(self.breakpoints, t)

    def at(self, t: float) -> np.ndarray:
        return self.matrices[self.piece(t)]

    def flow(self, t: float, s: float) -> np.ndarray:
        """Product of exponentials along the path from s to t."""
        lo, hi = min(s, t), max(s, t)
        inner = [b for b in self.breakpoints if lo < b < hi]
        path = [s] + (inner if t >= s else inner[::-1]) + [t]
        out = np.eye(self.dim)
        for p0, p1 in zip(path, path[1:]):
            m = self.at(0.5 * (p0 + p1))
            out = expm((p1 - p0) * m) @ out
        return out

    def describe(self) -> dict:
        return {"piecewise": {"breakpoints": list(self.breakpoints),
                              "matrices": [m.tolist() for m in self.matrices]}}


@dataclass(frozen=True, eq=False)
class SmoothBlock:
    """Block given by a callable t -> (dim, dim) matrix."""

    func: Callable[[float], np.ndarray]
    dim: int
    label: str = "smooth"
    breakpoints: tuple = ()
    kind = "smooth"

    def __post_init__(self):
        if int(self.dim) <= 0:
            raise PreconditionError("smooth block dimension must be positive")
        probe = np.asarray(self.func(0.0), dtype=float)
        if probe.shape != (self.dim, self.dim):
            raise PreconditionError(
                f"smooth block {self.label!r} returned shape {probe.shape}, "
                f"expected {(self.dim, self.dim)}")

    def at(self, t: float) -> np.ndarray:
        return np.asarray(self.func(float(t)), dtype=float)

    def describe(self) -> dict:
        return {"smooth": self.label}


Block = ConstantBlock | PiecewiseConstantBlock | SmoothBlock


class BlockSystem:
    """A block-diagonal coefficient map t -> diag(A_1(t), ..., A_n(t))."""

    def __init__(self, blocks: Sequence[Block]):
        if not blocks:
            raise PreconditionError("a block system needs at least one block")
        self.blocks = tuple(blocks)
        self.dims = tuple(b.dim for b in self.blocks)
        self.offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.dims)]))

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def d(self) -> int:
        return self.offsets[-1]

    @property
    def kind(self) -> str:
        kinds = {b.kind for b in self.blocks}
        for k in ("smooth", "piecewise-constant"):
            if k in kinds:
                return k
        return "constant"

    def slice(self, b: int) -> slice:
        return slice(self.offsets[b], self.offsets[b + 1])

    def split(self, x) -> list[np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise PreconditionError(f"vector has size {x.shape[-1]}, system dimension is {self.d}")
        return [x[..., self.slice(b)] for b in range(self.n)]

    def block_matrix(self, i: int, t: float) -> np.ndarray:
        return self.blocks[block_index(i, self.n)].at(t)

    def A(self, t: float) -> np.ndarray:
        out = np.zeros((self.d, self.d))
        for b, blk in enumerate(self.blocks):
            sl = self.slice(b)
            out[sl, sl] = blk.at(t)
        return out

    def apply(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for b, blk in enumerate(self.blocks):
            sl = self.slice(b)
            out[..., sl] = x[..., sl] @ blk.at(t).T
        return out

    def breakpoints(self) -> tuple:
        pts = set()
        for blk in self.blocks:
            pts.update(getattr(blk, "breakpoints", ()))
        return tuple(sorted(pts))

    def describe(self) -> dict:
        return {"dims": list(self.dims), "blocks": [b.describe() for b in self.blocks]}


def shifted(system: BlockSystem, rate: GrowthRate, gamma: float) -> BlockSystem:
    """The system A(t) - gamma * mu'(t)/mu(t) * Id."""
    gamma = float(gamma)
    if gamma == 0.0:
        return system
    new = []
    for blk in system.blocks:
        eye = np.eye(blk.dim)
        if rate.kind == "exponential" and isinstance(blk, ConstantBlock):
            new.append(ConstantBlock(blk.matrix - gamma * eye))
        elif rate.kind == "exponential" and isinstance(blk, PiecewiseConstantBlock):
            new.append(PiecewiseConstantBlock(blk.breakpoints,
                                              tuple(m - gamma * eye for m in blk.matrices)))
        else:
            def f(t, _blk=blk, _eye=eye):
                return _blk.at(t) - gamma * float(rate.dlog(t)) * _eye
            new.append(SmoothBlock(f, blk.dim, f"{getattr(blk, 'label', blk.kind)}-shift({gamma:g})",
                                   tuple(getattr(blk, "breakpoints", ()))))
    return BlockSystem(new)


class EvolutionOperator:
    """Evolution operator Phi(t, s) of x' = A(t) x.

    Smooth blocks are integrated with DOP853. Fundamental matrices over
    checkpoint segments [c_m, c_{m+1}], with c_m = mu^{-1}(exp(m * step)),
    are cached so long evolutions compose short cached pieces.
    """

    def __init__(self, system: BlockSystem, rate: GrowthRate | None = None, *,
                 rtol: float = 1e-10, atol: float = 1e-12, checkpoint_step: float = 1.0):
        self.system = system
        self.rate = rate if rate is not None else exponential()
        self.rtol = rtol
        self.atol = atol
        self.checkpoint_step = float(checkpoint_step)
        self._segments: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()
        self.analyzers: dict = {}

    # ---- integration primitives -------------------------------------------------
    def _integrate(self, b: int, t: float, s: float, dense: bool = False):
        blk = self.system.blocks[b]
        d = blk.dim

        def rhs(tau, y):
            return (blk.at(tau) @ y.reshape(d, d)).ravel()

        sol = solve_ivp(rhs, (s, t), np.eye(d).ravel(), method="DOP853",
                        rtol=self.rtol, atol=self.atol, dense_output=dense)
        if sol.status != 0:
            raise NumericalError(
                f"integration of block {b + 1} failed on [{min(s, t):g}, {max(s, t):g}]: {sol.message}",
                trace=[(float(s), float(t))])
        if dense:
            return sol.sol
        return sol.y[:, -1].reshape(d, d)

    def _checkpoint(self, m: int) -> float:
        return float(self.rate.inverse_log(m * self.checkpoint_step))

    def _segment(self, b: int, m: int) -> tuple[np.ndarray, np.ndarray]:
        key = (b, m)
        seg = self._segments.get(key)
        if seg is not None:
            return seg
        with self._lock:
            seg = self._segments.get(key)
            if seg is None:
                fwd = self._integrate(b, self._checkpoint(m + 1), self._checkpoint(m))
                seg = (fwd, np.linalg.inv(fwd))
                self._segments[key] = seg
        return seg

    def _smooth(self, b: int, t: float, s: float) -> np.ndarray:
        if t == s:
            return np.eye(self.system.dims[b])
        us = float(self.rate.log(s)) / self.checkpoint_step
        ut = float(self.rate.log(t)) / self.checkpoint_step
        if t > s:
            m0, m1 = math.floor(us) + 1, math.ceil(ut) - 1
            if m0 > m1:
                return self._integrate(b, t, s)
            out = self._integrate(b, self._checkpoint(m0), s)
            for m in range(m0, m1):
                out = self._segment(b, m)[0] @ out
            return self._integrate(b, t, self._checkpoint(m1)) @ out
        m0, m1 = math.ceil(us) - 1, math.floor(ut) + 1
        if m0 < m1:
            return self._integrate(b, t, s)
        out = self._integrate(b, self._checkpoint(m0), s)
        for m in range(m0 - 1, m1 - 1, -1):
            out = self._segment(b, m)[1] @ out
        return self._integrate(b, t, self._checkpoint(m1)) @ out

    def _block(self, b: int, t: float, s: float) -> np.ndarray:
        t = float(t)
        s = float(s)
        if not (math.isfinite(t) and math.isfinite(s)):
            raise PreconditionError("evolve needs finite times")
        blk = self.system.blocks[b]
        if t == s:
            return np.eye(blk.dim)
        if isinstance(blk, ConstantBlock):
            return _expm_batch(blk.matrix, np.array([t - s]))[0]
        if isinstance(blk, PiecewiseConstantBlock):
            return blk.flow(t, s)
        return self._smooth(b, t, s)

    # ---- public API ---------------------------------------------------------------
    def evolve(self, t: float, s: float) -> np.ndarray:
        """Phi(t, s) as a full d x d block-diagonal matrix."""
        out = np.zeros((self.system.d, self.system.d))
        for b in range(self.system.n):
            sl = self.system.slice(b)
            out[sl, sl] = self._block(b, t, s)
        return out

    def evolve_block(self, i: int, t: float, s: float) -> np.ndarray:
        """Phi_i(t, s) for the 1-based block index i."""
        return self._block(block_index(i, self.system.n), t, s)

    def propagator_from(self, b: int, t: float, s_lo: float, s_hi: float) -> Callable:
        """Return a map nodes -> Phi_b(s, t) for nodes s in [s_lo, s_hi] (0-based b).

        For smooth blocks this integrates once from t with dense output.
        """
        blk = self.system.blocks[b]
        t = float(t)
        if isinstance(blk, ConstantBlock):
            m = blk.matrix
            return lambda s: _expm_batch(m, np.asarray(s, float) - t)
        if isinstance(blk, PiecewiseConstantBlock):
            if not blk.breakpoints:
                m = blk.matrices[0]
                return lambda s: _expm_batch(m, np.asarray(s, float) - t)
            return lambda s: np.stack([blk.flow(float(v), t) for v in np.asarray(s, float)])
        d = blk.dim
        sols = []
        if s_hi > t:
            sols.append((t, s_hi, self._integrate(b, s_hi, t, dense=True)))
        if s_lo < t:
            sols.append((s_lo, t, self._integrate(b, s_lo, t, dense=True)))

        def prop(s):
            s = np.asarray(s, float)
            out = np.empty((s.size, d, d))
            done = np.zeros(s.size, bool)
            for lo, hi, sol in sols:
                sel = (s >= lo) & (s <= hi) & ~done
                if np.any(sel):
                    out[sel] = sol(s[sel]).T.reshape(-1, d, d)
                    done |= sel
            at_t = ~done & (s == t)
            out[at_t] = np.eye(d)
            done |= at_t
            if not np.all(done):
                raise PreconditionError("propagator queried outside its integration range")
            return out

        return prop

    def pullback_from(self, b: int, t: float, s_lo: float, s_hi: float) -> Callable:
        """Return a map nodes -> Phi_b(t, s)."""
        blk = self.system.blocks[b]
        t = float(t)
        if isinstance(blk, ConstantBlock):
            m = blk.matrix
            return lambda s: _expm_batch(m, t - np.asarray(s, float))
        prop = self.propagator_from(b, t, s_lo, s_hi)
        return lambda s: np.linalg.inv(prop(s))


@dataclass
class BoundedGrowthFit:
    K: float
    a: float
    epsilon: float
    admits: bool
    slack: float
    pairs: int = 0
    details: dict = field(default_factory=dict)


def _growth_lp(y, lag, us, eps_max):
    """Minimal (c, a, eps) with y <= c + a|lag| + eps|u_s| over all pairs."""
    lref = max(float(np.max(np.abs(lag))), 1.0)
    uref = max(float(np.max(np.abs(us))), 1.0)
    cost = np.array([1.0, lref, uref * 1.001])
    a_ub = -np.column_stack([np.ones_like(y), np.abs(lag), np.abs(us)])
    res = linprog(cost, A_ub=a_ub, b_ub=-y,
                  bounds=[(0, None), (0, None), (0, eps_max)], method="highs")
    if res.status == 2:
        return None
    if not res.success:
        raise NumericalError(f"bounded-growth fit failed: {res.message}")
    c, a, eps = res.x
    slack = float(np.max(y - (c + a * np.abs(lag) + eps * np.abs(us)))) if y.size else 0.0
    return float(c), float(a), float(eps), max(slack, 0.0)


def _log_norms(op: EvolutionOperator, ts: np.ndarray, rate: GrowthRate):
    ys, ls, us = [], [], []
    logs = rate.log(ts)
    for p, t in enumerate(ts):
        for q, s in enumerate(ts):
            if p == q:
                continue
            phi = op.evolve(t, s)
            nrm = np.linalg.norm(phi, 2)
            ys.append(math.log(nrm) if nrm > 0 else -math.inf)
            ls.append(logs[p] - logs[q])
            us.append(logs[q])
    return np.array(ys), np.array(ls), np.array(us)


def fit_bounded_growth(op: EvolutionOperator, rate: GrowthRate | None = None,
                       times: Sequence[float] | None = None, *, eps_max: float = 1.0,
                       fit_tol: float = 0.5) -> BoundedGrowthFit:
    """Fit log||Phi(t,s)|| <= log K + a|log mu(t)/mu(s)| + eps|log mu(s)|.

    The constants are fitted on the inner half of the grid (in log mu) and
    validated on the whole grid; ``admits`` is true when the extrapolated
    bound holds up to ``fit_tol`` in log units. Reported constants come from
    a fit on the whole grid.
    """
    rate = rate if rate is not None else op.rate
    if times is None:
        times = rate.inverse_log(np.linspace(-10.0, 10.0, 21))
    ts = np.unique(np.asarray(times, dtype=float))
    if ts.size < 2:
        raise PreconditionError("bounded-growth grid is degenerate: all pairs have t = s")
    if ts.size * (ts.size - 1) < 10 or not (np.any(ts < 0) and np.any(ts > 0)):
        raise PreconditionError(
            "bounded-growth grid needs >= 10 pairs and samples of both signs")
    y, lag, us = _log_norms(op, ts, rate)
    if np.any(~np.isfinite(y)):
        raise NumericalError("evolution operator overflowed on the bounded-growth grid")
    umax = float(np.max(np.abs(rate.log(ts))))
    ut = us + lag
    inner = (np.abs(us) <= 0.5 * umax + 1e-12) & (np.abs(ut) <= 0.5 * umax + 1e-12)
    full = _growth_lp(y, lag, us, eps_max)
    if full is None:
        return BoundedGrowthFit(math.inf, math.inf, eps_max, False, math.inf, y.size)
    if inner.sum() >= 10:
        fit = _growth_lp(y[inner], lag[inner], us[inner], eps_max)
        c, a, eps, _ = fit
        slack = float(np.max(y - (c + a * np.abs(lag) + eps * np.abs(us))))
        slack = max(slack, 0.0)
    else:
        slack = full[3]
    c, a, eps, _ = full
    return BoundedGrowthFit(math.exp(c), a, eps, slack <= fit_tol, slack, int(y.size),
                            {"fit_tol": fit_tol, "eps_max": eps_max})


# ---- smooth presets ----------------------------------------------------------------

def gamma_shift_block(rate: GrowthRate, gamma0: float, dim: int = 1) -> SmoothBlock:
    """A(t) = gamma0 * mu'(t)/mu(t) * Id, whose spectrum is {gamma0}."""
    eye = np.eye(dim)
    return SmoothBlock(lambda t: gamma0 * float(rate.dlog(t)) * eye, dim,
                       f"gamma-shift({gamma0:g})")


def rotating_block(decay: float = -1.0, omega: float = 1.0, wobble: float = 0.5) -> SmoothBlock:
    """2x2 block decay*Id + w(t)*J with w(t) = omega(1 + wobble sin t).

    Its evolution operator is e^{decay (t-s)} times a rotation.
    """
    def f(t):
        w = omega * (1.0 + wobble * math.sin(t))
        return np.array([[decay, w], [-w, decay]])
    return SmoothBlock(f, 2, f"rotating({decay:g},{omega:g},{wobble:g})")


def oscillating_block(mean: float = -1.0, amplitude: float = 0.5) -> SmoothBlock:
    """Scalar a(t) = mean + amplitude cos t."""
    return SmoothBlock(lambda t: np.array([[mean + amplitude * math.cos(t)]]), 1,
                       f"oscillating({mean:g},{amplitude:g})")


def nonuniform_block(omega: float = 1.0, amplitude: float = 0.05) -> SmoothBlock:
    """Scalar a(t) = -omega - amplitude t sin t, with a nonuniform dichotomy."""
    return SmoothBlock(lambda t: np.array([[-omega - amplitude * t * math.sin(t)]]), 1,
                       f"nonuniform({omega:g},{amplitude:g})")


def linear_growth_block(c: float = 1.0) -> SmoothBlock:
    """Scalar a(t) = c t; unbounded, so no bounded growth."""
    return SmoothBlock(lambda t: np.array([[c * t]]), 1, f"linear({c:g})")


SMOOTH_PRESETS = {
    "gamma-shift": gamma_shift_block,
    "rotating": rotating_block,
    "oscillating": oscillating_block,
    "nonuniform": nonuniform_block,
    "linear": linear_growth_block,
}
