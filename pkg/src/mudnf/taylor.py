"""Tensor helpers and numerical Taylor coefficients at the origin.

Coefficient tensors for a position j and multi-index k have shape
(d_j, [d_1]*k_1, ..., [d_n]*k_n) and represent D^k F_j(t, 0) / k!, so that
contracting every slot with the matching block of x gives the k-homogeneous
part of the Taylor polynomial.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, PreconditionError

_LETTERS = string.ascii_letters


def tensor_shape(dims: Sequence[int], j0: int, k: Sequence[int]) -> tuple:
    return (dims[j0],) + tuple(dims[b] for b, kb in enumerate(k) for _ in range(kb))


def slot_blocks(k: Sequence[int]) -> tuple:
    return tuple(b for b, kb in enumerate(k) for _ in range(kb))


def symmetrize(tensor: np.ndarray, k: Sequence[int]) -> np.ndarray:
    """Average over permutations of slots that belong to the same block."""
    t = np.asarray(tensor, dtype=float)
    groups, start = [], 1
    for kb in k:
        groups.append(list(range(start, start + kb)))
        start += kb
    for g in groups:
        if len(g) < 2:
            continue
        acc = np.zeros_like(t)
        perms = list(itertools.permutations(g))
        for p in perms:
            axes = list(range(t.ndim))
            for src, dst in zip(g, p):
                axes[src] = dst
            acc += np.transpose(t, axes)
        t = acc / len(perms)
    return t


def apply_slots(tensor: np.ndarray, vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Contract slot p of ``tensor`` with ``vectors[p]``; vectors may be batched."""
    m = tensor.ndim - 1
    if len(vectors) != m:
        raise PreconditionError(f"tensor has {m} slots, got {len(vectors)} vectors")
    if m == 0:
        return np.asarray(tensor, float).copy()
    for p, v in enumerate(vectors):
        if np.shape(v)[-1] != tensor.shape[p + 1]:
            raise PreconditionError(
                f"slot {p} expects dimension {tensor.shape[p + 1]}, got {np.shape(v)[-1]}")
    letters = _LETTERS[1:m + 1]
    spec = "a" + letters + "," + ",".join("..." + c for c in letters) + "->...a"
    return np.einsum(spec, tensor, *vectors)


def taylor_tensor_apply(coeff: np.ndarray, k: Sequence[int], xs: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate the multilinear form on [x_1]^{k_1} ... [x_n]^{k_n}.

    ``xs`` holds one vector per block (entries for blocks with k_i = 0 are
    ignored but must be present).
    """
    k = tuple(int(v) for v in k)
    if len(xs) != len(k):
        raise PreconditionError(f"need {len(k)} block vectors, got {len(xs)}")
    coeff = np.asarray(coeff, float)
    if coeff.ndim != 1 + sum(k):
        raise PreconditionError(f"tensor rank {coeff.ndim} does not match |k| + 1 = {1 + sum(k)}")
    return apply_slots(coeff, [np.asarray(xs[b], float) for b in slot_blocks(k)])


# ---- polynomial fitting at the origin --------------------------------------------------

def monomials(d: int, degree: int) -> list[tuple]:
    """Exponent vectors with total degree <= ``degree``, graded."""
    out = []
    for m in range(degree + 1):
        for c in itertools.combinations_with_replacement(range(d), m):
            alpha = [0] * d
            for i in c:
                alpha[i] += 1
            out.append(tuple(alpha))
    return out


def _chebyshev(npts: int) -> np.ndarray:
    i = np.arange(npts)
    return np.cos(np.pi * (2 * i + 1) / (2 * npts))


@dataclass
class OriginFit:
    """Monomial coefficients c_alpha of a field around x = 0."""

    coeffs: dict
    radius: float
    degree: int


def fit_origin(field: Callable[[np.ndarray], np.ndarray], d: int, degree: int,
               radius: float, *, vectorized: bool = False) -> OriginFit:
    """Least-squares polynomial of total degree ``degree`` on a Chebyshev tensor stencil.

    With ``vectorized`` the field is called once on the (M, d) array of
    stencil points.
    """
    nodes = _chebyshev(degree + 1)
    grid = np.array(list(itertools.product(nodes, repeat=d)))
    pts = radius * grid
    if vectorized:
        vals = np.asarray(field(pts), float).reshape(len(pts), -1)
    else:
        vals = np.array([np.asarray(field(p), float) for p in pts])
    mons = monomials(d, degree)
    vand = np.column_stack([np.prod(grid ** np.array(a)[None, :], axis=1) for a in mons])
    sol, *_ = np.linalg.lstsq(vand, vals, rcond=None)
    coeffs = {a: sol[i] / radius ** sum(a) for i, a in enumerate(mons)}
    return OriginFit(coeffs, radius, degree)


def block_pattern(alpha: Sequence[int], dims: Sequence[int]) -> tuple:
    offs = np.concatenate([[0], np.cumsum(dims)])
    return tuple(int(sum(alpha[offs[b]:offs[b + 1]])) for b in range(len(dims)))


def tensor_from_fit(fit: OriginFit, dims: Sequence[int], j0: int, k: Sequence[int]) -> np.ndarray:
    """Symmetric coefficient tensor for (j, k) from monomial coefficients."""
    k = tuple(int(v) for v in k)
    offs = np.concatenate([[0], np.cumsum(dims)])
    shape = tensor_shape(dims, j0, k)
    out = np.zeros(shape)
    kfact = math.prod(math.factorial(v) for v in k)
    sl = slice(offs[j0], offs[j0 + 1])
    blocks = slot_blocks(k)
    for idx in itertools.product(*[range(dims[b]) for b in blocks]):
        alpha = [0] * int(offs[-1])
        for b, i in zip(blocks, idx):
            alpha[offs[b] + i] += 1
        c = fit.coeffs.get(tuple(alpha))
        if c is None:
            raise PreconditionError("fit degree is below the requested order")
        afact = math.prod(math.factorial(v) for v in alpha)
        out[(slice(None),) + idx] = np.asarray(c)[sl] * afact / kfact
    return out


@dataclass
class CoeffEstimate:
    tensor: np.ndarray
    error: float

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.tensor))) if self.tensor.size else 0.0


def richardson(estimates: Sequence[np.ndarray], p: int) -> tuple[np.ndarray, float]:
    """Two-level extrapolation of estimates at radii r, r/2, r/4, ...

    The first level removes an r^p error term and the second an r^(p+1)
    term, covering both parities of the leading aliasing term on symmetric
    stencils. The error bar is the change made by the last level.
    """
    est = [np.asarray(e, float) for e in estimates]
    if len(est) == 1:
        return est[0], math.inf
    level = est
    q = max(p, 1)
    last = est[-1]
    for _ in range(2):
        if len(level) < 2:
            break
        f = 2.0 ** q
        level = [(f * level[i + 1] - level[i]) / (f - 1.0) for i in range(len(level) - 1)]
        err = float(np.max(np.abs(level[-1] - last))) if last.size else 0.0
        last = level[-1]
        q += 1
    return last, err


def estimate_coefficient(field: Callable[[np.ndarray], np.ndarray], dims: Sequence[int],
                         j0: int, m: Sequence[int], *,
                         radii: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
                         degree: int | None = None,
                         domain_radius: float = math.inf,
                         vectorized: bool = False) -> CoeffEstimate:
    """Estimate D^m field_j(0)/m! by polynomial fits on shrinking stencils."""
    m = tuple(int(v) for v in m)
    order = sum(m)
    d = int(sum(dims))
    deg = degree if degree is not None else order + 4
    if deg < order:
        raise PreconditionError("fit degree below requested order")
    reach = max(radii) * math.sqrt(d)
    if reach > domain_radius:
        raise DomainError(f"stencil radius {reach:.3g} exceeds the domain radius {domain_radius:.3g}")
    fits = [fit_origin(field, d, deg, r, vectorized=vectorized) for r in radii]
    ests = [tensor_from_fit(f, dims, j0, m) for f in fits]
    val, err = richardson(ests, deg + 1 - order)
    return CoeffEstimate(val, err)
