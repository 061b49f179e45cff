import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mudnf.errors import DomainError, PreconditionError
from mudnf.taylor import (estimate_coefficient, monomials, symmetrize, taylor_tensor_apply,
                          tensor_shape)


def test_apply_examples():
    c = np.array([[1.5]])
    assert taylor_tensor_apply(c.reshape(1, 1, 1), (2,), [np.array([2.0])])[0] == pytest.approx(6.0)
    coupling = np.zeros((1, 1, 1))
    coupling[0, 0, 0] = 0.7
    out = taylor_tensor_apply(coupling, (1, 1), [np.array([1.0]), np.array([3.0])])
    assert out[0] == pytest.approx(2.1)
    t = np.random.default_rng(0).normal(size=(2, 2, 3))
    assert np.all(taylor_tensor_apply(t, (1, 1), [np.zeros(2), np.ones(3)]) == 0.0)


def test_shape_mismatch():
    with pytest.raises(PreconditionError):
        taylor_tensor_apply(np.ones((1, 2, 2)), (2,), [np.ones(3)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3))
def test_symmetry_and_scaling(seed, s):
    rng = np.random.default_rng(seed)
    dims, k = (2, 3), (2, 1)
    raw = rng.normal(size=tensor_shape(dims, 0, k))
    sym = symmetrize(raw, k)
    x1, x2 = rng.normal(size=2), rng.normal(size=3)
    # swapping the two first-block slots leaves the symmetrized tensor unchanged
    assert np.allclose(sym, np.swapaxes(sym, 1, 2))
    base = taylor_tensor_apply(sym, k, [x1, x2])
    assert np.allclose(taylor_tensor_apply(sym, k, [s * x1, s * x2]), s ** 3 * base, atol=1e-12)
    assert np.allclose(base, taylor_tensor_apply(raw, k, [x1, x2]))


def test_batched_apply_matches_loop():
    rng = np.random.default_rng(1)
    tensor = symmetrize(rng.normal(size=(2, 2, 2)), (2,))
    xs = rng.normal(size=(7, 2))
    batched = taylor_tensor_apply(tensor, (2,), [xs])
    for p in range(7):
        assert np.allclose(batched[p], taylor_tensor_apply(tensor, (2,), [xs[p]]))


def test_monomial_count():
    assert len(monomials(3, 4)) == math.comb(3 + 4, 4)


def test_fit_recovers_sympy_coefficients():
    a, b = sp.symbols("a b")
    f1 = sp.sin(a) * b ** 2 + sp.exp(a * b) - 1 - a * b
    f2 = a ** 3 - 2 * a * b ** 2
    field = lambda x: np.stack([np.sin(x[..., 0]) * x[..., 1] ** 2 + np.expm1(x[..., 0] * x[..., 1])
                                - x[..., 0] * x[..., 1], x[..., 0] ** 3 - 2 * x[..., 0] * x[..., 1] ** 2], -1)
    dims = (1, 1)
    for j0, expr in ((0, f1), (1, f2)):
        for k in ((2, 0), (1, 1), (0, 2), (2, 1), (1, 2), (3, 0)):
            want = float(sp.diff(expr, a, k[0], b, k[1]).subs({a: 0, b: 0})) / (math.factorial(k[0]) * math.factorial(k[1]))
            est = estimate_coefficient(field, dims, j0, k, vectorized=True)
            # with one-dimensional blocks the tensor entry is the monomial coefficient
            assert float(est.tensor.ravel()[0]) == pytest.approx(want, abs=1e-8)


def test_fit_splits_mixed_monomials_inside_a_block():
    # x1^2 + 3 x1 x2 in one 2-d block: symmetric matrix [[1, 1.5], [1.5, 0]]
    field = lambda x: np.stack([x[..., 0] ** 2 + 3 * x[..., 0] * x[..., 1], np.zeros(x.shape[:-1])], -1)
    est = estimate_coefficient(field, (2,), 0, (2,), vectorized=True)
    assert np.allclose(est.tensor[0], [[1.0, 1.5], [1.5, 0.0]], atol=1e-9)
    assert np.allclose(est.tensor[1], 0.0, atol=1e-9)


def test_stencil_must_fit_domain():
    with pytest.raises(DomainError):
        estimate_coefficient(lambda x: x ** 2, (1,), 0, (2,), domain_radius=1e-3, vectorized=True)
