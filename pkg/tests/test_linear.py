import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mudnf import growth, linear
from mudnf.errors import PreconditionError

from oracles import phi_diagonal

triple = st.tuples(*[st.floats(-10, 10, allow_nan=False)] * 3)


def diag_op(rates=(-1.0, 1.0), rate=None):
    return linear.EvolutionOperator(
        linear.BlockSystem([linear.ConstantBlock([[a]]) for a in rates]), rate)


def piecewise():
    return linear.PiecewiseConstantBlock((0.0,), (np.array([[-1.0]]), np.array([[-2.0]])))


def test_evolve_examples():
    op = diag_op()
    assert np.allclose(op.evolve(1.0, 0.0), np.diag([math.exp(-1), math.e]))
    assert np.array_equal(op.evolve(2.0, 2.0), np.eye(2))
    assert op.evolve_block(1, 1.0, 0.0)[0, 0] == pytest.approx(math.exp(-1))
    assert op.evolve_block(2, 1.0, 0.0)[0, 0] == pytest.approx(math.e)
    pw = linear.EvolutionOperator(linear.BlockSystem([piecewise()]))
    assert pw.evolve_block(1, 1.0, -1.0)[0, 0] == pytest.approx(math.exp(-3))


def test_evolve_block_index_range():
    with pytest.raises(PreconditionError):
        diag_op().evolve_block(3, 1.0, 0.0)


@pytest.mark.parametrize("rate", [growth.exponential(), growth.polynomial()], ids=["exp", "poly"])
def test_gamma_shift_block_closed_form(rate):
    op = linear.EvolutionOperator(linear.BlockSystem([linear.gamma_shift_block(rate, 0.7)]), rate)
    for t, s in [(2.0, -1.0), (-3.0, 4.0), (0.5, 0.0)]:
        want = math.exp(0.7 * (float(rate.log(t)) - float(rate.log(s))))
        assert op.evolve(t, s)[0, 0] == pytest.approx(want, rel=1e-8)


def test_shifted_examples():
    r = growth.exponential()
    sysm = linear.BlockSystem([linear.ConstantBlock([[-1.0]])])
    assert linear.shifted(sysm, r, 0.0) is sysm
    zero = linear.EvolutionOperator(linear.shifted(sysm, r, -1.0), r)
    assert zero.evolve(3.0, -2.0)[0, 0] == pytest.approx(1.0)
    d = linear.shifted(linear.BlockSystem([linear.ConstantBlock([[-1.0]]), linear.ConstantBlock([[1.0]])]), r, 2.0)
    assert np.allclose(d.A(0.3), np.diag([-3.0, -1.0]))


def test_shifted_scaling_law_polynomial():
    r = growth.polynomial()
    base = linear.BlockSystem([linear.rotating_block()])
    op = linear.EvolutionOperator(base, r)
    sh = linear.EvolutionOperator(linear.shifted(base, r, 0.4), r)
    t, s = 2.0, -1.5
    factor = math.exp(-0.4 * (float(r.log(t)) - float(r.log(s))))
    assert np.allclose(sh.evolve(t, s), factor * op.evolve(t, s), rtol=1e-7, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(triple)
def test_cocycle_constant_and_piecewise(tsr):
    t, s, r = tsr
    sysm = linear.BlockSystem([linear.ConstantBlock([[-0.5, 1.0], [0.0, -0.2]]), piecewise()])
    op = linear.EvolutionOperator(sysm)
    lhs = op.evolve(t, s) @ op.evolve(s, r)
    rhs = op.evolve(t, r)
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * max(1.0, np.max(np.abs(rhs)))


SMOOTH = linear.EvolutionOperator(linear.BlockSystem([linear.rotating_block(), linear.oscillating_block()]))


@settings(max_examples=15, deadline=None)
@given(triple)
def test_cocycle_smooth(tsr):
    t, s, r = tsr
    lhs = SMOOTH.evolve(t, s) @ SMOOTH.evolve(s, r)
    rhs = SMOOTH.evolve(t, r)
    assert np.max(np.abs(lhs - rhs)) <= 1e-6 * max(1.0, np.max(np.abs(rhs)))
    assert np.allclose(SMOOTH.evolve(t, s) @ SMOOTH.evolve(s, t), np.eye(3), atol=1e-6)


def test_derivative_identity_smooth():
    rng = np.random.default_rng(2)
    h = 1e-5
    for _ in range(10):
        s, t = rng.uniform(-5, 5, 2)
        for i in (1, 2):
            fd = (SMOOTH.evolve_block(i, s, t + h) - SMOOTH.evolve_block(i, s, t - h)) / (2 * h)
            want = -SMOOTH.evolve_block(i, s, t) @ SMOOTH.system.block_matrix(i, t)
            assert np.max(np.abs(fd - want)) <= 1e-4 * max(1.0, np.max(np.abs(want)))


def test_blocks_never_mix():
    phi = SMOOTH.evolve(3.0, -2.0)
    assert np.all(phi[:2, 2:] == 0.0) and np.all(phi[2:, :2] == 0.0)


def test_constant_blocks_match_closed_form():
    op = diag_op((-1.0, 0.5, 2.0))
    for t, s in [(1.0, -2.0), (-4.0, 3.0)]:
        assert np.allclose(op.evolve(t, s), phi_diagonal([-1.0, 0.5, 2.0], t, s), rtol=1e-13)


def test_propagator_and_pullback_agree_with_evolve():
    for op in (diag_op(), SMOOTH):
        nodes = np.array([-2.0, -0.5, 0.0, 1.0, 2.5])
        prop = op.propagator_from(0, 0.0, -2.0, 2.5)(nodes)
        pull = op.pullback_from(0, 0.0, -2.0, 2.5)(nodes)
        for p, s in enumerate(nodes):
            assert np.allclose(prop[p], op.evolve_block(1, s, 0.0), rtol=1e-8, atol=1e-10)
            assert np.allclose(pull[p], op.evolve_block(1, 0.0, s), rtol=1e-8, atol=1e-10)


def test_block_system_structure():
    sysm = linear.BlockSystem([linear.ConstantBlock(np.eye(2)), linear.ConstantBlock([[3.0]])])
    assert sysm.d == 3 and sysm.dims == (2, 1)
    a = sysm.A(0.0)
    assert a[0, 2] == 0.0 and a[2, 0] == 0.0
    assert [x.tolist() for x in sysm.split([1.0, 2.0, 3.0])] == [[1.0, 2.0], [3.0]]


def test_fit_bounded_growth_examples():
    fit = linear.fit_bounded_growth(diag_op())
    assert fit.admits
    assert fit.a == pytest.approx(1.0, abs=0.1) and fit.epsilon == pytest.approx(0.0, abs=0.1)
    z = linear.fit_bounded_growth(diag_op((0.0,)))
    assert z.admits and z.a == pytest.approx(0.0, abs=1e-9) and z.K == pytest.approx(1.0)
    unbounded = linear.EvolutionOperator(linear.BlockSystem([linear.linear_growth_block(1.0)]))
    grid = np.linspace(-10, 10, 21)
    assert not linear.fit_bounded_growth(unbounded, times=grid, eps_max=0.0).admits


def test_fit_bounded_growth_degenerate_grid():
    with pytest.raises(PreconditionError):
        linear.fit_bounded_growth(diag_op(), times=[1.0, 1.0])
