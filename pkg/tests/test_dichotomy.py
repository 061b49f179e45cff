import numpy as np
import pytest

from mudnf import dichotomy, growth, linear
from mudnf.errors import PreconditionError, WindowError


def op_of(*rates, rate=None):
    return linear.EvolutionOperator(
        linear.BlockSystem([linear.ConstantBlock([[a]]) for a in rates]), rate)


def test_dichotomy_examples():
    op = op_of(-1.0)
    est = dichotomy.test_dichotomy(op, gamma=0.0)
    assert est.admits and est.rank == 1 and est.alpha == pytest.approx(-1.0, abs=0.02)
    assert not dichotomy.test_dichotomy(op, gamma=-1.0).admits
    saddle = dichotomy.test_dichotomy(op_of(-1.0, 1.0), gamma=0.0)
    assert saddle.admits and saddle.rank == 1 and saddle.projector_blocks == (1,)


def test_uniform_mode_has_no_drift():
    est = dichotomy.test_dichotomy(op_of(-1.0, 2.0), gamma=0.5)
    assert est.theta == 0.0 and est.nu == 0.0 and est.alpha + est.theta < 0 < est.beta - est.nu


def test_spectrum_examples():
    sp = dichotomy.compute_spectrum(op_of(-1.0, 1.0), window=(-5, 5), tol=0.05)
    assert [round(0.5 * (a + b)) for a, b in sp.intervals] == [-1, 1]
    assert all(b - a <= 0.05 for a, b in sp.intervals)
    zero = dichotomy.compute_spectrum(op_of(0.0), window=(-2, 2), tol=0.05)
    (a, b), = zero.intervals
    assert a <= 0.0 <= b and b - a <= 0.05


@pytest.mark.parametrize("rate", [growth.exponential(), growth.polynomial()], ids=["exp", "poly"])
def test_gamma_shift_spectrum(rate):
    op = linear.EvolutionOperator(linear.BlockSystem([linear.gamma_shift_block(rate, 0.8)]), rate)
    (a, b), = dichotomy.compute_spectrum(op, rate, (-3, 3), 0.05).intervals
    assert a - 0.05 <= 0.8 <= b + 0.05


def test_resolvent_verification_and_extreme_ranks():
    op = op_of(-1.0, 0.5, 2.0)
    sp = dichotomy.compute_spectrum(op, window=(-4, 4), tol=0.05)
    assert sp.gap_ranks == (0, 1, 2, 3)
    ivs = sp.intervals
    gaps = [-3.5] + [0.5 * (b1 + a2) for (_, b1), (a2, _) in zip(ivs, ivs[1:])] + [3.5]
    for g, r in zip(gaps, sp.gap_ranks):
        est = dichotomy.test_dichotomy(op, gamma=g)
        assert est.admits and est.rank == r
    for a, b in ivs:
        assert not dichotomy.test_dichotomy(op, gamma=0.5 * (a + b)).admits


def test_block_spectra_in_block_order():
    sp = dichotomy.block_spectra(op_of(1.0, -1.0), window=(-3, 3), tol=0.05)
    assert sp.per_block
    assert [round(0.5 * (a + b)) for a, b in sp.intervals] == [1, -1]


def test_window_too_small():
    with pytest.raises(WindowError):
        dichotomy.compute_spectrum(op_of(-1.0, 1.0), window=(-0.99, 3), tol=0.05)


def test_bad_arguments():
    with pytest.raises(PreconditionError):
        dichotomy.compute_spectrum(op_of(-1.0), tol=0.0)
    with pytest.raises(PreconditionError):
        dichotomy.Spectrum(((1.0, 2.0), (1.5, 3.0)))
    with pytest.raises(PreconditionError):
        dichotomy.Spectrum(((-1.0, -1.0), (1.0, 1.0)), (0, 2, 1))


def test_warns_without_bounded_growth():
    op = linear.EvolutionOperator(linear.BlockSystem([linear.linear_growth_block(1.0)]))
    with pytest.warns(RuntimeWarning):
        try:
            dichotomy.compute_spectrum(op, window=(-3, 3), tol=0.1)
        except Exception:
            pass


def test_nonuniform_mode_accepts_drift():
    op = linear.EvolutionOperator(linear.BlockSystem([linear.nonuniform_block(1.0, 0.05)]))
    est = dichotomy.test_dichotomy(op, gamma=0.0, mode="nonuniform")
    assert est.admits and est.alpha + est.theta < 0
    sp = dichotomy.compute_spectrum(op, window=(-3, 3), tol=0.05, mode="nonuniform")
    (a, b), = sp.intervals
    assert a <= -1.0 <= b
