import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mudnf import admissibility as adm
from mudnf import growth
from mudnf.errors import AdmissibilityDivergence, InconclusiveError, PreconditionError

import oracles

EXP = growth.exponential()
POLY = growth.polynomial()


def test_zero_psi():
    z = adm.zero()
    assert adm.zeta_plus(z, EXP, 1.0, 0.0) == 0.0
    assert adm.zeta_minus(z, EXP, 1.0, 0.0) == 0.0
    rep = adm.check_uniform_admissibility(z, EXP, 0.5)
    assert rep.uniform and rep.sup_value == 0.0


def test_gaussian_against_dense_composite_rule():
    got = adm.zeta_plus(adm.gaussian(), EXP, 1.0, 0.0)
    want = oracles.simpson(lambda s: np.exp(-s * s - s), 0.0, 12.0, 1_000_000)
    assert got == pytest.approx(want, abs=1e-8)


def test_exp_tent_closed_forms():
    psi = adm.exp_tent()
    assert adm.zeta_plus(psi, EXP, 1.0, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert adm.zeta_minus(psi, EXP, 1.0, 0.0) == pytest.approx(0.5, abs=1e-12)


def test_lorentzian_polynomial_rate_oracle():
    psi = adm.lorentzian()
    got = adm.zeta_minus(psi, POLY, 1.0, 0.0)
    # (1+s^2)^-1 (1+|s|)^-1 decays like |s|^-3; integrate the tail in closed form
    body = oracles.zeta_fixed_grid(psi, oracles.log_mu_polynomial, 1.0, 0.0, -1, length=2000.0,
                                   per_unit=200)
    tail, _ = __import__("scipy.integrate", fromlist=["quad"]).quad(
        lambda s: 1.0 / ((1 + s * s) * (1 + s)), 2000.0, np.inf, epsabs=1e-15)
    assert got == pytest.approx(body + tail, abs=1e-8)


def test_bounded_psi_is_uniform():
    rep = adm.check_uniform_admissibility(adm.bounded_const(3.0), EXP, 0.5)
    assert rep.uniform and rep.sup_value == pytest.approx(12.0, rel=1e-9)


def test_abs_psi_admissible_but_not_uniform():
    psi = adm.poly([0.0, 1.0])
    # closed form for t > 0: mu^d zeta+ = e^{t/2} int_t^inf s e^{-s/2} ds = 2t + 4
    for t in (0.5, 3.0, 10.0):
        assert math.exp(0.5 * t) * adm.zeta_plus(psi, EXP, 0.5, t) == pytest.approx(2 * t + 4, rel=1e-9)
    assert all(math.isfinite(v) for row in adm.check_admissibility(psi, EXP, [0.5])[0.5] for v in row)
    with pytest.raises(InconclusiveError) as info:
        adm.check_uniform_admissibility(psi, EXP, 0.5)
    assert info.value.trend["sup"] > info.value.trend["inner_sup"]


def test_growing_psi_is_reported():
    with pytest.raises(AdmissibilityDivergence):
        adm.zeta_plus(adm.exp_growth(1.0), EXP, 1.0, 0.0)
    with pytest.raises((AdmissibilityDivergence, InconclusiveError)):
        adm.check_uniform_admissibility(adm.exp_growth(1.0), EXP, 1.0)


def test_linear_psi_not_uniform_for_slow_rate():
    # |s| against the polynomial rate with delta = 4 is admissible, but the
    # weighted integral grows like t^2 so uniformity fails
    with pytest.raises(InconclusiveError):
        adm.check_uniform_admissibility(adm.poly([0.0, 1.0]), POLY, 4.0,
                                        grid=POLY.inverse_log(np.linspace(-8, 8, 81)))


def test_preconditions():
    with pytest.raises(PreconditionError):
        adm.zeta_plus(adm.gaussian(), EXP, 0.0, 0.0)
    with pytest.raises(PreconditionError):
        adm.bounded_const(-1.0)
    with pytest.raises(PreconditionError):
        adm.gaussian().scaled(-2.0)
    with pytest.raises(PreconditionError):
        adm.check_uniform_admissibility(adm.gaussian(), EXP, 0.5, grid=[0.0, 1.0, 2.0])


def test_tabulated_psi():
    ts = np.linspace(-5, 5, 101)
    psi = adm.tabulated(ts, np.exp(-np.abs(ts)), adm.DecayDescriptor(1.0, 0.0, 1.0))
    assert adm.zeta_plus(psi, EXP, 1.0, 0.0) == pytest.approx(0.5, rel=2e-3)
    with pytest.raises(PreconditionError):
        adm.tabulated(ts, np.exp(-np.abs(ts)), None)


PSIS = [adm.gaussian(1.0), adm.exp_tent(2.0), adm.lorentzian(1.0)]


@settings(max_examples=25, deadline=None)
@given(st.floats(-4, 4), st.sampled_from([0.5, 1.0, 2.0]))
def test_additivity(t, delta):
    a, b = PSIS[0], PSIS[1]
    both = adm.AdmissibleCandidate(lambda s: a(s) + b(s), adm.DecayDescriptor(3.0, 0.0, 0.0))
    for fn in (adm.zeta_plus, adm.zeta_minus):
        lhs = fn(both, EXP, delta, t)
        assert lhs == pytest.approx(fn(a, EXP, delta, t) + fn(b, EXP, delta, t), rel=1e-8, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(-4, 4), st.floats(0.01, 2.0))
def test_monotone_in_t(t, step):
    for psi in PSIS:
        assert adm.zeta_plus(psi, EXP, 1.0, t + step) <= adm.zeta_plus(psi, EXP, 1.0, t) + 1e-12
        assert adm.zeta_minus(psi, EXP, 1.0, t + step) >= adm.zeta_minus(psi, EXP, 1.0, t) - 1e-12


@pytest.mark.parametrize("rate", [EXP, POLY], ids=["exp", "poly"])
def test_fundamental_theorem(rate):
    h = 1e-4
    for psi in (adm.gaussian(), adm.lorentzian()):
        for t in (-1.5, 0.4, 2.0):
            fd = (adm.zeta_plus(psi, rate, 1.0, t + h) - adm.zeta_plus(psi, rate, 1.0, t - h)) / (2 * h)
            assert fd == pytest.approx(-float(psi(t)) * math.exp(-float(rate.log(t))), abs=1e-5)


def test_profile_matches_pointwise_values():
    grid = np.linspace(-3, 3, 13)
    prof = adm.zeta_profile(adm.gaussian(), EXP, 0.5, grid)
    for p, t in enumerate(grid):
        assert prof.plus[p] == pytest.approx(adm.zeta_plus(adm.gaussian(), EXP, 0.5, t), rel=1e-9, abs=1e-13)
        assert prof.minus[p] == pytest.approx(adm.zeta_minus(adm.gaussian(), EXP, 0.5, t), rel=1e-9, abs=1e-13)


def test_check_admissibility_table():
    out = adm.check_admissibility(adm.gaussian(), EXP, [0.5, 1.0])
    assert set(out) == {0.5, 1.0} and all(len(v) == 3 for v in out.values())
