import math

import numpy as np
import pytest

from mudnf.errors import NumericalError
from mudnf.quadrature import integrate


def test_polynomials_are_exact():
    res = integrate(lambda s: s ** 6 - 2 * s, -1.0, 2.0)
    assert res.value == pytest.approx((2 ** 7 + 1) / 7 - 3.0, rel=1e-14)


def test_vector_valued_integrand():
    res = integrate(lambda s: np.stack([np.sin(s), np.cos(s), np.exp(-s)], axis=1), 0.0, math.pi)
    assert np.allclose(res.value, [2.0, 0.0, 1.0 - math.exp(-math.pi)], atol=1e-12)


def test_reversed_and_empty_intervals():
    f = lambda s: np.exp(s)
    assert integrate(f, 1.0, 0.0).value == pytest.approx(-(math.e - 1.0))
    assert integrate(f, 2.0, 2.0).value == 0.0


def test_kinks_as_points():
    res = integrate(lambda s: np.abs(s - 0.3), -1.0, 1.0, points=[0.3])
    assert res.value == pytest.approx(0.5 * 1.3 ** 2 + 0.5 * 0.7 ** 2, rel=1e-13)
    assert res.panels <= 4


def test_error_estimate_covers_true_error():
    res = integrate(lambda s: 1.0 / (1.0 + 25 * s * s), -1.0, 1.0, rtol=1e-8)
    exact = 0.4 * math.atan(5.0)
    assert abs(res.value - exact) <= max(res.error, 1e-14) * 10


def test_singular_integrand_fails_loudly():
    with pytest.raises(NumericalError):
        integrate(lambda s: 1.0 / s, 0.0, 1.0, max_rounds=20)
