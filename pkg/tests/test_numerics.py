import math

import pytest

from pulsefield._numerics import adaptive_simpson, expand_bracket, safeguarded_newton
from pulsefield.errors import QuadratureFailure, RootFindFailed


def test_simpson_polynomial_exact():
    assert adaptive_simpson(lambda x: x**3 - 2 * x, 0.0, 2.0) == pytest.approx(0.0, abs=1e-14)


def test_simpson_smooth():
    assert adaptive_simpson(math.exp, 0.0, 1.0) == pytest.approx(math.e - 1.0, abs=1e-10)
    assert adaptive_simpson(math.sqrt, 0.0, 1.0) == pytest.approx(2.0 / 3.0, abs=1e-9)


def test_simpson_reversed_interval():
    assert adaptive_simpson(math.cos, 1.0, 0.0) == pytest.approx(-math.sin(1.0), abs=1e-10)


def test_simpson_budget_exhausted():
    with pytest.raises(QuadratureFailure):
        adaptive_simpson(lambda x: math.sin(1.0 / x) if x else 0.0, 0.0, 1.0, atol=1e-14, budget=200)


def test_newton_cubic():
    g = lambda x: (x**3 - 2.0, 3 * x * x)
    lo, hi, glo, ghi = expand_bracket(lambda x: g(x)[0], 0.0, 0.5)
    root = safeguarded_newton(g, lo, hi, glo, ghi, 1.0, 1e-14)
    assert root == pytest.approx(2.0 ** (1 / 3), abs=1e-13)


def test_newton_survives_bad_slope():
    # zero derivative at the initial guess forces a bisection fallback
    g = lambda x: (math.atan(x - 3.0), 0.0 if x == 0.0 else 1.0 / (1.0 + (x - 3.0) ** 2))
    root = safeguarded_newton(g, -10.0, 10.0, g(-10.0)[0], g(10.0)[0], 0.0, 1e-13)
    assert root == pytest.approx(3.0, abs=1e-12)


def test_bracket_failure():
    with pytest.raises(RootFindFailed):
        expand_bracket(lambda x: 1.0 + x * x, -1.0, 1.0, max_doublings=5)
