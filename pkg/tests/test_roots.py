import math

import pytest

from qosgame.roots import BracketError, bisect_newton, expand_upper


def test_bisection_only():
    r = bisect_newton(lambda x: x * x - 2.0, 0.0, 2.0)
    assert r == pytest.approx(math.sqrt(2.0), abs=4e-16)


def test_newton_refinement_matches():
    calls = []

    def fn(x):
        calls.append(x)
        return x ** 3 - 5.0

    r = bisect_newton(fn, 0.0, 5.0, dfn=lambda x: 3 * x * x, xtol=1e-15, ftol=1e-13)
    assert r == pytest.approx(5.0 ** (1 / 3), abs=1e-14)
    # Newton should beat ~50 plain halvings by a wide margin
    assert len(calls) < 20


def test_decreasing_function():
    r = bisect_newton(lambda x: 1.0 - x, 0.0, 3.0)
    assert r == pytest.approx(1.0)


def test_no_sign_change():
    with pytest.raises(BracketError):
        bisect_newton(lambda x: x * x + 1.0, -1.0, 1.0)


def test_endpoint_root():
    assert bisect_newton(lambda x: x, 0.0, 1.0) == 0.0


def test_sign_override_when_function_underflows():
    # x**1100 underflows to 0 below x ~ 0.51, so fn alone has no usable sign
    fn = lambda x: x ** 1100 - 2.0 ** -1100
    sign = lambda x: x - 0.5
    assert fn(1e-3) == 0.0 and fn(0.505) == 0.0
    assert bisect_newton(fn, 1e-3, 2.0, sign=sign) == pytest.approx(0.5, abs=1e-15)


def test_expand_upper():
    assert expand_upper(lambda x: x >= 100, 1.0) == 128.0
    with pytest.raises(BracketError):
        expand_upper(lambda x: False, 1.0, limit=1e6)
