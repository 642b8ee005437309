import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qosgame.efficiency import (
    DEFAULT,
    TOL_ROOT,
    DomainError,
    EfficiencyFunction,
    ExponentialEfficiency,
    InfeasibleTargetError,
    InvalidEfficiencyFunction,
    families,
    make,
    register,
)

# Frozen from a brute-force scan of f(g)/g for M = 100: 10^5 points on
# (0, 15], then 10^5 points on +-1e-3 around the winner (spacing 2e-8).
GAMMA_STAR_100 = 6.4746004017
F_STAR_100 = 0.8569887117


def grid_argmax_ratio(f, n=100_000):
    """Brute-force maximizer of f(g)/g, independent of any root finder.

    f <= 1 gives f(g)/g <= 1/g, so nothing beyond 1/best can win; scanning
    (0, 1/best] is therefore exhaustive.
    """
    best = max(f(g) / g for g in range(1, 21))
    grid = np.linspace(1.0 / best / n, 1.0 / best, n)
    vals = np.array([f(g) / g for g in grid])
    return float(grid[int(np.argmax(vals))])


def binomial_eval(gamma, m):
    e = math.exp(-gamma)
    return sum(math.comb(m, k) * (-e) ** k for k in range(m + 1))


class TestEval:
    def test_zero(self):
        assert DEFAULT.eval(0.0) == 0.0

    def test_saturates(self):
        assert abs(DEFAULT.eval(40.0) - 1.0) <= 1e-9

    def test_near_optimum_value(self):
        v = DEFAULT.eval(6.48)
        assert v == pytest.approx(binomial_eval(6.48, 100), rel=1e-12)
        assert v == pytest.approx(0.858, abs=1e-3)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            DEFAULT.eval(-1e-9)
        with pytest.raises(DomainError):
            DEFAULT.derivative(-1.0)

    def test_callable(self):
        assert DEFAULT(3.0) == DEFAULT.eval(3.0)

    @given(st.floats(0, 20), st.floats(0, 20))
    def test_monotone(self, a, b):
        a, b = sorted((a, b))
        # strictness is only observable where f neither underflows nor rounds to 1
        if b - a > 1e-6 * max(1.0, b) and DEFAULT.eval(b) > 1e-300:
            assert DEFAULT.eval(a) < DEFAULT.eval(b)

    def test_single_inflection(self):
        g = np.linspace(0.01, 30, 30_000)
        d = np.array([DEFAULT.derivative(x) for x in g])
        peak = int(np.argmax(d))
        assert 0 < peak < g.size - 1
        assert np.all(np.diff(d[: peak + 1]) >= 0)
        assert np.all(np.diff(d[peak:]) <= 0)


class TestDerivative:
    def test_zero(self):
        assert DEFAULT.derivative(0.0) == 0.0

    def test_finite_difference_at_3(self):
        h = 1e-6
        fd = (DEFAULT.eval(3 + h) - DEFAULT.eval(3 - h)) / (2 * h)
        assert DEFAULT.derivative(3.0) == pytest.approx(fd, rel=1e-6)

    @pytest.mark.parametrize("m", [2, 10, 100, 1000])
    def test_finite_difference_grid(self, m):
        # central differences in 50-digit arithmetic; in float64 the
        # difference quotient itself loses ~1e-4 on the flat tail
        f = ExponentialEfficiency(m)
        mp.mp.dps = 50
        for g in np.geomspace(1e-3, 30, 200):
            d = f.derivative(g)
            if d < 1e-300:  # float underflow (e.g. g^999 at g = 1e-3)
                continue
            x = mp.mpf(float(g))
            h = mp.mpf("1e-20") * x
            fd = ((1 - mp.exp(-(x + h))) ** m - (1 - mp.exp(-(x - h))) ** m) / (2 * h)
            assert d == pytest.approx(float(fd), rel=1e-6)

    def test_second_derivative(self):
        for g in (0.5, 3.0, 6.0, 12.0):
            h = 1e-5
            fd = (DEFAULT.derivative(g + h) - DEFAULT.derivative(g - h)) / (2 * h)
            assert DEFAULT.second_derivative(g) == pytest.approx(fd, rel=1e-5, abs=1e-12)

    def test_root_condition_at_optimum(self, opt):
        g = opt.gamma_star
        assert DEFAULT.derivative(g) == pytest.approx(DEFAULT.eval(g) / g, abs=TOL_ROOT)


class TestInverse:
    def test_zero(self):
        assert DEFAULT.inverse(0.0) == 0.0

    def test_round_trip_5(self):
        assert abs(DEFAULT.inverse(DEFAULT.eval(5.0)) - 5.0) <= TOL_ROOT

    def test_known_value(self):
        # bisection oracle: f is monotone so plain halving on [0, 20] converges
        lo, hi = 0.0, 20.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if DEFAULT.eval(mid) < 0.858 else (lo, mid)
        got = DEFAULT.inverse(0.858)
        assert got == pytest.approx(lo, abs=1e-9)
        assert got == pytest.approx(6.48, abs=0.01)
        assert abs(DEFAULT.eval(got) - 0.858) <= TOL_ROOT

    def test_round_trip_grid_well_conditioned(self):
        # up to gamma ~ 18 the curve is steep enough for 1e-10 in gamma
        for g in np.linspace(0.1, 18.0, 400):
            assert abs(DEFAULT.inverse(DEFAULT.eval(g)) - g) <= TOL_ROOT

    def test_round_trip_grid_flat_tail(self):
        # Near gamma = 20, f' ~ 2e-7, so one ulp of f (1.1e-16) spans ~5e-10
        # in gamma: the round trip is limited by float64, not the solver.
        for g in np.linspace(18.0, 20.0, 100):
            f = DEFAULT.eval(g)
            slack = 4 * math.ulp(f) / DEFAULT.derivative(g)
            assert abs(DEFAULT.inverse(f) - g) <= max(TOL_ROOT, slack)
            assert abs(DEFAULT.eval(DEFAULT.inverse(f)) - f) <= TOL_ROOT

    def test_rejects_unreachable(self):
        with pytest.raises(InfeasibleTargetError):
            DEFAULT.inverse(1.0)
        with pytest.raises(DomainError):
            DEFAULT.inverse(-0.1)


class TestOptimalSir:
    def test_default_value(self, opt):
        assert opt.gamma_star == pytest.approx(GAMMA_STAR_100, abs=5e-8)
        assert opt.f_star == pytest.approx(F_STAR_100, abs=1e-8)
        assert opt.gamma_star == pytest.approx(6.48, abs=0.01)
        assert opt.gamma_star_db == pytest.approx(8.11, abs=0.01)

    def test_frozen_values_against_grid(self):
        g = grid_argmax_ratio(DEFAULT.eval)
        assert abs(g - GAMMA_STAR_100) < 1e-4

    @pytest.mark.parametrize("m", [2, 10, 100, 1000])
    def test_matches_grid_and_residual(self, m):
        f = ExponentialEfficiency(m)
        o = f.optimal_sir()
        assert abs(f.eval(o.gamma_star) - o.gamma_star * f.derivative(o.gamma_star)) <= TOL_ROOT
        assert abs(o.gamma_star - grid_argmax_ratio(f.eval)) <= 1e-4

    def test_maximizer_neighbours(self, opt):
        g = opt.gamma_star
        best = DEFAULT.eval(g) / g
        assert best >= DEFAULT.eval(g / 2) / (g / 2)
        assert best >= DEFAULT.eval(2 * g) / (2 * g)

    @pytest.mark.parametrize("m", [2, 10, 100, 1000])
    def test_maximizer_on_log_grid(self, m):
        f = ExponentialEfficiency(m)
        o = f.optimal_sir()
        best = o.f_star / o.gamma_star
        grid = np.geomspace(1e-3, 1e3, 10_000)
        assert max(f.eval(x) / x for x in grid) <= best * (1 + 1e-15)

    def test_not_sigmoidal(self):
        with pytest.raises(InvalidEfficiencyFunction):
            ExponentialEfficiency(1)


class TestRegistry:
    def test_make_default(self):
        assert make() == DEFAULT
        assert "exponential" in families()

    def test_unknown(self):
        with pytest.raises(InvalidEfficiencyFunction, match="unknown efficiency family"):
            make("sigmoid9000")

    def test_plug_in_family(self):
        from dataclasses import dataclass

        @register("logistic-test")
        @dataclass(frozen=True)
        class Shifted(EfficiencyFunction):
            # logistic curve pinned to 0 at gamma = 0
            packet_size_bits: int = 100

            def _f(self, g):
                a = 1 / (1 + math.exp(5.0))
                return (1 / (1 + math.exp(5.0 - 2 * g)) - a) / (1 - a)

            def _df(self, g):
                a = 1 / (1 + math.exp(5.0))
                s = 1 / (1 + math.exp(5.0 - 2 * g))
                return 2 * s * (1 - s) / (1 - a)

        f = make("logistic-test")
        o = f.optimal_sir()
        assert abs(o.gamma_star - grid_argmax_ratio(f.eval)) <= 1e-4
        assert f.inverse(f.eval(2.0)) == pytest.approx(2.0, abs=1e-9)
