"""Packet success rate curves f(gamma) and the energy-efficient SIR target.

An efficiency function maps the received SIR (linear, not dB) to the
probability that a packet is received without error on one transmission.
Every curve used here is sigmoidal with ``f(0) = 0`` and ``f -> 1`` as the
SIR grows.  The SIR that maximizes ``f(gamma) / gamma`` (bits per joule for
a fixed rate) is the root of ``f(gamma) = gamma * f'(gamma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Type

from .roots import BracketError, bisect_newton, expand_upper

#: absolute tolerance on root residuals
TOL_ROOT = 1e-10


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class InfeasibleTargetError(DomainError):
    """A success probability of 1 (or more) cannot be reached at finite SIR."""


class InvalidEfficiencyFunction(ValueError):
    """The curve does not have the sigmoidal shape needed for a unique optimum."""


@dataclass(frozen=True)
class OptimalSir:
    gamma_star: float
    f_star: float

    @property
    def gamma_star_db(self) -> float:
        return 10.0 * math.log10(self.gamma_star)


class EfficiencyFunction:
    """Base class for success-rate curves.

    Subclasses implement :meth:`_f` and :meth:`_df`.  Overriding
    :meth:`_d2f` and :meth:`elasticity` is optional but improves accuracy
    (the defaults use finite differences and a plain ratio respectively).
    Instances are frozen dataclasses and therefore safe to share.
    """

    name = "abstract"

    def _f(self, gamma: float) -> float:
        raise NotImplementedError

    def _df(self, gamma: float) -> float:
        raise NotImplementedError

    def _d2f(self, gamma: float) -> float:
        h = 1e-5 * max(1.0, gamma)
        lo = max(0.0, gamma - h)
        return (self._df(gamma + h) - self._df(lo)) / (gamma + h - lo)

    def elasticity(self, gamma: float) -> float:
        """gamma * f'(gamma) / f(gamma); exceeds 1 below the optimum."""
        fv = self._f(gamma)
        if fv == 0.0:
            return math.inf
        return gamma * self._df(gamma) / fv

    @staticmethod
    def _check(gamma: float) -> None:
        if not gamma >= 0.0:
            raise DomainError(f"SIR must be non-negative, got {gamma!r}")

    def __call__(self, gamma: float) -> float:
        return self.eval(gamma)

    def eval(self, gamma: float) -> float:
        self._check(gamma)
        return self._f(gamma)

    def derivative(self, gamma: float) -> float:
        self._check(gamma)
        return self._df(gamma)

    def second_derivative(self, gamma: float) -> float:
        self._check(gamma)
        return self._d2f(gamma)

    def inverse(self, eta: float) -> float:
        """SIR at which the success probability first reaches ``eta``.

        Solved by bisection on the monotone curve; no closed form is used
        even when the family has one.
        """
        if not eta >= 0.0:
            raise DomainError(f"success probability must be >= 0, got {eta!r}")
        if eta >= 1.0:
            raise InfeasibleTargetError(
                f"success probability {eta!r} needs an infinite SIR"
            )
        if eta == 0.0:
            return 0.0
        hi = expand_upper(lambda g: self._f(g) >= eta, 1.0)
        # leftmost crossing: ties (f(g) == eta over a float plateau) count as above
        return bisect_newton(
            lambda g: self._f(g) - eta,
            0.0,
            hi,
            sign=lambda g: 1.0 if self._f(g) >= eta else -1.0,
        )

    def optimal_sir(self) -> OptimalSir:
        return optimal_sir(self)


def _log1mexp(x: float) -> float:
    """log(1 - exp(-x)) for x > 0 without cancellation."""
    if x < math.log(2.0):
        return math.log(-math.expm1(-x))
    return math.log1p(-math.exp(-x))


@dataclass(frozen=True)
class ExponentialEfficiency(EfficiencyFunction):
    """f(gamma) = (1 - exp(-gamma))**M for packets of M bits."""

    packet_size_bits: int = 100
    name = "exponential"

    def __post_init__(self) -> None:
        m = self.packet_size_bits
        if isinstance(m, bool) or int(m) != m or m < 2:
            raise InvalidEfficiencyFunction(
                f"packet size must be an integer >= 2 for a sigmoidal curve, got {m!r}"
            )

    def _f(self, gamma: float) -> float:
        if gamma == 0.0:
            return 0.0
        return math.exp(self.packet_size_bits * _log1mexp(gamma))

    def _df(self, gamma: float) -> float:
        m = self.packet_size_bits
        return m * (-math.expm1(-gamma)) ** (m - 1) * math.exp(-gamma)

    def _d2f(self, gamma: float) -> float:
        m = self.packet_size_bits
        u = -math.expm1(-gamma)
        e = math.exp(-gamma)
        return m * e * u ** (m - 2) * ((m - 1) * e - u)

    def elasticity(self, gamma: float) -> float:
        if gamma == 0.0:
            return float(self.packet_size_bits)
        return self.packet_size_bits * gamma * math.exp(-gamma) / -math.expm1(-gamma)


_REGISTRY: Dict[str, Type[EfficiencyFunction]] = {}


def register(name: str) -> Callable[[Type[EfficiencyFunction]], Type[EfficiencyFunction]]:
    """Class decorator adding a family to the lookup table used by :func:`make`."""

    def deco(cls: Type[EfficiencyFunction]) -> Type[EfficiencyFunction]:
        _REGISTRY[name] = cls
        return cls

    return deco


register("exponential")(ExponentialEfficiency)
DEFAULT_FAMILY = "exponential"


def families() -> list:
    return sorted(_REGISTRY)


def make(family: str = DEFAULT_FAMILY, packet_size_bits: int = 100) -> EfficiencyFunction:
    try:
        cls = _REGISTRY[family]
    except KeyError:
        raise InvalidEfficiencyFunction(
            f"unknown efficiency family {family!r}; known: {', '.join(families())}"
        ) from None
    return cls(packet_size_bits=packet_size_bits)


def optimal_sir(f: EfficiencyFunction) -> OptimalSir:
    """Solve f(gamma) = gamma f'(gamma) for the unique positive root."""
    m = getattr(f, "packet_size_bits", 100)
    lo, hi = 1e-6, 10.0 * m

    def side(g: float) -> float:
        # negative below the optimum, positive above; immune to f underflow
        return 1.0 - f.elasticity(g)

    if not side(lo) < 0:
        raise InvalidEfficiencyFunction("f(g)/g is not increasing near zero")
    try:
        if not side(hi) > 0:
            hi = expand_upper(lambda g: side(g) > 0, hi)
        root = bisect_newton(
            lambda g: f._f(g) - g * f._df(g),
            lo,
            hi,
            dfn=lambda g: -g * f._d2f(g),
            sign=side,
            xtol=1e-14,
            ftol=TOL_ROOT * 1e-2,
        )
    except BracketError as exc:
        raise InvalidEfficiencyFunction(str(exc)) from exc
    residual = f._f(root) - root * f._df(root)
    if abs(residual) > TOL_ROOT:
        raise InvalidEfficiencyFunction(
            f"root residual {residual:.3e} exceeds {TOL_ROOT:.0e}"
        )
    return OptimalSir(gamma_star=root, f_star=f._f(root))


DEFAULT = ExponentialEfficiency(100)
