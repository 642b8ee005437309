"""Bracketed scalar root finding: bisection safeguard with Newton refinement."""

from __future__ import annotations

import math
from typing import Callable, Optional


class BracketError(ValueError):
    """The supplied interval does not contain a sign change."""


def bisect_newton(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    dfn: Optional[Callable[[float], float]] = None,
    sign: Optional[Callable[[float], float]] = None,
    xtol: float = 0.0,
    ftol: float = 0.0,
    maxiter: int = 500,
) -> float:
    """Find a root of ``fn`` inside ``[lo, hi]``.

    Each iteration tries a Newton step from the current best point when
    ``dfn`` is given; the step is accepted only if it lands inside the
    current bracket, otherwise the interval is bisected.  ``sign`` may
    be supplied when ``fn`` itself loses its sign to underflow near an
    endpoint (it must agree in sign with ``fn`` wherever ``fn`` is nonzero).

    Iteration stops when ``|fn(x)| <= ftol`` and either the bracket width
    or the pending Newton step is below ``xtol``, or when the bracket can no
    longer be split in floating point.
    """
    sgn = sign if sign is not None else fn
    s_lo, s_hi = sgn(lo), sgn(hi)
    if s_lo == 0:
        return lo
    if s_hi == 0:
        return hi
    if (s_lo > 0) == (s_hi > 0):
        raise BracketError(f"no sign change on [{lo!r}, {hi!r}]")
    neg_at_lo = s_lo < 0

    x = 0.5 * (lo + hi)
    step_old = hi - lo
    for _ in range(maxiter):
        fx = fn(x)
        sx = sgn(x) if sign is not None else fx
        if sx == 0:
            return x
        if (sx < 0) == neg_at_lo:
            lo = x
        else:
            hi = x
        if abs(fx) <= ftol and (hi - lo) <= xtol:
            return x

        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # bracket collapsed to adjacent floats
            return x
        nxt = mid
        if dfn is not None:
            d = dfn(x)
            # Newton only when it stays inside and converges faster than halving
            if d != 0 and math.isfinite(d) and abs(2.0 * fx) <= abs(step_old * d):
                cand = x - fx / d
                if lo <= cand <= hi:
                    if cand == x or (abs(cand - x) <= xtol and abs(fx) <= ftol):
                        return x
                    nxt = cand
        step_old = abs(nxt - x)
        x = nxt
    return x


def expand_upper(
    predicate: Callable[[float], bool], start: float, limit: float = 1e300
) -> float:
    """Double ``start`` until ``predicate`` holds; raise BracketError past ``limit``."""
    x = start
    while not predicate(x):
        x *= 2.0
        if x > limit or not math.isfinite(x):
            raise BracketError(f"no bracket found below {limit!r}")
    return x
