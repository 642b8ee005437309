"""Admission control: which users to let in so total bits-per-joule is largest.

At the Pareto-dominant equilibrium the utility of admitted user ``l`` is
``c * h_l * (1 - sum(phi)) / (1 - phi_l)`` with the constant
``c = B f* / (noise * gamma*)``.  Most functions here work with the
"normalized" objective that drops ``c`` (and, for class-level questions,
the common mean gain as well).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .game import FEASIBILITY_GUARD, InfeasibleError, SystemParams

#: exhaustive subset search is refused above this many candidates
MAX_EXHAUSTIVE = 25
_REL_TIE = 1e-12


class TooManyCandidates(ValueError):
    pass


@dataclass(frozen=True)
class ClassSpec:
    label: str
    size: float
    source_rate: float = math.nan
    max_delay: float = math.nan
    population: Optional[int] = None  # None: effectively unlimited

    def __post_init__(self) -> None:
        if not 0 < self.size < 1:
            raise ValueError(f"class {self.label!r}: size must lie in (0, 1), got {self.size!r}")


@dataclass
class AdmissionDecision:
    admitted: Tuple[int, ...]
    total_size: float
    total_utility: float
    labels: Tuple[str, ...] = ()
    loss_vs_optimal: float = 0.0

    def counts(self) -> Dict[str, int]:
        """Per-class counts when ``admitted`` holds an allocation vector."""
        return dict(zip(self.labels, self.admitted))


def budget_feasible(sizes: Sequence[float]) -> bool:
    return float(np.sum(sizes, dtype=float)) < 1.0 - FEASIBILITY_GUARD if len(sizes) else True


def network_capacity(phi: float) -> int:
    """Largest number of identical users of size ``phi`` whose total stays below one."""
    if not 0 < phi < 1:
        raise ValueError(f"size must lie in (0, 1), got {phi!r}")
    k = math.floor(1.0 / phi)
    while k > 0 and not budget_feasible([phi] * k):
        k -= 1
    while budget_feasible([phi] * (k + 1)):
        k += 1
    return k


def normalized_objective(sizes: Sequence[float], gains: Optional[Sequence[float]] = None) -> float:
    """(1 - sum(phi)) * sum(h / (1 - phi)); gains default to one."""
    phi = np.asarray(sizes, dtype=float)
    if phi.size == 0:
        return 0.0
    h = np.ones_like(phi) if gains is None else np.asarray(gains, dtype=float)
    if not budget_feasible(phi):
        raise InfeasibleError(f"total size {phi.sum():.6g} >= 1")
    return float((1.0 - phi.sum()) * np.sum(h / (1.0 - phi)))


def total_utility_objective(
    sizes: Sequence[float],
    gains: Sequence[float],
    params: SystemParams,
    f_star: float,
    gamma_star: float,
) -> float:
    """Sum of the admitted users' equilibrium utilities, in bits per joule."""
    scale = params.bandwidth * f_star / (params.noise_power * gamma_star)
    return scale * normalized_objective(sizes, gains)


def _subset_tables(phi: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # sums over all 2^n subsets, bit i of the index selects item i
    s = np.zeros(1)
    t = np.zeros(1)
    for a, b in zip(phi, w):
        s = np.concatenate((s, s + a))
        t = np.concatenate((t, t + b))
    return s, t


def _reversed_bits(n: int) -> np.ndarray:
    # entry m holds m with its n low bits in reverse order
    m = np.arange(1 << n, dtype=np.int64)
    out = np.zeros_like(m)
    for b in range(n):
        out |= ((m >> b) & 1) << (n - 1 - b)
    return out


def optimal_subset_exhaustive(
    sizes: Sequence[float],
    gains: Optional[Sequence[float]] = None,
) -> AdmissionDecision:
    """Exact best subset of candidates by full enumeration.

    Objective is the normalized total utility.  Among subsets whose
    objective is within a relative 1e-12 of the best, the one whose 0/1
    membership vector is lexicographically largest wins (earlier candidates
    are preferred), so the answer does not depend on enumeration order.
    """
    phi = np.asarray(sizes, dtype=float)
    k = phi.size
    if k > MAX_EXHAUSTIVE:
        raise TooManyCandidates(
            f"{k} candidates exceeds the exhaustive limit of {MAX_EXHAUSTIVE}; "
            "use multiclass_optimal for class-based pools"
        )
    if np.any((phi <= 0) | (phi >= 1)):
        raise ValueError("every size must lie in (0, 1)")
    h = np.ones(k) if gains is None else np.asarray(gains, dtype=float)
    w = h / (1.0 - phi)

    if k == 0:
        return AdmissionDecision(admitted=(), total_size=0.0, total_utility=0.0)
    low = min(k, 16)
    s_low, t_low = _subset_tables(phi[:low], w[:low])
    s_high, t_high = _subset_tables(phi[low:], w[low:])

    def block(hi_mask: int) -> np.ndarray:
        s = s_low + s_high[hi_mask]
        return np.where(
            s < 1.0 - FEASIBILITY_GUARD, (1.0 - s) * (t_low + t_high[hi_mask]), -np.inf
        )

    best = max(float(block(j).max()) for j in range(s_high.size))
    # tie-break key: indicator vector read as a binary number, candidate 0 most
    # significant, so the largest key prefers earlier candidates
    rev_low = _reversed_bits(low)
    rev_high = _reversed_bits(k - low)
    best_key = -1
    for j in range(s_high.size):
        idx = np.nonzero(block(j) >= best * (1 - _REL_TIE))[0]
        if idx.size:
            key = int(rev_low[idx].max()) << (k - low) | int(rev_high[j])
            best_key = max(best_key, key)
    chosen = tuple(i for i in range(k) if best_key >> (k - 1 - i) & 1)
    sel = list(chosen)
    return AdmissionDecision(
        admitted=chosen,
        total_size=float(phi[sel].sum()),
        total_utility=float((1.0 - phi[sel].sum()) * w[sel].sum()),
    )


def _better(val: float, best: float) -> bool:
    # strict improvement beyond rounding noise
    return val > best * (1 + _REL_TIE) if best > 0 else val > best


def symmetric_optimal_count(phi: float) -> int:
    """Best number of identical users of size ``phi`` to admit.

    The objective is proportional to L - L^2 phi, maximized near 1/(2 phi).
    Both integer neighbours are evaluated (after clamping to capacity); on an
    exact tie the larger count, i.e. round-half-up, is returned.
    """
    cap = network_capacity(phi)
    x = 1.0 / (2.0 * phi)
    cands = sorted({min(max(math.floor(x), 0), cap), min(max(math.ceil(x), 0), cap)})
    return max(reversed(cands), key=lambda n: n - n * n * phi)


def class_objective(counts: Sequence[int], classes: Sequence[ClassSpec]) -> float:
    """Equal-gain normalized total utility of an allocation (count per class)."""
    phi = np.array([c.size for c in classes])
    n = np.asarray(counts, dtype=float)
    total = float(n @ phi)
    if total >= 1.0 - FEASIBILITY_GUARD:
        raise InfeasibleError(f"allocation {tuple(counts)} has total size {total:.4f} >= 1")
    return (1.0 - total) * float(np.sum(n / (1.0 - phi)))


def allocation_feasible(counts: Sequence[int], classes: Sequence[ClassSpec]) -> bool:
    return float(np.dot(counts, [c.size for c in classes])) < 1.0 - FEASIBILITY_GUARD


def _class_cap(c: ClassSpec) -> int:
    cap = network_capacity(c.size)
    return cap if c.population is None else min(cap, c.population)


def exhaustive_allocation(classes: Sequence[ClassSpec]) -> AdmissionDecision:
    """Brute force over every allocation vector within per-class capacity.

    Ties go to the lexicographically smallest vector after the label order
    of ``classes``.
    """
    best: Optional[Tuple[int, ...]] = None
    best_val = -math.inf
    ranges = [range(_class_cap(c) + 1) for c in classes]
    for counts in itertools.product(*ranges):
        if not allocation_feasible(counts, classes):
            continue
        val = class_objective(counts, classes)
        if _better(val, best_val):
            best, best_val = counts, val
    assert best is not None
    return _decision(best, classes)


def _decision(counts: Sequence[int], classes: Sequence[ClassSpec]) -> AdmissionDecision:
    counts = tuple(int(n) for n in counts)
    return AdmissionDecision(
        admitted=counts,
        total_size=float(np.dot(counts, [c.size for c in classes])),
        total_utility=class_objective(counts, classes),
        labels=tuple(c.label for c in classes),
    )


def multiclass_optimal(
    classes: Sequence[ClassSpec], verify_limit: int = 200_000
) -> AdmissionDecision:
    """Admit only the smallest class, as many as the symmetric optimum allows.

    Ties in size go to the class whose label sorts first.  When the search space is at
    most ``verify_limit`` allocations the answer is checked against
    :func:`exhaustive_allocation`; if that ever finds a strictly better
    allocation (or a population limit binds) the exhaustive answer is used.
    """
    if not classes:
        raise ValueError("need at least one class")
    order = sorted(range(len(classes)), key=lambda i: (classes[i].size, classes[i].label, i))
    first = order[0]
    n = symmetric_optimal_count(classes[first].size)
    counts = [0] * len(classes)
    counts[first] = n
    pop = classes[first].population
    space = math.prod(_class_cap(c) + 1 for c in classes)
    if pop is not None and pop < n:
        return exhaustive_allocation(classes)
    closed = _decision(counts, classes)
    if space <= verify_limit:
        oracle = exhaustive_allocation(classes)
        if _better(oracle.total_utility, closed.total_utility):
            return oracle
    return closed


def utility_loss(
    allocation: Sequence[int],
    classes: Sequence[ClassSpec],
    baseline: Optional[Sequence[int]] = None,
) -> float:
    """Fractional drop in normalized total utility relative to ``baseline``.

    ``baseline`` defaults to :func:`multiclass_optimal`.
    """
    if not allocation_feasible(allocation, classes):
        raise InfeasibleError(
            f"allocation {tuple(allocation)} exceeds the size budget"
        )
    base = multiclass_optimal(classes).admitted if baseline is None else baseline
    return 1.0 - class_objective(allocation, classes) / class_objective(base, classes)
