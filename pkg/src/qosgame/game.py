"""Joint power and rate control game on a shared-spectrum uplink.

Each user picks a transmit power and rate to maximize delivered bits per
joule, subject to its own mean-delay constraint.  With a matched-filter
receiver the best reply always hits the same target SIR ``gamma*``; the
cheapest rate that still meets the delay bound at that SIR is ``omega*``.
Users playing ``(p*, omega*)`` form the Pareto-dominant Nash equilibrium,
which exists iff the users' sizes sum to less than one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .efficiency import DEFAULT, DomainError, EfficiencyFunction, OptimalSir
from .queueing import TrafficSpec, required_success_prob

log = logging.getLogger(__name__)

#: sizes summing to at least 1 - FEASIBILITY_GUARD are treated as infeasible
FEASIBILITY_GUARD = 1e-12


class InfeasibleError(ValueError):
    """The users' total size is not below one."""


@dataclass(frozen=True)
class SystemParams:
    bandwidth: float = 5e6
    noise_power: float = 1e-13
    packet_size_bits: int = 100
    max_power: float = math.inf

    def __post_init__(self) -> None:
        if not self.bandwidth > 0:
            raise DomainError(f"bandwidth must be > 0, got {self.bandwidth!r}")
        if not self.noise_power > 0:
            raise DomainError(f"noise power must be > 0, got {self.noise_power!r}")
        if not self.packet_size_bits > 0:
            raise DomainError(f"packet size must be > 0, got {self.packet_size_bits!r}")
        if not self.max_power > 0:
            raise DomainError(f"max power must be > 0, got {self.max_power!r}")


@dataclass(frozen=True)
class UserProfile:
    """QoS demand ``(source_rate, max_delay)`` plus the channel power gain."""

    source_rate: float
    max_delay: float
    gain: float = 1.0
    label: str = ""

    def __post_init__(self) -> None:
        if not self.source_rate >= 0:
            raise DomainError(f"source rate must be >= 0, got {self.source_rate!r}")
        if not self.max_delay > 0:
            raise DomainError(f"delay bound must be > 0, got {self.max_delay!r}")
        if not self.gain > 0:
            raise DomainError(f"channel gain must be > 0, got {self.gain!r}")

    def packet_rate(self, packet_size_bits: int) -> float:
        return self.source_rate / packet_size_bits

    def traffic(self, packet_size_bits: int) -> TrafficSpec:
        return TrafficSpec.from_source_rate(self.source_rate, packet_size_bits)


@dataclass(frozen=True)
class UserSize:
    omega_inf: float
    omega_star: float
    phi_star: float


@dataclass
class EquilibriumSolution:
    powers: np.ndarray
    rates: np.ndarray
    sirs: np.ndarray
    utilities: np.ndarray
    sizes: np.ndarray
    feasible: bool
    total_size: float
    over_power_cap: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def describe(self) -> str:
        if self.feasible:
            return f"feasible, total size {self.total_size:.4f} < 1"
        return f"infeasible: total size {self.total_size:.4f} >= 1"


def sir(
    k: int,
    powers: Sequence[float],
    rates: Sequence[float],
    gains: Sequence[float],
    params: SystemParams,
) -> float:
    """Matched-filter output SIR of user ``k``: (B/R_k) p_k h_k / (noise + others)."""
    p = np.asarray(powers, dtype=float)
    h = np.asarray(gains, dtype=float)
    if not 0 <= k < p.size:
        raise IndexError(f"user index {k} out of range for {p.size} users")
    if np.any(p < 0):
        raise DomainError("powers must be non-negative")
    if np.any(h <= 0):
        raise DomainError("gains must be positive")
    r = float(rates[k])
    if not r > 0:
        raise DomainError(f"rate must be positive, got {r!r}")
    received = p * h
    # sum the others directly; total minus own loses digits when p_k dominates
    interference = params.noise_power + np.delete(received, k).sum()
    return (params.bandwidth / r) * received[k] / interference


def sirs(powers, rates, gains, params: SystemParams) -> np.ndarray:
    """All users' SIRs at once."""
    p = np.asarray(powers, dtype=float)
    r = np.asarray(rates, dtype=float)
    received = p * np.asarray(gains, dtype=float)
    interference = params.noise_power + received.sum() - received
    return (params.bandwidth / r) * received / interference


def utility(rate: float, gamma: float, power: float, f: EfficiencyFunction = DEFAULT) -> float:
    """Bits delivered per joule: R f(gamma) / p."""
    if not power > 0:
        raise DomainError(f"utility undefined at power {power!r}")
    if not rate > 0:
        raise DomainError(f"rate must be positive, got {rate!r}")
    return rate * f.eval(gamma) / power


def min_rate_omega_inf(packet_size_bits: float, max_delay: float, packet_rate: float) -> float:
    """Rate at which meeting the delay bound would need f = 1; feasible rates exceed it."""
    if not max_delay > 0:
        raise DomainError(f"delay bound must be > 0, got {max_delay!r}")
    dl = max_delay * packet_rate
    return (packet_size_bits / max_delay) * (1.0 + dl + math.sqrt(1.0 + dl * dl)) / 2.0


def target_rate_omega_star(
    packet_size_bits: float, max_delay: float, packet_rate: float, f_star: float
) -> float:
    """Lowest rate that meets the delay bound when transmitting at SIR gamma*."""
    if not 0 < f_star < 1:
        raise DomainError(f"f* must lie in (0, 1), got {f_star!r}")
    if not max_delay > 0:
        raise DomainError(f"delay bound must be > 0, got {max_delay!r}")
    dl = max_delay * packet_rate
    root = math.sqrt(1.0 + dl * dl + 2.0 * (1.0 - f_star) * dl)
    return (packet_size_bits / max_delay) * (1.0 + dl + root) / (2.0 * f_star)


def user_size(omega_star: float, gamma_star: float, bandwidth: float) -> float:
    """Fraction of the shared resource a user at rate omega* and SIR gamma* consumes."""
    if not (omega_star > 0 and gamma_star > 0 and bandwidth > 0):
        raise DomainError("omega*, gamma* and bandwidth must be positive")
    return 1.0 / (1.0 + bandwidth / (omega_star * gamma_star))


def size_of(user: UserProfile, params: SystemParams, opt: OptimalSir) -> UserSize:
    m = params.packet_size_bits
    lam = user.packet_rate(m)
    omega_inf = min_rate_omega_inf(m, user.max_delay, lam)
    omega_star = target_rate_omega_star(m, user.max_delay, lam, opt.f_star)
    return UserSize(
        omega_inf=omega_inf,
        omega_star=omega_star,
        phi_star=user_size(omega_star, opt.gamma_star, params.bandwidth),
    )


def delay_demand(user: UserProfile, rate: float, params: SystemParams) -> float:
    """Success probability needed to meet the user's delay bound at ``rate``."""
    m = params.packet_size_bits
    return required_success_prob(user.traffic(m), m / rate, user.max_delay)


def _optimum(f: EfficiencyFunction, opt: Optional[OptimalSir]) -> OptimalSir:
    return opt if opt is not None else f.optimal_sir()


def powers_for_rates(
    rates: Sequence[float],
    gains: Sequence[float],
    params: SystemParams,
    gamma_star: float,
) -> np.ndarray:
    """Powers giving every user SIR gamma* at the given rates.

    Returns an array of ``inf`` when the per-rate sizes do not sum below one.
    """
    r = np.asarray(rates, dtype=float)
    h = np.asarray(gains, dtype=float)
    phi = 1.0 / (1.0 + params.bandwidth / (r * gamma_star))
    slack = 1.0 - phi.sum()
    if slack <= FEASIBILITY_GUARD:
        return np.full(r.size, np.inf)
    return (params.noise_power / h) * phi / slack


def equilibrium(
    users: Sequence[UserProfile],
    params: SystemParams,
    f: EfficiencyFunction = DEFAULT,
    opt: Optional[OptimalSir] = None,
) -> EquilibriumSolution:
    """Pareto-dominant Nash equilibrium, or an infeasibility verdict.

    An infeasible user set is reported through ``feasible=False`` rather
    than raised.  A finite ``max_power`` is checked, not enforced.
    """
    if len(users) == 0:
        raise DomainError("need at least one user")
    opt = _optimum(f, opt)
    sizes_ = [size_of(u, params, opt) for u in users]
    rates = np.array([s.omega_star for s in sizes_])
    phi = np.array([s.phi_star for s in sizes_])
    gains = np.array([u.gain for u in users], dtype=float)
    total = float(phi.sum())
    k = len(users)
    if total >= 1.0 - FEASIBILITY_GUARD:
        nan = np.full(k, np.nan)
        return EquilibriumSolution(
            powers=np.full(k, np.inf),
            rates=rates,
            sirs=nan,
            utilities=nan.copy(),
            sizes=phi,
            feasible=False,
            total_size=total,
            over_power_cap=np.ones(k, dtype=bool),
        )
    powers = powers_for_rates(rates, gains, params, opt.gamma_star)
    gam = sirs(powers, rates, gains, params)
    utils = np.array(
        [equilibrium_utility(i, phi, gains, params, opt.f_star, opt.gamma_star) for i in range(k)]
    )
    over = powers > params.max_power
    if over.any():
        log.warning("%d user(s) exceed the power cap at equilibrium", int(over.sum()))
    return EquilibriumSolution(
        powers=powers,
        rates=rates,
        sirs=gam,
        utilities=utils,
        sizes=phi,
        feasible=True,
        total_size=total,
        over_power_cap=over,
    )


def equilibrium_utility(
    k: int,
    sizes: Sequence[float],
    gains: Sequence[float],
    params: SystemParams,
    f_star: float,
    gamma_star: float,
) -> float:
    """Closed-form utility of user ``k`` when the admitted set has these sizes."""
    phi = np.asarray(sizes, dtype=float)
    total = float(phi.sum())
    if total >= 1.0 - FEASIBILITY_GUARD:
        raise InfeasibleError(f"total size {total:.6g} >= 1")
    scale = params.bandwidth * float(gains[k]) * f_star / (params.noise_power * gamma_star)
    return scale * (1.0 - total) / (1.0 - phi[k])


def utilities_at_rates(
    rates: Sequence[float],
    gains: Sequence[float],
    params: SystemParams,
    f_star: float,
    gamma_star: float,
) -> np.ndarray:
    """Utilities at the equilibrium where users run at ``rates`` (each >= omega*).

    Every user still sits at gamma*, so the utility is the interference-free
    ceiling scaled by 1 - (sum of other sizes) / (1 - own size).
    """
    r = np.asarray(rates, dtype=float)
    phi = 1.0 / (1.0 + params.bandwidth / (r * gamma_star))
    total = phi.sum()
    if total >= 1.0 - FEASIBILITY_GUARD:
        raise InfeasibleError(f"total size {total:.6g} >= 1")
    ceiling = params.bandwidth * np.asarray(gains, dtype=float) * f_star / (
        params.noise_power * gamma_star
    )
    return ceiling * (1.0 - (total - phi) / (1.0 - phi))


@dataclass(frozen=True)
class BestResponse:
    power: float
    rate: float
    capped: bool = False


def best_response(
    k: int,
    powers: Sequence[float],
    gains: Sequence[float],
    user: UserProfile,
    params: SystemParams,
    f: EfficiencyFunction = DEFAULT,
    opt: Optional[OptimalSir] = None,
) -> BestResponse:
    """Utility-maximizing (power, rate) of user ``k`` against fixed others.

    The rate is omega*; the power is the one that lands exactly on gamma*.
    Entry ``k`` of ``powers`` is ignored.
    """
    opt = _optimum(f, opt)
    rate = size_of(user, params, opt).omega_star
    p = np.asarray(powers, dtype=float)
    h = np.asarray(gains, dtype=float)
    received = p * h
    interference = params.noise_power + received.sum() - received[k]
    power = opt.gamma_star * rate * interference / (params.bandwidth * user.gain)
    if power > params.max_power:
        return BestResponse(params.max_power, rate, capped=True)
    return BestResponse(power, rate)


@dataclass
class DynamicsResult:
    converged: bool
    diverged: bool
    sweeps: int
    trajectory: List[np.ndarray]
    solution: Optional[EquilibriumSolution]
    max_rel_change: float

    @property
    def powers(self) -> np.ndarray:
        return self.trajectory[-1]


def best_response_dynamics(
    users: Sequence[UserProfile],
    params: SystemParams,
    f: EfficiencyFunction = DEFAULT,
    init_powers: Optional[Sequence[float]] = None,
    tol: float = 1e-10,
    max_iters: int = 100_000,
    opt: Optional[OptimalSir] = None,
    divergence_window: int = 100,
    divergence_factor: float = 10.0,
    keep_trajectory: bool = False,
) -> DynamicsResult:
    """Round-robin best replies until powers stop moving.

    One sweep updates users 0..K-1 in order, each seeing the others' most
    recent powers.  Stops when the largest relative power change within a
    sweep is at most ``tol`` and the geometric tail estimated from the last
    two sweeps is too.  Divergence is declared when total power
    grew more than ``divergence_factor`` times over the last
    ``divergence_window`` sweeps, with every one of those sweeps increasing it.
    """
    if len(users) == 0:
        raise DomainError("need at least one user")
    opt = _optimum(f, opt)
    k = len(users)
    gains = np.array([u.gain for u in users], dtype=float)
    rates = np.array([size_of(u, params, opt).omega_star for u in users])
    # per-user power multiplier: p_k = coef_k * (noise + interference_k)
    coef = opt.gamma_star * rates / (params.bandwidth * gains)
    p = (
        np.full(k, 1e-6)
        if init_powers is None
        else np.array(init_powers, dtype=float).copy()
    )
    received = p * gains
    total_rx = received.sum()
    trajectory = [p.copy()]
    totals = [float(p.sum())]
    rising = 0
    change = math.inf
    prev_change = math.inf
    sweep = 0
    for sweep in range(1, max_iters + 1):
        change = 0.0
        for i in range(k):
            interference = params.noise_power + total_rx - received[i]
            new = min(coef[i] * interference, params.max_power)
            old = p[i]
            rel = abs(new - old) / max(abs(new), abs(old), 1e-300)
            change = max(change, rel)
            p[i] = new
            rx = new * gains[i]
            total_rx += rx - received[i]
            received[i] = rx
        # drift control on the running sum
        total_rx = received.sum()
        if keep_trajectory:
            trajectory.append(p.copy())
        totals.append(float(p.sum()))
        rising = rising + 1 if totals[-1] > totals[-2] else 0
        # geometric tail: remaining error ~ change * q / (1 - q)
        q = min(change / prev_change, 0.999999) if prev_change > 0 else 0.0
        prev_change = change
        if change <= tol and (change * q / (1.0 - q) <= tol or change <= 1e-15):
            if not keep_trajectory:
                trajectory.append(p.copy())
            return DynamicsResult(
                converged=True,
                diverged=False,
                sweeps=sweep,
                trajectory=trajectory,
                solution=equilibrium(users, params, f, opt),
                max_rel_change=change,
            )
        if not np.all(np.isfinite(p)) or (
            rising >= divergence_window
            and totals[-1] > divergence_factor * totals[-1 - divergence_window]
        ):
            if not keep_trajectory:
                trajectory.append(p.copy())
            return DynamicsResult(
                converged=False,
                diverged=True,
                sweeps=sweep,
                trajectory=trajectory,
                solution=None,
                max_rel_change=change,
            )
    if not keep_trajectory:
        trajectory.append(p.copy())
    log.warning("best-response dynamics did not converge in %d sweeps", max_iters)
    return DynamicsResult(
        converged=False,
        diverged=False,
        sweeps=sweep,
        trajectory=trajectory,
        solution=None,
        max_rel_change=change,
    )
