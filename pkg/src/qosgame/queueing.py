"""Mean delay of a user's FIFO queue served over an ARQ link.

Packets arrive as a Poisson stream of ``lam`` packets/s and each takes
``tau`` seconds per transmission attempt.  An attempt succeeds with
probability ``f`` independently of earlier attempts, so the service time is
``m * tau`` with ``m`` geometric on {1, 2, ...}.  The result is an M/G/1
queue whose mean sojourn time has a closed form.

All quantities are SI: seconds, bits/s, packets/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .efficiency import DomainError

#: margin on the stability condition f > lam * tau
STABILITY_MARGIN = 1e-12


class UnstableQueueError(ValueError):
    """The offered load is at or above the service capacity."""


@dataclass(frozen=True)
class TrafficSpec:
    """Poisson packet source.  ``source_rate`` is derived, never stored."""

    packet_rate: float
    packet_size_bits: int = 100

    def __post_init__(self) -> None:
        if not self.packet_rate >= 0:
            raise DomainError(f"packet rate must be >= 0, got {self.packet_rate!r}")
        if not self.packet_size_bits > 0:
            raise DomainError(f"packet size must be > 0, got {self.packet_size_bits!r}")

    @classmethod
    def from_source_rate(cls, source_rate: float, packet_size_bits: int = 100) -> "TrafficSpec":
        return cls(source_rate / packet_size_bits, packet_size_bits)

    @property
    def source_rate(self) -> float:
        return self.packet_size_bits * self.packet_rate


@dataclass(frozen=True)
class DelayConstraint:
    max_avg_delay: float

    def __post_init__(self) -> None:
        if not self.max_avg_delay > 0:
            raise DomainError(f"delay bound must be > 0, got {self.max_avg_delay!r}")


@dataclass(frozen=True)
class QueueOperatingPoint:
    tau: float
    success_prob: float
    rho: float
    mean_delay: float


def transmission_time(packet_size_bits: float, rate: float) -> float:
    """Seconds to send one packet; ACK turnaround is ignored."""
    if not packet_size_bits > 0 or not rate > 0:
        raise DomainError(
            f"packet size and rate must be positive, got {packet_size_bits!r}, {rate!r}"
        )
    return packet_size_bits / rate


def _check_stable(lam: float, tau: float, f: float) -> None:
    if not tau > 0:
        raise DomainError(f"transmission time must be > 0, got {tau!r}")
    if not 0 < f <= 1:
        raise DomainError(f"success probability must lie in (0, 1], got {f!r}")
    if not f > lam * tau + STABILITY_MARGIN:
        raise UnstableQueueError(
            f"unstable queue: success probability {f!r} <= load lam*tau = {lam * tau!r}"
        )


def mean_delay(traffic: TrafficSpec, tau: float, success_prob: float) -> float:
    """Average queueing plus service time, tau (1 - lam tau / 2) / (f - lam tau)."""
    x = traffic.packet_rate * tau
    _check_stable(traffic.packet_rate, tau, success_prob)
    return tau * (1.0 - 0.5 * x) / (success_prob - x)


def pk_mean_delay(traffic: TrafficSpec, tau: float, success_prob: float) -> float:
    """Same mean delay, built from the Pollaczek-Khinchine mean queue length.

    Uses E[S] = tau/f and Var[S] = tau^2 (1 - f)/f^2 of the geometric
    retransmission count, then Little's law.  Kept independent of
    :func:`mean_delay` so the two can check each other.
    """
    lam = traffic.packet_rate
    f = success_prob
    _check_stable(lam, tau, f)
    mean_s = tau / f
    if lam == 0:
        return mean_s
    var_s = tau * tau * (1.0 - f) / (f * f)
    rho = lam * mean_s
    n_bar = rho + (rho * rho + lam * lam * var_s) / (2.0 * (1.0 - rho))
    return n_bar / lam


def operating_point(traffic: TrafficSpec, tau: float, success_prob: float) -> QueueOperatingPoint:
    return QueueOperatingPoint(
        tau=tau,
        success_prob=success_prob,
        rho=traffic.packet_rate * tau / success_prob,
        mean_delay=mean_delay(traffic, tau, success_prob),
    )


def required_success_prob(traffic: TrafficSpec, tau: float, max_delay: float) -> float:
    """Smallest per-attempt success probability meeting the mean delay bound.

    A value >= 1 means the bound cannot be met at this transmission time.
    """
    if not tau > 0 or not max_delay > 0:
        raise DomainError(f"tau and D must be positive, got {tau!r}, {max_delay!r}")
    lam = traffic.packet_rate
    return lam * tau + tau / max_delay - lam * tau * tau / (2.0 * max_delay)


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    eta: float
    reason: str = ""

    def __bool__(self) -> bool:
        return self.feasible


def feasible(traffic: TrafficSpec, tau: float, max_delay: float) -> Feasibility:
    """Whether some finite SIR meets the delay bound (0 <= eta < 1)."""
    eta = required_success_prob(traffic, tau, max_delay)
    if max_delay < tau:
        return Feasibility(False, eta, "delay bound below transmission time")
    if eta < 0:
        return Feasibility(False, eta, "negative success demand")
    if eta >= 1:
        return Feasibility(False, eta, "delay bound needs success probability >= 1")
    return Feasibility(True, eta)


@dataclass(frozen=True)
class SimulationStats:
    mean: float
    variance: float
    std_error: float
    count: int


class ArqQueueSimulator:
    """Monte-Carlo FIFO queue with Poisson arrivals and geometric ARQ service.

    Random numbers come from a Philox counter-based generator keyed by the
    seed, so a given seed reproduces the same sample path on any platform.
    One instance per thread.

    The reported standard error uses non-overlapping batch means, since
    consecutive sojourn times are positively correlated and the naive
    i.i.d. formula underestimates the spread of the sample mean.
    """

    def __init__(self, seed: int, batches: int = 50):
        self.seed = int(seed)
        self.batches = batches
        self._rng = np.random.Generator(np.random.Philox(self.seed))

    #: packets generated per block; bounds peak memory on long runs
    CHUNK = 1 << 20

    def sojourn_times(
        self, traffic: TrafficSpec, tau: float, success_prob: float, num_packets: int
    ) -> np.ndarray:
        _check_stable(traffic.packet_rate, tau, success_prob)
        if num_packets < 1:
            raise DomainError(f"need at least one packet, got {num_packets!r}")
        out = np.empty(num_packets)
        carry = 0.0  # wait + service of the previous packet
        for start in range(0, num_packets, self.CHUNK):
            stop = min(start + self.CHUNK, num_packets)
            out[start:stop] = self._block(traffic.packet_rate, tau, success_prob, stop - start, carry, start == 0)
            carry = out[stop - 1]
        return out

    def _block(self, lam, tau, f, n, carry, first):
        rng = self._rng
        gaps = rng.exponential(1.0 / lam, n) if lam > 0 else None
        u = rng.random(n)
        if f >= 1.0:
            attempts = np.ones(n)
        else:
            # inverse CDF of the geometric law on {1, 2, ...}
            attempts = np.maximum(1.0, np.ceil(np.log1p(-u) / math.log1p(-f)))
        service = attempts * tau
        if gaps is None:
            # no arrivals to queue behind: sojourn is the service time
            return service
        # Lindley: wait_n = max(0, wait_{n-1} + service_{n-1} - gap_n), unrolled as
        # wait_n = U_n - min(0, min_{j<=n} U_j) with U the running sum of the
        # increments.  Working with waits rather than absolute epochs keeps
        # light-load runs exact (the current U is its own minimum).
        steps = np.empty(n)
        steps[0] = 0.0 if first else carry - gaps[0]
        steps[1:] = service[:-1] - gaps[1:]
        run = np.cumsum(steps)
        wait = run - np.minimum(np.minimum.accumulate(run), 0.0)
        return wait + service

    def run(
        self, traffic: TrafficSpec, tau: float, success_prob: float, num_packets: int
    ) -> SimulationStats:
        w = self.sojourn_times(traffic, tau, success_prob, num_packets)
        n = w.size
        mean = float(w.mean())
        var = float(w.var(ddof=1)) if n > 1 else 0.0
        nb = min(self.batches, n)
        if nb >= 2:
            size = n // nb
            means = w[: size * nb].reshape(nb, size).mean(axis=1)
            se = float(means.std(ddof=1) / math.sqrt(nb))
        else:
            se = 0.0
        return SimulationStats(mean=mean, variance=var, std_error=se, count=n)


def simulate_mg1_arq(
    traffic: TrafficSpec,
    tau: float,
    success_prob: float,
    num_packets: int,
    seed: int,
) -> SimulationStats:
    return ArqQueueSimulator(seed).run(traffic, tau, success_prob, num_packets)
