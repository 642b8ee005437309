"""Tables behind the CLI commands, as plain lists of rows.

Normalizations: utility by B h / noise, delay by 1/B (i.e. D * B), rates
and goodput by B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import admission, game, queueing
from .efficiency import OptimalSir
from .scenario import ClassEntry, Scenario, SweepSpec


def class_specs(scn: Scenario, opt: OptimalSir) -> List[admission.ClassSpec]:
    out = []
    for c in scn.classes:
        sz = game.size_of(game.UserProfile(c.source_rate, c.max_delay), scn.system, opt)
        out.append(
            admission.ClassSpec(c.label, sz.phi_star, c.source_rate, c.max_delay, c.population)
        )
    return out


def size_rows(scn: Scenario, opt: OptimalSir) -> List[Dict[str, object]]:
    rows = []
    entries: List[object] = list(scn.classes) + list(scn.users)
    for e in entries:
        kind = "class" if isinstance(e, ClassEntry) else "user"
        sz = game.size_of(game.UserProfile(e.source_rate, e.max_delay), scn.system, opt)
        rows.append(
            {
                "kind": kind,
                "label": e.label,
                "source_rate": e.source_rate,
                "max_delay": e.max_delay,
                "omega_inf": sz.omega_inf,
                "omega_star": sz.omega_star,
                "size": sz.phi_star,
                "capacity": admission.network_capacity(sz.phi_star),
            }
        )
    return rows


# -- sweeps ------------------------------------------------------------------

FIG2_COLUMNS = [
    ("source_rate", "bit/s"),
    ("delay", "s"),
    ("normalized_delay", "D*B"),
    ("feasible", "bool"),
    ("size", "1"),
    ("normalized_utility", "u*noise/(B*h)"),
]
FIG3_COLUMNS = [
    ("source_rate", "bit/s"),
    ("delay", "s"),
    ("normalized_delay", "D*B"),
    ("feasible", "bool"),
    ("size", "1"),
    ("capacity", "users"),
    ("normalized_rate", "omega*/B"),
    ("normalized_total_goodput", "r*capacity/B"),
]


def figure2_rows(system: game.SystemParams, opt: OptimalSir, sweep: SweepSpec) -> List[Dict[str, object]]:
    """Own utility vs delay bound with the rest of the cell fixed at ``other_size``."""
    rows = []
    for r in sweep.source_rates:
        for d in sweep.delays():
            phi = game.size_of(game.UserProfile(r, d), system, opt).phi_star
            ok = phi + sweep.other_size < 1.0 - game.FEASIBILITY_GUARD
            util = (opt.f_star / opt.gamma_star) * (1.0 - sweep.other_size / (1.0 - phi)) if ok else math.nan
            rows.append(
                {
                    "source_rate": r,
                    "delay": d,
                    "normalized_delay": d * system.bandwidth,
                    "feasible": ok,
                    "size": phi,
                    "normalized_utility": util,
                }
            )
    return rows


def figure3_rows(system: game.SystemParams, opt: OptimalSir, sweep: SweepSpec) -> List[Dict[str, object]]:
    """Size, capacity, rate and total goodput of a homogeneous cell vs delay bound."""
    rows = []
    for r in sweep.source_rates:
        for d in sweep.delays():
            sz = game.size_of(game.UserProfile(r, d), system, opt)
            cap = admission.network_capacity(sz.phi_star)
            rows.append(
                {
                    "source_rate": r,
                    "delay": d,
                    "normalized_delay": d * system.bandwidth,
                    "feasible": cap >= 1,
                    "size": sz.phi_star,
                    "capacity": cap,
                    "normalized_rate": sz.omega_star / system.bandwidth,
                    "normalized_total_goodput": r * cap / system.bandwidth,
                }
            )
    return rows


# -- Monte-Carlo validation -------------------------------------------------


@dataclass
class ValidationRow:
    label: str
    packet_rate: float
    tau: float
    success_prob: float
    analytic: float
    empirical: float
    std_error: float
    attempts: int
    passed: bool
    note: str = ""


def derived_seed(seed: int, index: int, attempt: int) -> int:
    ss = np.random.SeedSequence([seed, index, attempt])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def validation_rows(
    scn: Scenario, opt: OptimalSir, packets: int, seed: int, sigmas: float = 3.0
) -> List[ValidationRow]:
    """Simulated vs closed-form mean delay per user spec, one retry on a miss."""
    m = scn.system.packet_size_bits
    rows = []
    for i, u in enumerate(scn.users):
        traffic = queueing.TrafficSpec.from_source_rate(u.source_rate, m)
        rate = u.rate if u.rate is not None else game.size_of(
            game.UserProfile(u.source_rate, u.max_delay), scn.system, opt
        ).omega_star
        f = u.success_prob if u.success_prob is not None else opt.f_star
        tau = queueing.transmission_time(m, rate)
        try:
            analytic = queueing.mean_delay(traffic, tau, f)
        except queueing.UnstableQueueError as exc:
            rows.append(
                ValidationRow(u.label, traffic.packet_rate, tau, f, math.nan, math.nan,
                              math.nan, 0, False, f"not simulated: {exc}")
            )
            continue
        passed = False
        stats = None
        attempt = 0
        for attempt in (1, 2):
            stats = queueing.simulate_mg1_arq(traffic, tau, f, packets, derived_seed(seed, i, attempt))
            if abs(stats.mean - analytic) <= sigmas * stats.std_error:
                passed = True
                break
        assert stats is not None
        rows.append(
            ValidationRow(u.label, traffic.packet_rate, tau, f, analytic, stats.mean,
                          stats.std_error, attempt, passed)
        )
    return rows


# -- admission ---------------------------------------------------------------


@dataclass
class CandidateRow:
    allocation: Sequence[int]
    feasible: bool
    total_size: float
    objective: float
    loss: float


def candidate_rows(
    classes: Sequence[admission.ClassSpec],
    candidates: Sequence[Sequence[int]],
    baseline: Optional[Sequence[int]] = None,
) -> List[CandidateRow]:
    if baseline is None:
        baseline = admission.multiclass_optimal(classes).admitted
    rows = []
    for alloc in candidates:
        total = float(np.dot(alloc, [c.size for c in classes]))
        if admission.allocation_feasible(alloc, classes):
            obj = admission.class_objective(alloc, classes)
            loss = admission.utility_loss(alloc, classes, baseline)
            rows.append(CandidateRow(tuple(alloc), True, total, obj, loss))
        else:
            rows.append(CandidateRow(tuple(alloc), False, total, math.nan, math.nan))
    return rows
