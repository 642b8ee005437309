"""Scenario files: YAML with explicit units, parsed into SI dataclasses.

A scenario names the radio system, the efficiency curve, and either
explicit users (for equilibrium/validation), traffic classes (for
admission), or both, plus optional sweep and validation settings.  See
``scenarios/three-class.yaml`` for a complete example.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from . import efficiency
from .game import SystemParams, UserProfile
from .units import UnitError, format_quantity, parse_quantity

SCENARIO_DIR_ENV = "QOSGAME_SCENARIO_DIR"
DEFAULT_SCENARIO = "three-class"


class ConfigError(ValueError):
    """Invalid scenario content; ``field`` is the dotted path, ``line`` 1-based."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        self.field = field
        self.line = line
        where = field or "scenario"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class UserSpec:
    label: str
    source_rate: float
    max_delay: float
    gain: float = 1.0
    count: int = 1
    # validation-only overrides of the equilibrium operating point
    rate: Optional[float] = None
    success_prob: Optional[float] = None

    def profiles(self) -> List[UserProfile]:
        return [
            UserProfile(self.source_rate, self.max_delay, self.gain, self.label)
            for _ in range(self.count)
        ]


@dataclass(frozen=True)
class ClassEntry:
    label: str
    source_rate: float
    max_delay: float
    population: Optional[int] = None


@dataclass(frozen=True)
class SweepSpec:
    delay_min: float
    delay_max: float
    points: int = 41
    scale: str = "log"
    source_rates: Tuple[float, ...] = (5e3, 5e4, 1.5e5)
    other_size: float = 0.2

    def delays(self) -> List[float]:
        if self.scale == "log":
            grid = np.geomspace(self.delay_min, self.delay_max, self.points)
        else:
            grid = np.linspace(self.delay_min, self.delay_max, self.points)
        return [float(d) for d in grid]


@dataclass(frozen=True)
class Scenario:
    system: SystemParams
    efficiency_family: str = efficiency.DEFAULT_FAMILY
    efficiency_bits: int = 100
    users: Tuple[UserSpec, ...] = ()
    classes: Tuple[ClassEntry, ...] = ()
    candidates: Tuple[Tuple[int, ...], ...] = ()
    sweep: Optional[SweepSpec] = None
    packets: int = 1_000_000
    seed: int = 0

    def efficiency_function(self) -> efficiency.EfficiencyFunction:
        return efficiency.make(self.efficiency_family, self.efficiency_bits)

    def profiles(self) -> List[UserProfile]:
        out: List[UserProfile] = []
        for u in self.users:
            out.extend(u.profiles())
        return out

    def to_dict(self) -> Dict[str, Any]:
        s = self.system
        d: Dict[str, Any] = {
            "seed": self.seed,
            "system": {
                "bandwidth": format_quantity(s.bandwidth, "frequency"),
                "noise_power": format_quantity(s.noise_power, "power"),
                "packet_size": format_quantity(s.packet_size_bits, "bits"),
                "max_power": format_quantity(s.max_power, "power"),
            },
            "efficiency": {
                "family": self.efficiency_family,
                "packet_size": format_quantity(self.efficiency_bits, "bits"),
            },
            "validate": {"packets": self.packets},
        }
        if self.users:
            rows = []
            for u in self.users:
                row: Dict[str, Any] = {
                    "label": u.label,
                    "source_rate": format_quantity(u.source_rate, "rate"),
                    "max_delay": format_quantity(u.max_delay, "time"),
                    "gain": u.gain,
                    "count": u.count,
                }
                if u.rate is not None:
                    row["rate"] = format_quantity(u.rate, "rate")
                if u.success_prob is not None:
                    row["success_prob"] = u.success_prob
                rows.append(row)
            d["users"] = rows
        if self.classes:
            rows = []
            for c in self.classes:
                row = {
                    "label": c.label,
                    "source_rate": format_quantity(c.source_rate, "rate"),
                    "max_delay": format_quantity(c.max_delay, "time"),
                }
                if c.population is not None:
                    row["population"] = c.population
                rows.append(row)
            d["classes"] = rows
        if self.candidates:
            d["candidates"] = [list(c) for c in self.candidates]
        if self.sweep is not None:
            w = self.sweep
            d["sweep"] = {
                "delay_min": format_quantity(w.delay_min, "time"),
                "delay_max": format_quantity(w.delay_max, "time"),
                "points": w.points,
                "scale": w.scale,
                "source_rates": [format_quantity(r, "rate") for r in w.source_rates],
                "other_size": w.other_size,
            }
        return d

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


# -- parsing ---------------------------------------------------------------


def _line_map(text: str) -> Dict[str, int]:
    """Dotted key path -> 1-based line, from the YAML node tree."""
    out: Dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path: str) -> None:
        if node is None:
            return
        out.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{path}.{k.value}" if path else str(k.value)
                out[key] = k.start_mark.line + 1
                walk(v, key)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}[{i}]")

    walk(root, "")
    return out


class _Reader:
    def __init__(self, lines: Dict[str, int]):
        self.lines = lines

    def error(self, path: str, msg: str) -> ConfigError:
        line = self.lines.get(path)
        if line is None:
            parent = path.rsplit(".", 1)[0] if "." in path else ""
            line = self.lines.get(parent)
        return ConfigError(msg, path, line)

    def mapping(self, obj, path: str) -> Dict[str, Any]:
        if obj is None:
            return {}
        if not isinstance(obj, dict):
            raise self.error(path, f"expected a mapping, got {type(obj).__name__}")
        return obj

    def quantity(self, obj: Dict[str, Any], key: str, path: str, kind: str, default=None):
        full = f"{path}.{key}" if path else key
        if key not in obj:
            if default is not None:
                return default
            raise self.error(full, "missing required field")
        try:
            return parse_quantity(obj[key], kind)
        except UnitError as exc:
            raise self.error(full, str(exc)) from None

    def integer(self, obj: Dict[str, Any], key: str, path: str, default=None, minimum=0):
        full = f"{path}.{key}" if path else key
        if key not in obj:
            if default is not None:
                return default
            raise self.error(full, "missing required field")
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.error(full, f"expected an integer, got {v!r}")
        if v < minimum:
            raise self.error(full, f"must be >= {minimum}, got {v}")
        return v

    def bits(self, obj, key, path, default=None) -> int:
        v = self.quantity(obj, key, path, "bits", default)
        if v != int(v) or v <= 0:
            raise self.error(f"{path}.{key}", f"packet size must be a positive whole number of bits, got {v!r}")
        return int(v)


_TOP_KEYS = {"seed", "system", "efficiency", "users", "classes", "candidates", "sweep", "validate"}


def parse_scenario(text: str) -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {exc}", "", mark.line + 1 if mark else None) from None
    rd = _Reader(_line_map(text))
    raw = rd.mapping(raw, "")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        raise rd.error(unknown[0], f"unknown section (expected one of {', '.join(sorted(_TOP_KEYS))})")

    sysd = rd.mapping(raw.get("system"), "system")
    bandwidth = rd.quantity(sysd, "bandwidth", "system", "frequency")
    noise = rd.quantity(sysd, "noise_power", "system", "power")
    packet = rd.bits(sysd, "packet_size", "system", 100)
    pmax = rd.quantity(sysd, "max_power", "system", "power", math.inf)
    try:
        system = SystemParams(bandwidth, noise, packet, pmax)
    except ValueError as exc:
        raise rd.error("system", str(exc)) from None

    effd = rd.mapping(raw.get("efficiency"), "efficiency")
    family = effd.get("family", efficiency.DEFAULT_FAMILY)
    if family not in efficiency.families():
        raise rd.error(
            "efficiency.family",
            f"unknown family {family!r} (known: {', '.join(efficiency.families())})",
        )
    ebits = rd.bits(effd, "packet_size", "efficiency", packet)
    try:
        efficiency.make(family, ebits)
    except efficiency.InvalidEfficiencyFunction as exc:
        raise rd.error("efficiency.packet_size", str(exc)) from None

    labels: set = set()
    users = []
    for i, u in enumerate(raw.get("users") or []):
        path = f"users[{i}]"
        u = rd.mapping(u, path)
        label = str(u.get("label", f"u{i}"))
        if label in labels:
            raise rd.error(f"{path}.label", f"duplicate label {label!r}")
        labels.add(label)
        r = rd.quantity(u, "source_rate", path, "rate")
        d = rd.quantity(u, "max_delay", path, "time")
        if r < 0:
            raise rd.error(f"{path}.source_rate", "source rate must be >= 0")
        if d <= 0:
            raise rd.error(f"{path}.max_delay", "delay bound must be > 0")
        gain = rd.quantity(u, "gain", path, "dimensionless", 1.0)
        if gain <= 0:
            raise rd.error(f"{path}.gain", "gain must be > 0")
        rate = rd.quantity(u, "rate", path, "rate") if "rate" in u else None
        sp = rd.quantity(u, "success_prob", path, "dimensionless") if "success_prob" in u else None
        if sp is not None and not 0 < sp <= 1:
            raise rd.error(f"{path}.success_prob", "must lie in (0, 1]")
        users.append(
            UserSpec(label, r, d, gain, rd.integer(u, "count", path, 1, minimum=1), rate, sp)
        )

    classes = []
    clabels: set = set()
    for i, c in enumerate(raw.get("classes") or []):
        path = f"classes[{i}]"
        c = rd.mapping(c, path)
        label = str(c.get("label", chr(ord("A") + i)))
        if label in clabels:
            raise rd.error(f"{path}.label", f"duplicate label {label!r}")
        clabels.add(label)
        r = rd.quantity(c, "source_rate", path, "rate")
        d = rd.quantity(c, "max_delay", path, "time")
        if r < 0:
            raise rd.error(f"{path}.source_rate", "source rate must be >= 0")
        if d <= 0:
            raise rd.error(f"{path}.max_delay", "delay bound must be > 0")
        pop = rd.integer(c, "population", path, minimum=0) if "population" in c else None
        classes.append(ClassEntry(label, r, d, pop))

    candidates = []
    for i, row in enumerate(raw.get("candidates") or []):
        path = f"candidates[{i}]"
        if not isinstance(row, list) or any(isinstance(n, bool) or not isinstance(n, int) or n < 0 for n in row):
            raise rd.error(path, "expected a list of non-negative integer counts")
        if len(row) != len(classes):
            raise rd.error(path, f"expected {len(classes)} counts (one per class), got {len(row)}")
        candidates.append(tuple(row))

    sweep = None
    if raw.get("sweep") is not None:
        sw = rd.mapping(raw["sweep"], "sweep")
        lo = rd.quantity(sw, "delay_min", "sweep", "time")
        hi = rd.quantity(sw, "delay_max", "sweep", "time")
        if not 0 < lo < hi:
            raise rd.error("sweep.delay_max", "need 0 < delay_min < delay_max")
        points = rd.integer(sw, "points", "sweep", 41, minimum=2)
        scale = sw.get("scale", "log")
        if scale not in ("log", "linear"):
            raise rd.error("sweep.scale", f"expected 'log' or 'linear', got {scale!r}")
        rates_raw = sw.get("source_rates", ["5 kbps", "50 kbps", "150 kbps"])
        if not isinstance(rates_raw, list) or not rates_raw:
            raise rd.error("sweep.source_rates", "expected a nonempty list of rates")
        rates = []
        for j, rr in enumerate(rates_raw):
            try:
                rates.append(parse_quantity(rr, "rate"))
            except UnitError as exc:
                raise rd.error(f"sweep.source_rates[{j}]", str(exc)) from None
        other = rd.quantity(sw, "other_size", "sweep", "dimensionless", 0.2)
        if not 0 <= other < 1:
            raise rd.error("sweep.other_size", "must lie in [0, 1)")
        sweep = SweepSpec(lo, hi, points, scale, tuple(rates), other)

    val = rd.mapping(raw.get("validate"), "validate")
    packets = rd.integer(val, "packets", "validate", 1_000_000, minimum=1)
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise rd.error("seed", f"expected a non-negative integer, got {seed!r}")

    return Scenario(
        system=system,
        efficiency_family=family,
        efficiency_bits=ebits,
        users=tuple(users),
        classes=tuple(classes),
        candidates=tuple(candidates),
        sweep=sweep,
        packets=packets,
        seed=seed,
    )


def builtin_dir() -> Path:
    return Path(str(resources.files("qosgame") / "scenarios"))


def resolve(name: Optional[str]) -> Path:
    """Locate a scenario by path, then in $QOSGAME_SCENARIO_DIR, then built-ins."""
    env_dir = os.environ.get(SCENARIO_DIR_ENV)
    if name is None:
        if env_dir and (Path(env_dir) / "default.yaml").is_file():
            return Path(env_dir) / "default.yaml"
        name = DEFAULT_SCENARIO
    p = Path(name)
    if p.is_file():
        return p
    dirs = ([Path(env_dir)] if env_dir else []) + [builtin_dir()]
    for d in dirs:
        for cand in (d / name, d / f"{name}.yaml"):
            if cand.is_file():
                return cand
    raise ConfigError(f"scenario {name!r} not found", "--scenario")


def load(name: Optional[str]) -> Scenario:
    path = resolve(name)
    return parse_scenario(path.read_text(encoding="utf-8"))
