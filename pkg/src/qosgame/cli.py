"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 infeasible user set,
4 Monte-Carlo validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import admission, game, report
from .efficiency import OptimalSir
from .scenario import ConfigError, Scenario, load

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_VALIDATION = 4


def db(x: float) -> float:
    return 10.0 * math.log10(x)


def _csv_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return f"{v:.6g}"
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return str(v)


def write_csv(out, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_value(v) for v in row])


def _json_default(v: Any):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def _clean(v: Any) -> Any:
    # json has no nan/inf
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(float(x)) if v.dtype.kind == "f" else _clean(x.item()) for x in v]
    return v


def write_json(out, obj: Any) -> None:
    json.dump(_clean(obj), out, sort_keys=True, indent=2, default=_json_default)
    out.write("\n")


def _optimum(scn: Scenario) -> OptimalSir:
    return scn.efficiency_function().optimal_sir()


# -- commands ----------------------------------------------------------------


def cmd_gamma_star(scn: Scenario, args, out) -> int:
    opt = _optimum(scn)
    if args.output == "json":
        write_json(out, {"family": scn.efficiency_family, "packet_size_bits": scn.efficiency_bits,
                         "gamma_star": opt.gamma_star, "f_star": opt.f_star})
    elif args.output == "csv":
        write_csv(out, ["family", "packet_size_bits", "gamma_star", "f_star"],
                  [[scn.efficiency_family, scn.efficiency_bits, opt.gamma_star, opt.f_star]])
    else:
        out.write(f"efficiency family: {scn.efficiency_family}, M = {scn.efficiency_bits} bits\n")
        out.write(f"gamma* = {opt.gamma_star:.6f} ({db(opt.gamma_star):.3f} dB)\n")
        out.write(f"f*     = {opt.f_star:.6f}\n")
    return EXIT_OK


def cmd_size(scn: Scenario, args, out) -> int:
    if not scn.classes and not scn.users:
        raise ConfigError("scenario defines neither users nor classes", "users")
    opt = _optimum(scn)
    rows = report.size_rows(scn, opt)
    keys = ["kind", "label", "source_rate", "max_delay", "omega_inf", "omega_star", "size", "capacity"]
    if args.output == "json":
        write_json(out, {"gamma_star": opt.gamma_star, "f_star": opt.f_star, "rows": rows})
    elif args.output == "csv":
        write_csv(out, keys, [[r[k] for k in keys] for r in rows])
    else:
        out.write(f"{'':6}{'label':>8} {'r [kbps]':>10} {'D [ms]':>10} {'Omega_inf [bps]':>16} "
                  f"{'Omega* [bps]':>14} {'size':>8} {'capacity':>9}\n")
        for r in rows:
            out.write(
                f"{r['kind']:6}{r['label']:>8} {r['source_rate'] / 1e3:>10.4g} {r['max_delay'] * 1e3:>10.4g} "
                f"{r['omega_inf']:>16.6g} {r['omega_star']:>14.6g} {r['size']:>8.4g} {r['capacity']:>9d}\n"
            )
    return EXIT_OK


def cmd_equilibrium(scn: Scenario, args, out) -> int:
    users = scn.profiles()
    if not users:
        raise ConfigError("equilibrium needs at least one user", "users")
    f = scn.efficiency_function()
    opt = f.optimal_sir()
    sol = game.equilibrium(users, scn.system, f, opt)
    result: Dict[str, Any] = {
        "feasible": sol.feasible,
        "total_size": sol.total_size,
        "gamma_star": opt.gamma_star,
    }
    if not sol.feasible:
        msg = f"infeasible: total size {sol.total_size:.4f} >= 1"
        if args.output == "json":
            result["message"] = msg
            write_json(out, result)
        elif args.output == "csv":
            write_csv(out, ["feasible", "total_size"], [[False, sol.total_size]])
        else:
            out.write(msg + "\n")
        return EXIT_INFEASIBLE

    deviation: Optional[float] = None
    if args.verify_brd:
        dyn = game.best_response_dynamics(users, scn.system, f, opt=opt)
        if dyn.converged:
            deviation = float(np.max(np.abs(dyn.powers / sol.powers - 1.0)))
        result["brd"] = {"converged": dyn.converged, "sweeps": dyn.sweeps, "max_rel_deviation": deviation}

    per_user = []
    for i, u in enumerate(users):
        per_user.append({
            "label": u.label,
            "gain": u.gain,
            "power": float(sol.powers[i]),
            "rate": float(sol.rates[i]),
            "sir": float(sol.sirs[i]),
            "size": float(sol.sizes[i]),
            "utility": float(sol.utilities[i]),
            "over_power_cap": bool(sol.over_power_cap[i]),
        })
    result["users"] = per_user
    keys = ["label", "gain", "power", "rate", "sir", "size", "utility", "over_power_cap"]
    if args.output == "json":
        write_json(out, result)
    elif args.output == "csv":
        write_csv(out, ["index"] + keys, [[i] + [r[k] for k in keys] for i, r in enumerate(per_user)])
    else:
        out.write(f"{sol.describe()}; gamma* = {opt.gamma_star:.6g} ({db(opt.gamma_star):.3f} dB)\n")
        out.write(f"{'#':>4} {'label':>8} {'gain':>8} {'power [W]':>12} {'rate [bps]':>12} "
                  f"{'SIR [dB]':>9} {'utility [bit/J]':>16}\n")
        for i, r in enumerate(per_user):
            flag = "  (over power cap)" if r["over_power_cap"] else ""
            out.write(f"{i:>4} {r['label']:>8} {r['gain']:>8.4g} {r['power']:>12.5g} {r['rate']:>12.6g} "
                      f"{db(r['sir']):>9.4f} {r['utility']:>16.6g}{flag}\n")
        if args.verify_brd:
            if deviation is None:
                out.write("best-response dynamics did not converge\n")
            else:
                out.write(f"best-response dynamics: max relative power deviation {deviation:.3e}\n")
    return EXIT_OK


def cmd_sweep(scn: Scenario, args, out) -> int:
    if scn.sweep is None:
        raise ConfigError("sweep command needs a 'sweep' section", "sweep")
    opt = _optimum(scn)
    if args.figure == 2:
        rows, cols = report.figure2_rows(scn.system, opt, scn.sweep), report.FIG2_COLUMNS
    else:
        rows, cols = report.figure3_rows(scn.system, opt, scn.sweep), report.FIG3_COLUMNS
    if args.output == "json":
        write_json(out, {"figure": args.figure, "rows": rows})
    else:
        write_csv(out, [f"{name} [{unit}]" for name, unit in cols], [[r[n] for n, _ in cols] for r in rows])
    return EXIT_OK


def _read_candidates(path: str, n_classes: int) -> List[tuple]:
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(str(exc), "--candidates") from None
    stripped = text.lstrip()
    rows: List[tuple] = []
    if stripped.startswith(("-", "[")):
        data = yaml.safe_load(text) or []
        raw_rows = data
    else:
        raw_rows = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p for p in line.replace(",", " ").split()]
            if not all(p.isdigit() for p in parts):
                continue  # header
            raw_rows.append([int(p) for p in parts])
    for i, r in enumerate(raw_rows):
        if not isinstance(r, list) or len(r) != n_classes or not all(isinstance(x, int) and x >= 0 for x in r):
            raise ConfigError(f"row {i}: expected {n_classes} non-negative integer counts", "--candidates")
        rows.append(tuple(r))
    return rows


def cmd_admit(scn: Scenario, args, out) -> int:
    opt = _optimum(scn)
    if not scn.classes:
        users = scn.profiles()
        if not users:
            raise ConfigError("admit needs classes or users", "classes")
        sizes = [game.size_of(u, scn.system, opt).phi_star for u in users]
        gains = [u.gain for u in users]
        try:
            dec = admission.optimal_subset_exhaustive(sizes, gains)
        except admission.TooManyCandidates as exc:
            raise ConfigError(str(exc), "users") from None
        res = {"admitted": list(dec.admitted), "total_size": dec.total_size,
               "normalized_objective": dec.total_utility}
        if args.output == "json":
            write_json(out, res)
        elif args.output == "csv":
            write_csv(out, ["index", "label", "size", "gain", "admitted"],
                      [[i, u.label, sizes[i], u.gain, i in dec.admitted] for i, u in enumerate(users)])
        else:
            out.write(f"admit users {list(dec.admitted)}; total size {dec.total_size:.4f}; "
                      f"normalized total utility {dec.total_utility:.6g}\n")
        return EXIT_OK

    classes = report.class_specs(scn, opt)
    best = admission.multiclass_optimal(classes)
    cands = list(scn.candidates)
    if args.candidates:
        cands = _read_candidates(args.candidates, len(classes))
    rows = report.candidate_rows(classes, cands, best.admitted)
    labels = [c.label for c in classes]
    if args.output == "json":
        write_json(out, {
            "classes": [{"label": c.label, "size": c.size} for c in classes],
            "optimal": {"allocation": list(best.admitted), "total_size": best.total_size,
                        "normalized_objective": best.total_utility},
            "candidates": [{"allocation": list(r.allocation), "feasible": r.feasible,
                            "total_size": r.total_size, "normalized_objective": r.objective,
                            "loss": r.loss} for r in rows],
        })
    elif args.output == "csv":
        write_csv(out, labels + ["feasible", "total_size", "normalized_objective", "loss_percent"],
                  [list(best.admitted) + [True, best.total_size, best.total_utility, 0.0]]
                  + [list(r.allocation) + [r.feasible, r.total_size, r.objective, 100.0 * r.loss]
                     for r in rows])
    else:
        out.write("class sizes: " + ", ".join(f"{c.label} = {c.size:.4f}" for c in classes) + "\n")
        out.write("optimal allocation: " + ", ".join(f"{l}={n}" for l, n in zip(labels, best.admitted))
                  + f"  (total size {best.total_size:.4f}, normalized utility {best.total_utility:.4f})\n")
        if rows:
            out.write("".join(f"{l:>6}" for l in labels) + f"{'total size':>12}  loss\n")
            for r in rows:
                cells = "".join(f"{n:>6}" for n in r.allocation) + f"{r.total_size:>12.4f}  "
                if r.feasible:
                    out.write(cells + f"{100 * r.loss:.0f}%\n")
                else:
                    out.write(cells + "infeasible (total size >= 1)\n")
    return EXIT_OK


def cmd_validate(scn: Scenario, args, out) -> int:
    if not scn.users:
        raise ConfigError("validate needs at least one user", "users")
    opt = _optimum(scn)
    packets = args.packets if args.packets is not None else scn.packets
    seed = args.seed if args.seed is not None else scn.seed
    rows = report.validation_rows(scn, opt, packets, seed)
    ok = all(r.passed for r in rows)
    if args.output == "json":
        write_json(out, {"packets": packets, "seed": seed, "passed": ok,
                         "rows": [vars(r) for r in rows]})
    elif args.output == "csv":
        write_csv(out, ["label", "packet_rate", "tau", "success_prob", "analytic_delay",
                        "empirical_delay", "std_error", "attempts", "passed"],
                  [[r.label, r.packet_rate, r.tau, r.success_prob, r.analytic, r.empirical,
                    r.std_error, r.attempts, r.passed] for r in rows])
    else:
        out.write(f"{packets} packets per user, seed {seed}\n")
        out.write(f"{'label':>8} {'analytic [s]':>14} {'empirical [s]':>14} {'std err [s]':>12} "
                  f"{'z':>7}  result\n")
        for r in rows:
            if r.note:
                out.write(f"{r.label:>8}  {r.note}\n")
                continue
            z = (r.empirical - r.analytic) / r.std_error if r.std_error > 0 else 0.0
            verdict = "pass" if r.passed else "FAIL"
            if r.attempts > 1:
                verdict += " (after retry)"
            out.write(f"{r.label:>8} {r.analytic:>14.6e} {r.empirical:>14.6e} {r.std_error:>12.3e} "
                      f"{z:>7.2f}  {verdict}\n")
    return EXIT_OK if ok else EXIT_VALIDATION


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default=argparse.SUPPRESS,
                        help="scenario file or name (searched in $QOSGAME_SCENARIO_DIR, then built-ins)")
    common.add_argument("--output", choices=["human", "csv", "json"], default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="qosgame", description=__doc__.splitlines()[0] if __doc__ else None,
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gamma-star", parents=[common], help="energy-optimal SIR target")
    sub.add_parser("size", parents=[common], help="target rates and sizes per class/user")
    eq = sub.add_parser("equilibrium", parents=[common], help="Nash equilibrium powers and utilities")
    eq.add_argument("--verify-brd", action="store_true", help="cross-check with best-response dynamics")
    sw = sub.add_parser("sweep", parents=[common], help="CSV sweep behind the delay trade-off figures")
    sw.add_argument("--figure", type=int, choices=[2, 3], required=True)
    ad = sub.add_parser("admit", parents=[common], help="optimal admission and loss of alternatives")
    ad.add_argument("--candidates", metavar="FILE", help="allocations to score (CSV rows or YAML list)")
    va = sub.add_parser("validate", parents=[common], help="Monte-Carlo check of the mean delay")
    va.add_argument("--packets", type=int)
    va.add_argument("--seed", type=int)
    return p


COMMANDS = {
    "gamma-star": cmd_gamma_star,
    "size": cmd_size,
    "equilibrium": cmd_equilibrium,
    "sweep": cmd_sweep,
    "admit": cmd_admit,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    args = build_parser().parse_args(argv)
    # fallbacks applied here: set_defaults would leak into the shared parent actions
    for name, value in (("scenario", None), ("output", "human")):
        if not hasattr(args, name):
            setattr(args, name, value)
    try:
        scn = load(args.scenario)
        if args.command == "validate" and args.packets is not None and args.packets < 1:
            raise ConfigError("must be >= 1", "--packets")
        buf = io.StringIO()
        code = COMMANDS[args.command](scn, args, buf)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.write(buf.getvalue())
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
