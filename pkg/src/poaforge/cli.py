"""Command-line entry point.

Exit codes: 0 success, 1 validation or domain error, 2 internal invariant
error. Numbers are written with 15 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import equilibrium_lab as lab
from . import fixtures
from . import worst_case_analysis as wca
from .errors import DomainError, InvariantError, OracleFailure
from .instance_model import (InstanceClass, PiecewiseInstance, classify, jump_entry,
                             load_instance, potential, validate)
from .reduction_pipeline import reduce_to_twin
from .welfare_engine import fmt_number, poa, quadrature_oracle_fpa

TARGET = 1.0 - math.exp(-2.0)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return fmt_number(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dump(obj, out=None) -> None:
    text = json.dumps(_clean(obj), indent=2, sort_keys=False)
    (out or sys.stdout).write(text + "\n")


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.15g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def threads() -> int:
    raw = os.environ.get("POAFORGE_THREADS", "1")
    try:
        k = int(raw)
    except ValueError as exc:
        raise DomainError(f"POAFORGE_THREADS must be an integer, got {raw!r}") from exc
    if k < 1:
        raise DomainError("POAFORGE_THREADS must be at least 1")
    return k


def _map(fn, items):
    k = threads()
    if k == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=k) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * k))))


@dataclass(frozen=True)
class RunConfig:
    """Validated knobs shared by the subcommands."""

    command: str
    instance: str | None = None
    m: int | None = None
    n: int | None = None
    samples: int = 1_000_000
    seed: int = 0
    grid: int = 30
    out: str | None = None

    def __post_init__(self):
        if self.m is not None and self.m < 0:
            raise DomainError("--m must be non-negative")
        if self.n is not None and self.n < 4 and self.instance and "worstcase" in self.instance:
            raise DomainError("--n must be at least 4 for the worst-case family")
        if self.samples < lab.MIN_SAMPLES:
            raise DomainError(f"--samples must be at least {lab.MIN_SAMPLES}")
        if self.grid < 2:
            raise DomainError("--grid must be at least 2")


def _samples(text: str) -> int:
    try:
        val = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not val.is_integer():
        raise argparse.ArgumentTypeError(f"sample count must be an integer, got {text!r}")
    return int(val)


def _config(args) -> RunConfig:
    return RunConfig(args.command, getattr(args, "instance", None), getattr(args, "m", None),
                     getattr(args, "n", None), getattr(args, "samples", 1_000_000),
                     getattr(args, "seed", 0), getattr(args, "grid", 30),
                     getattr(args, "out", None))


def _load(cfg: RunConfig):
    if cfg.instance is None:
        raise DomainError("--instance is required")
    if cfg.instance.startswith("builtin:"):
        return fixtures.resolve(cfg.instance, cfg.m, cfg.n)
    return load_instance(cfg.instance)


def _piecewise(cfg: RunConfig) -> PiecewiseInstance:
    inst = _load(cfg)
    if not isinstance(inst, PiecewiseInstance):
        raise DomainError(f"{cfg.instance} is a finite auction, not a piecewise instance")
    return inst


# ---------------------------------------------------------------------
# subcommands

def cmd_validate(args) -> int:
    inst = _piecewise(_config(args))
    rep = validate(inst)
    payload = {"valid": rep.ok, "violations": [
        {"invariant": v.invariant, "sigma": v.sigma, "column": v.column, "detail": v.detail}
        for v in rep.violations]}
    if rep.ok:
        _dump(payload)
        return 0
    _dump(payload, sys.stderr)
    return 1


def cmd_classify(args) -> int:
    inst = _piecewise(_config(args))
    cls = classify(inst)
    payload = {"class": cls.label}
    if cls >= InstanceClass.FLOOR:
        payload["potential"] = potential(inst, cls)
    if cls.is_ceiling():
        j = jump_entry(inst, cls)
        payload["jump"] = None if j is None else {
            "sigma": str(j.sigma_star), "column": j.j_star, "lambda": j.lambda_star,
            "phi": j.phi_star, "kind": j.kind.value}
    _dump(payload)
    return 0


def cmd_poa(args) -> int:
    cfg = _config(args)
    inst = _load(cfg)
    if isinstance(inst, PiecewiseInstance):
        rep = poa(inst)
        payload = rep.to_dict()
        if args.oracle:
            payload["fpa_oracle"] = quadrature_oracle_fpa(inst)
    else:
        payload = lab.analytic_welfare(inst).to_dict()
    payload["instance"] = cfg.instance
    _dump(payload)
    return 0


def cmd_reduce(args) -> int:
    cfg = _config(args)
    inst = _piecewise(cfg)
    out, trace = reduce_to_twin(inst)
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            fh.write(trace.to_json(indent=2) + "\n")
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(out.to_json(indent=2) + "\n")
    _dump({"input_class": classify(inst).label, "input_poa": poa(inst).poa,
           "output_class": classify(out).label, "output_poa": poa(out).poa,
           "steps": [s.rule.value for s in trace.steps],
           "loop_iterations": trace.loop_iterations, "output": out.to_dict()})
    return 0


def _wc_row(point):
    lam, mu = point
    return {"lambda": lam, "mu": mu, "h": wca.h_mu(lam, mu),
            "objective": wca.poa_objective(lam, mu)}


def cmd_worst_case(args) -> int:
    cfg = _config(args)
    rows = sorted(_map(_wc_row, wca.feasible_grid(cfg.grid, cfg.grid)),
                  key=lambda r: (r["mu"], r["lambda"]))
    best = wca.optimize_worst_case()
    if args.emit == "csv":
        _write(_csv(rows), cfg.out)
        _dump(best.to_dict(), sys.stderr)
    else:
        if cfg.out:
            _write(_csv(rows), cfg.out)
        _dump({"optimum": best.to_dict(), "target": TARGET, "grid_points": len(rows)})
    return 0


def _disc_row(m):
    return {"m": m, "poa": poa(wca.discretized_worst_case(m)).poa}


def _finite_row(n):
    rep = lab.worst_case_welfare(n)
    upper, lower = lab.lb_welfare_bounds(n)
    return {"n": n, "fpa": rep.fpa, "opt": rep.opt, "poa": rep.poa,
            "fpa_upper": upper, "opt_lower": lower}


def _grid_row(point):
    row = _wc_row(point)
    row["integral"] = wca.poa_integral(*point)
    return row


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.kind == "lambda-mu":
        rows = _map(_grid_row, wca.feasible_grid(cfg.grid, cfg.grid))
        rows.sort(key=lambda r: (r["mu"], r["lambda"]))
    elif args.kind == "discretization":
        ms = sorted({int(x) for x in args.values.split(",")}) if args.values else [250, 500, 1000, 2000]
        rows = sorted(_map(_disc_row, ms), key=lambda r: r["m"])
    else:
        ns = sorted({int(x) for x in args.values.split(",")}) if args.values else [4, 10, 30, 100, 300, 1000]
        if ns and ns[0] < 4:
            raise DomainError("finite-n sweep needs n >= 4")
        rows = sorted(_map(_finite_row, ns), key=lambda r: r["n"])
    _write(_csv(rows), cfg.out)
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    inst = _load(cfg)
    if isinstance(inst, PiecewiseInstance):
        raise DomainError("simulation needs a finite auction (example1-3, single, worstcase)")
    mc = lab.monte_carlo(inst, cfg.samples, cfg.seed)
    exact = lab.analytic_welfare(inst)
    payload = {"instance": cfg.instance, "samples": cfg.samples, "seed": cfg.seed,
               "monte_carlo": mc.to_dict(), "analytic": exact.to_dict()}
    if args.emit == "csv":
        rows = [{"quantity": q, "monte_carlo": getattr(mc, q), "se": getattr(mc, q + "_se"),
                 "analytic": getattr(exact, q)} for q in ("fpa", "opt", "poa")]
        _write(_csv(rows), cfg.out)
    else:
        _dump(payload)
    return 0


def run_repro(quick: bool, seed: int = 7) -> list[dict]:
    """Four estimates of the target ratio plus the reduction round trip."""
    m = 500 if quick else 2000
    n = 100
    samples = 100_000 if quick else 1_000_000
    rows = []

    def add(name, value, tol, note="", se=None):
        gap = abs(value - TARGET)
        rows.append({"estimate": name, "value": value, "gap": gap, "tolerance": tol,
                     "ok": gap <= tol, "note": note, "se": se})

    t0 = time.perf_counter()
    best = wca.optimize_worst_case()
    add("analytic", best.objective, 1e-9, f"lambda={best.lam:.12g} mu={best.mu:.12g}")
    add("integral", wca.poa_integral(best.lam, best.mu), 1e-8)
    disc = wca.discretized_worst_case(m)
    add("discretized", poa(disc).poa, 5e-4, f"m={m}")
    out, trace = reduce_to_twin(wca.discretized_worst_case(min(m, 200)))
    add("reduced", poa(out).poa, 5e-4, f"{classify(out).label} after {trace.loop_iterations} loop steps")
    inst = lab.build_worst_case_instance(n)
    exact = lab.worst_case_welfare(n)
    mc = lab.monte_carlo(inst, samples, seed)
    # the finite instance sits above the target by O(1/n); allow that plus sampling noise
    add("monte_carlo", mc.poa, abs(exact.poa - TARGET) + 4 * mc.poa_se,
        f"n={n} samples={samples} analytic={exact.poa:.12g}", mc.poa_se)
    rows.append({"estimate": "elapsed_seconds", "value": time.perf_counter() - t0, "gap": None,
                 "tolerance": None, "ok": True, "note": "", "se": None})
    return rows


def cmd_repro(args) -> int:
    rows = run_repro(args.quick, args.seed)
    if args.emit == "csv":
        _write(_csv(rows), args.out)
    else:
        w = max(len(r["estimate"]) for r in rows)
        lines = [f"target 1 - 1/e^2 = {TARGET:.15g}"]
        for r in rows:
            if r["gap"] is None:
                lines.append(f"{r['estimate']:<{w}}  {r['value']:.3f}")
                continue
            flag = "ok" if r["ok"] else "FAIL"
            lines.append(f"{r['estimate']:<{w}}  {r['value']:.15g}  gap={r['gap']:.3g}  "
                         f"tol={r['tolerance']:.3g}  {flag}  {r['note']}".rstrip())
        _write("\n".join(lines) + "\n", args.out)
    return 0 if all(r["ok"] for r in rows) else 2


# ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poaforge",
                                description="Price of Anarchy tools for first-price auctions.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_instance(sp, m=True, n=False):
        sp.add_argument("--instance", required=True,
                        help="JSON path or builtin:NAME (" + ", ".join(fixtures.names()) + ")")
        if m:
            sp.add_argument("--m", type=int, default=None,
                            help="pieces minus one for discretized builtins")
        if n:
            sp.add_argument("--n", type=int, default=None,
                            help=f"low-impact bidders for builtin:worstcase (default {fixtures.DEFAULT_N})")

    sp = sub.add_parser("validate", help="check the structural invariants of an instance")
    with_instance(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("classify", help="report the class, potential and jump entry")
    with_instance(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("poa", help="auction welfare, optimal welfare and their ratio")
    with_instance(sp, n=True)
    sp.add_argument("--oracle", action="store_true", help="also report the quadrature FPA")
    sp.set_defaults(func=cmd_poa)

    sp = sub.add_parser("reduce", help="run preprocessing and the main reduction loop")
    sp.add_argument("--instance", "--in", dest="instance", required=True,
                    help="JSON path or builtin:NAME (" + ", ".join(fixtures.names()) + ")")
    sp.add_argument("--m", type=int, default=None, help="pieces minus one for discretized builtins")
    sp.add_argument("--out", default=None, help="write the twin-ceiling output instance as JSON")
    sp.add_argument("--trace", "--trace-out", dest="trace_out", default=None,
                    help="write the full trace as JSON")
    sp.set_defaults(func=cmd_reduce)

    sp = sub.add_parser("worst-case", help="sweep and optimize the worst-case family")
    sp.add_argument("--grid", type=int, default=30, help="points per axis (default 30)")
    sp.add_argument("--emit", choices=("json", "csv"), default="json")
    sp.add_argument("--out", default=None, help="CSV destination for the sweep")
    sp.set_defaults(func=cmd_worst_case)

    sp = sub.add_parser("sweep", help="long-form CSV sweeps for plotting")
    sp.add_argument("--kind", choices=("lambda-mu", "discretization", "finite-n"),
                    default="lambda-mu")
    sp.add_argument("--grid", type=int, default=30, help="points per axis for lambda-mu")
    sp.add_argument("--values", default=None, help="comma-separated m or n values")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="Monte Carlo welfare of a finite auction")
    with_instance(sp, m=False, n=True)
    sp.add_argument("--samples", type=_samples, default=1_000_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--emit", choices=("json", "csv"), default="json")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("repro", help="end-to-end reproduction of 1 - 1/e^2")
    sp.add_argument("--quick", action="store_true", help="smaller m and sample count")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--emit", choices=("table", "csv"), default="table")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_repro)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InvariantError, OracleFailure) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
