"""Seeded random valid instances and trace checks for the reduction fuzz suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance_model import PiecewiseInstance, classify, InstanceClass, validate
from .reduction_pipeline import EPS_POA, ReductionTrace, Rule, run_main

E2 = 1.0 - math.exp(-2.0)


def random_layered_instance(rng: np.random.Generator, n: int, m: int,
                            form: str = "floor", max_tries: int = 200) -> PiecewiseInstance:
    """Random valid, layered, translated instance with ``n`` real rows and ``m + 1`` pieces.

    Pseudo entries sit above the right piece ends; real entries are drawn at
    or above the pseudo row, often equal to it, then made row-monotone. Draws
    failing feasibility are rejected.
    """
    for _ in range(max_tries):
        part = np.concatenate([[0.0], np.sort(rng.uniform(0.0, 1.0, m + 1))])
        if np.min(np.diff(part)) < 1e-3:
            continue
        right = part[1:]
        l_row = np.maximum.accumulate(right + rng.exponential(0.4, m + 1))
        rows = []
        for _ in range(n + 1):
            lift = rng.exponential(0.5, m + 1) * (rng.random(m + 1) < 0.6)
            rows.append(l_row + lift)
        real = -np.sort(-np.array(rows), axis=0)
        real = np.maximum.accumulate(real, axis=1)
        if rng.random() < 0.3:
            # flat monopolist start, a common shape near the worst case
            cut = int(rng.integers(1, m + 2))
            real[0, :cut] = real[0, 0]
            real[0] = np.maximum.accumulate(np.maximum(real[0], real[1] if n else l_row))
        table = np.vstack([real, l_row[None, :]])
        atoms = ((0.0, 1.0),) if form == "floor" else ((float(table[0, 0]), 1.0),)
        inst = PiecewiseInstance(part, table, atoms, n)
        if validate(inst).ok and classify(inst) >= InstanceClass.FLOOR:
            return inst
    raise RuntimeError("could not draw a valid instance")


@dataclass
class TraceCheck:
    ok: bool = True
    problems: list[str] = field(default_factory=list)

    def fail(self, msg: str) -> None:
        self.ok = False
        self.problems.append(msg)


def check_trace(trace: ReductionTrace, psi_input: int, output: PiecewiseInstance,
                final_poa: float, eps: float = EPS_POA) -> TraceCheck:
    chk = TraceCheck()
    for k, s in enumerate(trace.steps):
        if s.poa_after > s.poa_before * (1.0 + eps) + eps * 1e-3:
            chk.fail(f"step {k} {s.rule.value}: poa {s.poa_before!r} -> {s.poa_after!r}")
        if s.rule in (Rule.SLICE, Rule.HALVE, Rule.ASCEND_DESCEND):
            if not s.psi_after <= s.psi_before - 1:
                chk.fail(f"step {k} {s.rule.value}: psi {s.psi_before} -> {s.psi_after}")
        elif s.rule is Rule.COLLAPSE and s.psi_after != s.psi_before:
            chk.fail(f"step {k} Collapse changed psi {s.psi_before} -> {s.psi_after}")
    if trace.loop_iterations > 1 + 2 * psi_input:
        chk.fail(f"{trace.loop_iterations} iterations > 1 + 2*{psi_input}")
    if classify(output) is not InstanceClass.TWIN_CEILING:
        chk.fail("output is not a twin ceiling")
    if final_poa < E2 - 1e-6:
        chk.fail(f"output poa {final_poa!r} below the lower bound")
    return chk


def halve_identity_gaps(inst: PiecewiseInstance) -> tuple[float, float]:
    """Residuals of the FPA and OPT decompositions across a pseudo-jump split.

    With ``f`` the first-order CDF at the jump bid ``λ*``, welfare of the whole
    equals ``f·W(left) + W(right) + λ*(1 − f)`` for both FPA and OPT.
    """
    from .instance_model import jump_entry
    from .reduction_pipeline import halve_parts
    from .welfare_engine import poa, reconstruct_bids

    jump = jump_entry(inst)
    left, right = halve_parts(inst, jump.j_star)
    f = math.exp(reconstruct_bids(inst).log_first_order[jump.j_star])
    whole, a, b = poa(inst), poa(left), poa(right)
    lam = jump.lambda_star
    return (abs(whole.fpa - (f * a.fpa + b.fpa + lam * (1 - f))),
            abs(whole.opt - (f * a.opt + b.opt + lam * (1 - f))))


def fuzz_case(seed: int) -> dict:
    """Run Main on one seeded instance and return a summary row."""
    from .instance_model import potential
    from .welfare_engine import poa

    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 4))
    m = int(rng.integers(0, 6))
    form = "floor" if rng.random() < 0.5 else "ceiling"
    inst = random_layered_instance(rng, n, m, form)
    psi = potential(inst)
    halves = []

    def visit(before, after, step):
        if step.rule is Rule.HALVE:
            halves.append(halve_identity_gaps(before))

    out, trace = run_main(inst, on_step=visit)
    p_in = poa(inst).poa
    p_out = poa(out).poa
    chk = check_trace(trace, psi, out, p_out)
    return {"seed": seed, "n": n, "m": m, "form": form, "psi": psi,
            "iterations": trace.loop_iterations, "poa_in": p_in, "poa_out": p_out,
            "ok": chk.ok, "problems": chk.problems, "halve_gaps": halves, "trace": trace, "instance": inst}
