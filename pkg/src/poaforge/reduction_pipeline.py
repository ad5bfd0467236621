"""Reductions that push a valid instance towards a twin-ceiling instance.

Every reduction returns an instance whose PoA is no larger (up to floating
point slack) than its input. The Main loop chains them until the twin-ceiling
shape is reached; the number of value entries above the ceiling value (the
potential) bounds the number of iterations.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._numerics import golden_min
from .errors import DomainError, InvariantError, UnsupportedClassError
from .instance_model import (
    AnalyticInstance,
    InstanceClass,
    JumpKind,
    PiecewiseInstance,
    check_valid,
    classify,
    jump_entry,
    potential,
)
from .welfare_engine import piece_fpa, piece_log_increments, poa, reconstruct_bids

EPS_POA = 1e-9
SLICE_SAMPLES = 64
SLICE_XTOL = 1e-10
DEGENERATE_POA = 1.0 - 1e-9


class Rule(enum.Enum):
    DISCRETIZE = "Discretize"
    TRANSLATE = "Translate"
    LAYER = "Layer"
    POLARIZE = "Polarize"
    SLICE = "Slice"
    COLLAPSE = "Collapse"
    HALVE = "Halve"
    ASCEND_DESCEND = "AscendDescend"
    NORMALIZE = "Normalize"


class Branch(enum.Enum):
    FLOOR = "Floor"
    CEILING = "Ceiling"
    LEFT = "Left"
    RIGHT = "Right"
    ASCENDED = "Ascended"
    DESCENDED = "Descended"


LOOP_RULES = (Rule.SLICE, Rule.COLLAPSE, Rule.HALVE, Rule.ASCEND_DESCEND)


@dataclass(frozen=True)
class Candidates:
    """Both outcomes of a two-branch reduction and the chosen one."""

    chosen: PiecewiseInstance
    branch: Branch
    first: PiecewiseInstance
    second: PiecewiseInstance
    poa_first: float
    poa_second: float


@dataclass(frozen=True)
class ReductionStep:
    rule: Rule
    branch: Branch | None
    psi_before: int | None
    psi_after: int | None
    poa_before: float
    poa_after: float
    class_before: InstanceClass
    class_after: InstanceClass
    candidates: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "rule": self.rule.value,
            "branch": None if self.branch is None else self.branch.value,
            "psi_before": self.psi_before,
            "psi_after": self.psi_after,
            "poa_before": _fmt(self.poa_before),
            "poa_after": _fmt(self.poa_after),
            "class_before": self.class_before.label,
            "class_after": self.class_after.label,
            "candidates": {k: _fmt(v) for k, v in sorted(self.candidates.items())},
            "note": self.note,
        }


@dataclass
class ReductionTrace:
    steps: list[ReductionStep] = field(default_factory=list)
    input: dict | None = None
    output: dict | None = None
    accumulated_slack: float = 0.0

    @property
    def loop_iterations(self) -> int:
        return sum(1 for s in self.steps if s.rule in LOOP_RULES)

    def to_dict(self) -> dict:
        return {
            "steps": [s.to_dict() for s in self.steps],
            "loop_iterations": self.loop_iterations,
            "accumulated_slack": _fmt(self.accumulated_slack),
            "input": self.input,
            "output": self.output,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _fmt(x):
    return None if x is None else float(f"{x:.15g}")


# ---------------------------------------------------------------------
# preprocessing reductions

def discretize(src: AnalyticInstance, m: int) -> PiecewiseInstance:
    """Right-endpoint interpolation of the mappings on ``m + 1`` equal pieces."""
    if m < 0:
        raise DomainError("piece count must be nonnegative")
    if not (math.isfinite(src.lower) and math.isfinite(src.upper)) or src.upper <= src.lower:
        raise DomainError("discretize needs a bounded bid support")
    part = np.linspace(src.lower, src.upper, m + 2)
    right = part[1:]
    table = np.vstack([np.broadcast_to(np.asarray(f(right), dtype=float), right.shape)
                       for f in src.phi])
    if not np.all(np.isfinite(table)):
        raise DomainError("mapping is not finite on the support; truncate the source first")
    if src.cond_value == "ceiling":
        atoms = ((float(table[0, 0]), 1.0),)
    elif src.cond_value == "floor":
        atoms = ((float(part[0]), 1.0),)
    else:
        atoms = tuple(src.cond_value)
    return check_valid(PiecewiseInstance(part, table, atoms, src.n))


def translate(inst: PiecewiseInstance) -> PiecewiseInstance:
    g = inst.gamma
    if g == 0.0:
        return inst
    return PiecewiseInstance(inst.partition - g, inst.table - g,
                             tuple((v - g, p) for v, p in inst.cond_value), inst.n)


def layer(inst: PiecewiseInstance) -> PiecewiseInstance:
    """Sort the real rows (monopolist included) decreasingly in every column."""
    real = -np.sort(-inst.real_rows, axis=0)
    if np.array_equal(real, inst.real_rows):
        return inst
    return inst.replace(table=np.vstack([real, inst.l_row[None, :]]))


def polarize(inst: PiecewiseInstance) -> Candidates:
    """Floor and ceiling candidates; the PoA-worse one wins, ties to ceiling."""
    cls = classify(inst)
    if cls < InstanceClass.LAYERED:
        raise UnsupportedClassError(f"polarize needs a layered instance, got {cls.label}")
    floor = inst.as_floor()
    ceiling = inst.as_ceiling()
    pf, pc = poa(floor).poa, poa(ceiling).poa
    if pc <= pf:
        return Candidates(ceiling, Branch.CEILING, floor, ceiling, pf, pc)
    return Candidates(floor, Branch.FLOOR, floor, ceiling, pf, pc)


# ---------------------------------------------------------------------
# Slice

def shift_instance(inst: PiecewiseInstance, t: float, form: str = "floor") -> PiecewiseInstance:
    """Bid CDFs ``b ↦ B(b + t)``: split the piece holding ``t`` and shift down."""
    part = inst.partition
    if not (part[0] <= t < part[-1]):
        raise DomainError(f"shift {t} outside [gamma, lambda)")
    k = int(np.searchsorted(part, t, side="right") - 1)
    new_part = np.concatenate([[0.0], part[k + 1:] - t])
    table = inst.table[:, k:] - t
    if form == "floor":
        atoms = ((0.0, 1.0),)
    elif form == "ceiling":
        atoms = ((float(table[0, 0]), 1.0),)
    else:
        raise DomainError(f"unknown form {form!r}")
    return PiecewiseInstance(new_part, table, atoms, inst.n)


class FloorSpectrum:
    """PoA of the shifted floor instances ``t ↦ inst^{(t)}``, vectorized in t.

    Reuses the closed forms: the shifted instance keeps every full piece to
    the right of ``t`` and a truncated copy of the piece holding ``t``.
    """

    def __init__(self, inst: PiecewiseInstance):
        self.inst = inst
        self.bids = reconstruct_bids(inst, check=False)
        part = inst.partition
        lof = self.bids.log_first_order
        self.first_order = np.exp(lof)
        full = piece_fpa(part[:-1], part[1:], inst.l_row, inst.real_rows, self.first_order[1:])
        # welfare of full pieces strictly to the right of piece k
        self.tail_fpa = np.append(np.cumsum(full[::-1])[::-1], 0.0)[1:]

    def piece_of(self, t: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.inst.partition, t, side="right") - 1, 0, self.inst.m)

    def _in_piece(self, k: int, t: np.ndarray):
        inst = self.inst
        hi = inst.partition[k + 1]
        col = inst.table[:, k]
        a, c = col[-1], col[:-1, None]
        fo_hi = self.first_order[k + 1]
        fpa_t = piece_fpa(t, hi, a, c, fo_hi) + self.tail_fpa[k]
        fo_t = fo_hi * (a - hi) / (a - t)
        fpa_t = fpa_t - t * (1.0 - fo_t)

        real, pseudo = piece_log_increments(t, hi, a, c, inst.n)
        log_k = np.vstack([real, pseudo[None, :]])          # (rows, T)
        vals_rest = inst.table[:, k + 1:].ravel()
        logs_rest = -self.bids.increments[:, k + 1:].ravel()
        vals = np.concatenate([col, vals_rest])
        order = np.argsort(vals, kind="stable")
        vs = vals[order]
        logs = np.concatenate([-log_k, np.broadcast_to(logs_rest[:, None],
                                                        (logs_rest.size, t.size))])[order]
        suffix = np.cumsum(logs[::-1], axis=0)[::-1]       # entries with index >= s
        widths = np.diff(vs)[:, None]
        inner = np.sum(widths * (1.0 - np.exp(suffix[1:])), axis=0)
        opt_t = (vs[0] - t) * (1.0 - np.exp(suffix[0])) + inner
        return fpa_t, opt_t

    def welfare(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        f = np.empty_like(t)
        o = np.empty_like(t)
        ks = self.piece_of(t)
        for k in np.unique(ks):
            sel = ks == k
            f[sel], o[sel] = self._in_piece(int(k), t[sel])
        return f, o

    def poa(self, t) -> np.ndarray:
        f, o = self.welfare(t)
        return f / o


@dataclass(frozen=True)
class SliceResult:
    output: PiecewiseInstance
    t_star: float
    poa_floor_at_t: float
    degenerate: bool = False


def _snap(t: float, part: np.ndarray, width: float) -> float:
    j = int(np.argmin(np.abs(part[:-1] - t)))
    if abs(part[j] - t) <= 1e-8 * width:
        return float(part[j])
    return t


def slice_search(inst: PiecewiseInstance, samples: int = SLICE_SAMPLES,
                 xtol: float = SLICE_XTOL) -> tuple[float, float]:
    """Smallest minimizer of the floor-spectrum PoA over ``[0, λ)``."""
    spectrum = FloorSpectrum(inst)
    part = inst.partition
    grid = np.concatenate([np.linspace(part[j], part[j + 1], samples, endpoint=False)
                           for j in range(inst.columns)])
    values = spectrum.poa(grid)
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[i + 1] if i + 1 < grid.size else part[-1] - 1e-12 * (part[-1] - part[-2])
    scalar = lambda x: float(spectrum.poa(x)[0])
    best_t, best_v = float(grid[i]), float(values[i])
    t_ref, v_ref = golden_min(scalar, float(lo), float(hi), xtol=xtol)
    if v_ref < best_v:
        best_t, best_v = t_ref, v_ref
    # a minimizer sitting on a partition point is a kink; take it exactly
    width = float(np.min(np.diff(part)))
    snapped = _snap(best_t, part, width)
    if snapped != best_t:
        v_snap = scalar(snapped)
        if v_snap <= best_v + 1e-13:
            best_t, best_v = snapped, v_snap
    # smallest t among (numerically) tied grid minima
    ties = np.flatnonzero(values <= best_v + 1e-15)
    if ties.size and grid[ties[0]] < best_t:
        best_t, best_v = float(grid[ties[0]]), float(values[ties[0]])
    return best_t, best_v


def slice_reduction(inst: PiecewiseInstance) -> SliceResult:
    cls = classify(inst)
    if cls is not InstanceClass.FLOOR:
        raise UnsupportedClassError(f"slice needs a floor instance, got {cls.label}")
    base = poa(inst).poa
    if base >= DEGENERATE_POA:
        return SliceResult(inst, 0.0, base, degenerate=True)
    t, v = slice_search(inst)
    return SliceResult(shift_instance(inst, t, "ceiling"), t, v)


# ---------------------------------------------------------------------
# ceiling reductions

def collapse(inst: PiecewiseInstance) -> PiecewiseInstance:
    """Set non-monopoly entries left of the jump column to the pseudo entry."""
    cls = classify(inst)
    if not cls.is_ceiling():
        raise UnsupportedClassError(f"collapse needs a ceiling instance, got {cls.label}")
    if cls >= InstanceClass.STRONG_CEILING or inst.n == 0:
        return inst
    jump = jump_entry(inst, cls)
    stop = inst.columns if jump is None else jump.j_star
    table = np.array(inst.table)
    table[1:-1, :stop] = table[-1, :stop]
    return inst.replace(table=table)


def halve_parts(inst: PiecewiseInstance, j_star: int) -> tuple[PiecewiseInstance, PiecewiseInstance]:
    part = inst.partition
    lam_star = part[j_star]
    left = PiecewiseInstance(part[:j_star + 1], inst.table[:, :j_star],
                             ((inst.phi_h0, 1.0),), inst.n)
    right = PiecewiseInstance(part[j_star:] - lam_star, inst.table[:, j_star:] - lam_star,
                              ((0.0, 1.0),), inst.n)
    return left, right


def halve(inst: PiecewiseInstance) -> Candidates:
    """Split at a pseudo jump; the PoA-worse half wins, ties to the left."""
    cls = classify(inst)
    if cls is not InstanceClass.STRONG_CEILING:
        raise UnsupportedClassError(f"halve needs a strong ceiling, got {cls.label}")
    jump = jump_entry(inst, cls)
    if jump is None or jump.kind is not JumpKind.PSEUDO:
        raise UnsupportedClassError("halve needs a pseudo jump")
    left, right = halve_parts(inst, jump.j_star)
    pl, pr = poa(left).poa, poa(right).poa
    if pl <= pr:
        return Candidates(left, Branch.LEFT, left, right, pl, pr)
    return Candidates(right, Branch.RIGHT, left, right, pl, pr)


def ascend_descend_parts(inst: PiecewiseInstance, jump) -> tuple[PiecewiseInstance, PiecewiseInstance]:
    up = np.array(inst.table)
    up[0, :jump.j_star] = jump.phi_star
    ascended = PiecewiseInstance(inst.partition, up, ((jump.phi_star, 1.0),), inst.n)
    down = np.array(inst.table)
    down[jump.row, jump.j_star] = inst.phi_h0
    descended = PiecewiseInstance(inst.partition, down, ((inst.phi_h0, 1.0),), inst.n)
    return ascended, descended


def ascend_descend(inst: PiecewiseInstance) -> Candidates:
    """Raise the monopolist's flat start or lower the jump entry; ties ascend."""
    cls = classify(inst)
    if cls is not InstanceClass.STRONG_CEILING:
        raise UnsupportedClassError(f"ascend_descend needs a strong ceiling, got {cls.label}")
    jump = jump_entry(inst, cls)
    if jump is None or jump.kind is not JumpKind.REAL:
        raise UnsupportedClassError("ascend_descend needs a real jump")
    asc, desc = ascend_descend_parts(inst, jump)
    pa, pd = poa(asc).poa, poa(desc).poa
    if pa <= pd:
        return Candidates(asc, Branch.ASCENDED, asc, desc, pa, pd)
    return Candidates(desc, Branch.DESCENDED, asc, desc, pa, pd)


def normalize_degenerate(inst: PiecewiseInstance) -> PiecewiseInstance:
    """Single-piece twin ceiling built from the first column.

    Used only when the input PoA is already 1 up to rounding, where any twin
    ceiling is weakly worse.
    """
    h0 = inst.phi_h0
    l0 = float(inst.table[-1, 0])
    n = inst.n
    table = np.array([[h0]] + [[l0]] * n + [[l0]])
    return PiecewiseInstance(inst.partition[:2] - inst.gamma, table, ((h0, 1.0),), n)


# ---------------------------------------------------------------------
# Main loop

def _state(inst):
    cls = classify(inst)
    psi = potential(inst, cls) if cls in (InstanceClass.FLOOR,) or cls.is_ceiling() else None
    return cls, psi, poa(inst, check=False).poa


def run_main(inst: PiecewiseInstance, eps: float = EPS_POA,
             on_step=None) -> tuple[PiecewiseInstance, ReductionTrace]:
    """Apply Slice/Collapse/Halve/Ascend-Descend until a twin ceiling remains.

    ``on_step(before, after, step)`` is called after every rule application.
    """
    cls, psi, p = _state(inst)
    if cls is not InstanceClass.FLOOR and not cls.is_ceiling():
        raise UnsupportedClassError(f"run_main needs a floor or ceiling instance, got {cls.label}")
    trace = ReductionTrace(input=inst.to_dict())
    budget = 1 + 2 * psi + 2
    cur = inst
    while cls is not InstanceClass.TWIN_CEILING:
        if p >= DEGENERATE_POA:
            nxt = normalize_degenerate(cur)
            rule, branch, cands, note = Rule.NORMALIZE, None, {}, "degenerate input"
        elif cls is InstanceClass.FLOOR:
            res = slice_reduction(cur)
            nxt = res.output
            rule, branch, cands = Rule.SLICE, None, {"floor_at_t": res.poa_floor_at_t}
            note = f"t*={res.t_star:.15g}"
        elif cls is InstanceClass.CEILING:
            nxt = collapse(cur)
            rule, branch, cands, note = Rule.COLLAPSE, None, {}, ""
        else:
            jump = jump_entry(cur, cls)
            if jump.kind is JumpKind.PSEUDO:
                c = halve(cur)
                rule = Rule.HALVE
                cands = {"Left": c.poa_first, "Right": c.poa_second}
            else:
                c = ascend_descend(cur)
                rule = Rule.ASCEND_DESCEND
                cands = {"Ascended": c.poa_first, "Descended": c.poa_second}
            nxt, branch = c.chosen, c.branch
            note = f"jump=({jump.sigma_star},{jump.j_star})"
        ncls, npsi, np_ = _state(nxt)
        trace.steps.append(ReductionStep(rule, branch, psi, npsi, p, np_, cls, ncls, cands, note))
        if on_step is not None:
            on_step(cur, nxt, trace.steps[-1])
        trace.accumulated_slack += eps * abs(p)
        cur, cls, psi, p = nxt, ncls, npsi, np_
        if rule is Rule.NORMALIZE:
            break
        if trace.loop_iterations > budget:
            raise InvariantError(f"Main loop exceeded its iteration budget {budget}")
    if cls is not InstanceClass.TWIN_CEILING:
        raise InvariantError(f"Main loop ended on {cls.label}")
    trace.output = cur.to_dict()
    return cur, trace


def preprocess(inst: PiecewiseInstance) -> tuple[PiecewiseInstance, list[ReductionStep]]:
    """Translate, Layer and Polarize a valid discretized instance."""
    steps = []
    cur = check_valid(inst)
    for rule, fn in ((Rule.TRANSLATE, translate), (Rule.LAYER, layer)):
        before = poa(cur).poa
        cb = classify(cur)
        cur = fn(cur)
        steps.append(ReductionStep(rule, None, None, None, before, poa(cur).poa, cb, classify(cur)))
    before = poa(cur).poa
    cb = classify(cur)
    c = polarize(cur)
    ncls = classify(c.chosen)
    steps.append(ReductionStep(Rule.POLARIZE, c.branch, None, potential(c.chosen, ncls), before,
                               min(c.poa_first, c.poa_second), cb, ncls,
                               {"Floor": c.poa_first, "Ceiling": c.poa_second}))
    return c.chosen, steps


def reduce_to_twin(inst: PiecewiseInstance) -> tuple[PiecewiseInstance, ReductionTrace]:
    """Full pipeline from any valid discretized instance."""
    pre, steps = preprocess(inst)
    out, trace = run_main(pre)
    trace.steps[:0] = steps
    trace.input = inst.to_dict()
    return out, trace
