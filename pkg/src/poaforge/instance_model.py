"""Piecewise pseudo-instances: representation, validation, classification.

A :class:`PiecewiseInstance` stores a bid partition ``λ_0 < … < λ_{m+1}``,
a table of bid-to-value entries with one row per bidder, and the
monopolist's conditional value distribution as a finite atom list.

Table rows are ordered ``H, 1, …, n, L``: row 0 is the monopolist, rows
``1..n`` are the non-monopoly real bidders, and the last row is the pseudo
bidder standing in for a crowd of low-impact bidders.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, StructuralError, UnsupportedClassError

EPS_CLASS = 1e-9
PROB_TOL = 1e-12
MONOTONE_TOL = 1e-12


class BidderKind(enum.IntEnum):
    MONOPOLIST = 0
    REAL = 1
    PSEUDO = 2


@dataclass(frozen=True, order=True)
class BidderId:
    """Bidder identity ordered as H < 1 < … < n < L."""

    kind: BidderKind
    index: int = 0

    @classmethod
    def from_row(cls, row: int, n: int) -> "BidderId":
        if row == 0:
            return cls(BidderKind.MONOPOLIST)
        if row == n + 1:
            return cls(BidderKind.PSEUDO)
        if 1 <= row <= n:
            return cls(BidderKind.REAL, row)
        raise StructuralError(f"row {row} out of range for n={n}")

    def row(self, n: int) -> int:
        if self.kind is BidderKind.MONOPOLIST:
            return 0
        if self.kind is BidderKind.PSEUDO:
            return n + 1
        return self.index

    def __str__(self) -> str:
        if self.kind is BidderKind.MONOPOLIST:
            return "H"
        if self.kind is BidderKind.PSEUDO:
            return "L"
        return str(self.index)


class InstanceClass(enum.IntEnum):
    INVALID = 0
    VALID = 1
    DISCRETIZED = 2
    TRANSLATED = 3
    LAYERED = 4
    FLOOR = 5
    CEILING = 6
    STRONG_CEILING = 7
    TWIN_CEILING = 8

    @property
    def label(self) -> str:
        return "".join(w.capitalize() for w in self.name.split("_"))

    def is_ceiling(self) -> bool:
        return self in (InstanceClass.CEILING, InstanceClass.STRONG_CEILING,
                        InstanceClass.TWIN_CEILING)


class JumpKind(enum.Enum):
    PSEUDO = "PseudoJump"
    REAL = "RealJump"


@dataclass(frozen=True)
class JumpEntry:
    sigma_star: BidderId
    j_star: int
    lambda_star: float
    phi_star: float
    kind: JumpKind
    row: int


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PiecewiseInstance:
    """Immutable discretized pseudo-instance.

    ``table`` has shape ``(n + 2, m + 1)``; ``cond_value`` holds
    ``(value, probability)`` atoms.
    """

    partition: np.ndarray
    table: np.ndarray
    cond_value: tuple[tuple[float, float], ...]
    n: int = field(default=-1)

    def __post_init__(self):
        part = _frozen(self.partition)
        tab = _frozen(self.table)
        atoms = tuple((float(v), float(p)) for v, p in self.cond_value)
        object.__setattr__(self, "partition", part)
        object.__setattr__(self, "table", tab)
        object.__setattr__(self, "cond_value", atoms)
        if part.ndim != 1 or part.size < 2:
            raise StructuralError("partition needs at least two points")
        if tab.ndim != 2:
            raise StructuralError("table must be two-dimensional")
        n = tab.shape[0] - 2 if self.n < 0 else int(self.n)
        object.__setattr__(self, "n", n)
        if n < 0 or tab.shape[0] != n + 2:
            raise StructuralError(
                f"table has {tab.shape[0]} rows, expected n + 2 = {n + 2}")
        if tab.shape[1] != part.size - 1:
            raise StructuralError(
                f"table has {tab.shape[1]} columns, partition implies {part.size - 1}")
        if not atoms:
            raise StructuralError("cond_value needs at least one atom")

    # basic accessors -------------------------------------------------
    @property
    def m(self) -> int:
        return self.partition.size - 2

    @property
    def columns(self) -> int:
        return self.partition.size - 1

    @property
    def gamma(self) -> float:
        return float(self.partition[0])

    @property
    def lam(self) -> float:
        return float(self.partition[-1])

    @property
    def phi_h0(self) -> float:
        return float(self.table[0, 0])

    @property
    def h_row(self) -> np.ndarray:
        return self.table[0]

    @property
    def l_row(self) -> np.ndarray:
        return self.table[-1]

    @property
    def real_rows(self) -> np.ndarray:
        """Rows of every real bidder, monopolist included."""
        return self.table[:-1]

    @property
    def atom_values(self) -> np.ndarray:
        return np.array([v for v, _ in self.cond_value])

    @property
    def atom_probs(self) -> np.ndarray:
        return np.array([p for _, p in self.cond_value])

    def replace(self, partition=None, table=None, cond_value=None) -> "PiecewiseInstance":
        tab = self.table if table is None else table
        return PiecewiseInstance(
            partition=self.partition if partition is None else partition,
            table=tab,
            cond_value=self.cond_value if cond_value is None else cond_value,
            n=np.asarray(tab).shape[0] - 2,
        )

    def as_floor(self) -> "PiecewiseInstance":
        return self.replace(cond_value=((self.gamma, 1.0),))

    def as_ceiling(self) -> "PiecewiseInstance":
        return self.replace(cond_value=((self.phi_h0, 1.0),))

    def scaled(self, c: float) -> "PiecewiseInstance":
        return PiecewiseInstance(self.partition * c, self.table * c,
                                 tuple((v * c, p) for v, p in self.cond_value), self.n)

    # serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "partition": [float(x) for x in self.partition],
            "n": self.n,
            "table": {
                "H": [float(x) for x in self.table[0]],
                "real": [[float(x) for x in row] for row in self.table[1:-1]],
                "L": [float(x) for x in self.table[-1]],
            },
            "cond_value": [{"v": v, "p": p} for v, p in self.cond_value],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseInstance":
        return instance_from_dict(data)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _float_list(obj, path: str) -> list[float]:
    if not isinstance(obj, list):
        raise ParseError("expected a list of numbers", path)
    out = []
    for k, x in enumerate(obj):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ParseError("expected a number", f"{path}[{k}]")
        out.append(float(x))
    return out


def instance_from_dict(data) -> PiecewiseInstance:
    """Parse the JSON instance schema, naming the offending field on error."""
    if not isinstance(data, dict):
        raise ParseError("expected an object", "$")
    for key in ("partition", "n", "table", "cond_value"):
        if key not in data:
            raise ParseError("missing field", f"$.{key}")
    partition = _float_list(data["partition"], "$.partition")
    n = data["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 0:
        raise ParseError("expected a nonnegative integer", "$.n")
    table = data["table"]
    if not isinstance(table, dict):
        raise ParseError("expected an object", "$.table")
    for key in ("H", "real", "L"):
        if key not in table:
            raise ParseError("missing field", f"$.table.{key}")
    h = _float_list(table["H"], "$.table.H")
    lrow = _float_list(table["L"], "$.table.L")
    if not isinstance(table["real"], list):
        raise ParseError("expected a list of rows", "$.table.real")
    real = [_float_list(r, f"$.table.real[{k}]") for k, r in enumerate(table["real"])]
    if len(real) != n:
        raise ParseError(f"expected {n} rows, got {len(real)}", "$.table.real")
    width = len(partition) - 1
    for name, row in [("H", h), ("L", lrow)] + [(f"real[{k}]", r) for k, r in enumerate(real)]:
        if len(row) != width:
            raise ParseError(f"row length {len(row)} != m + 1 = {width}", f"$.table.{name}")
    atoms = data["cond_value"]
    if not isinstance(atoms, list) or not atoms:
        raise ParseError("expected a nonempty list of atoms", "$.cond_value")
    parsed = []
    for k, a in enumerate(atoms):
        if not isinstance(a, dict) or "v" not in a or "p" not in a:
            raise ParseError("expected {\"v\": .., \"p\": ..}", f"$.cond_value[{k}]")
        v = _float_list([a["v"]], f"$.cond_value[{k}].v")[0]
        p = _float_list([a["p"]], f"$.cond_value[{k}].p")[0]
        parsed.append((v, p))
    if abs(sum(p for _, p in parsed) - 1.0) > PROB_TOL:
        raise ParseError("probabilities must sum to 1", "$.cond_value")
    return PiecewiseInstance(np.array(partition), np.array([h] + real + [lrow]),
                             tuple(parsed), n)


def load_instance(path: str) -> PiecewiseInstance:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg} at line {exc.lineno})", path) from exc
    return instance_from_dict(data)


# ---------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    invariant: str
    sigma: str | None
    column: int | None
    detail: str

    def __str__(self) -> str:
        where = []
        if self.sigma is not None:
            where.append(f"sigma={self.sigma}")
        if self.column is not None:
            where.append(f"j={self.column}")
        return f"{self.invariant} ({', '.join(where)}): {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def names(self) -> set[str]:
        return {v.invariant for v in self.violations}

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


def feasibility_sums(inst: PiecewiseInstance) -> tuple[np.ndarray, np.ndarray]:
    """Column sums ``Σ_i (φ_L − b)/(φ_i − b)`` at both piece endpoints.

    The sum runs over the monopolist and the non-monopoly real rows. The
    right-end value is the limit ``b → λ_{j+1}`` and is the binding one
    because each summand decreases in ``b`` when ``φ_i ≥ φ_L``.
    """
    lo = inst.partition[:-1]
    hi = inst.partition[1:]
    a = inst.l_row
    c = inst.real_rows
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.sum((a - lo) / (c - lo), axis=0)
        right = np.sum((a - hi) / (c - hi), axis=0)
    return left, right


def validate(inst: PiecewiseInstance) -> ValidationReport:
    """List every violated invariant; an empty report means valid."""
    out: list[Violation] = []
    n = inst.n
    part = inst.partition
    tab = inst.table
    sig = [str(BidderId.from_row(r, n)) for r in range(n + 2)]

    if not np.all(np.isfinite(part)):
        out.append(Violation("finiteness", None, None, "partition has non-finite points"))
    if part[0] < 0:
        out.append(Violation("partition", None, 0, "gamma must be nonnegative"))
    steps = np.diff(part)
    for j in np.flatnonzero(~(steps > 0)):
        out.append(Violation("partition", None, int(j), "points must strictly increase"))
    bad = ~np.isfinite(tab)
    for r, j in zip(*np.nonzero(bad)):
        out.append(Violation("finiteness", sig[r], int(j), "entry is not finite"))
    if out:
        return ValidationReport(tuple(out))

    # row monotonicity
    diffs = tab[:, 1:] - tab[:, :-1]
    scale = np.maximum(np.abs(tab[:, :-1]), 1.0)
    for r, j in zip(*np.nonzero(diffs < -MONOTONE_TOL * scale)):
        out.append(Violation("row_monotonicity", sig[r], int(j) + 1,
                             f"{tab[r, j + 1]!r} < {tab[r, j]!r}"))
    # rationality: every entry strictly above the right end of its piece
    for r, j in zip(*np.nonzero(~(tab > part[None, 1:]))):
        out.append(Violation("rationality", sig[r], int(j),
                             f"value {tab[r, j]!r} <= bid {part[j + 1]!r}"))
    # dominance: pseudo row below every real row
    a = tab[-1]
    for r, j in zip(*np.nonzero(tab[:-1] < a[None, :] - EPS_CLASS * np.abs(a[None, :]))):
        out.append(Violation("dominance", sig[r], int(j),
                             f"real entry {tab[r, j]!r} below pseudo entry {a[j]!r}"))
    if not any(v.invariant in ("rationality", "dominance") for v in out):
        left, right = feasibility_sums(inst)
        need = n * (1.0 - EPS_CLASS)
        for j in range(inst.columns):
            worst = min(left[j], right[j])
            if worst < need:
                out.append(Violation("feasibility", None, j,
                                     f"column sum {worst!r} < n = {n}"))
    # conditional value
    probs = inst.atom_probs
    vals = inst.atom_values
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
        out.append(Violation("probability", "H", None, "atoms must be a probability vector"))
    tol = EPS_CLASS * max(abs(inst.phi_h0), 1.0)
    for v in vals:
        if v < inst.gamma - tol or v > inst.phi_h0 + tol:
            out.append(Violation("boundedness", "H", None,
                                 f"atom {v!r} outside [gamma, phi_H0]"))
    return ValidationReport(tuple(out))


def check_valid(inst: PiecewiseInstance) -> PiecewiseInstance:
    from .errors import ValidationError

    report = validate(inst)
    if not report.ok:
        raise ValidationError(str(report))
    return inst


# ---------------------------------------------------------------------
# classification

def _close(x, y, eps: float = EPS_CLASS) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.abs(x - y) <= eps * np.maximum(np.maximum(np.abs(x), np.abs(y)), 1e-300)


def is_translated(inst: PiecewiseInstance) -> bool:
    return inst.gamma == 0.0


def is_layered(inst: PiecewiseInstance) -> bool:
    if not is_translated(inst):
        return False
    tab = inst.table
    upper = tab[:-1]
    lower = tab[1:]
    slack = EPS_CLASS * np.abs(upper)
    return bool(np.all(upper >= lower - slack))


def is_floor_form(inst: PiecewiseInstance) -> bool:
    if len(inst.cond_value) != 1:
        return False
    v, _ = inst.cond_value[0]
    return abs(v - inst.gamma) <= EPS_CLASS * max(inst.phi_h0, 1e-300)


def is_ceiling_form(inst: PiecewiseInstance) -> bool:
    if len(inst.cond_value) != 1:
        return False
    v, _ = inst.cond_value[0]
    return bool(_close(v, inst.phi_h0))


def ultra_ceiling_mask(inst: PiecewiseInstance) -> np.ndarray:
    """Entries strictly above the ceiling value ``φ_{H,0}``."""
    return inst.table > inst.phi_h0 * (1.0 + EPS_CLASS)


def jump_column(inst: PiecewiseInstance) -> int | None:
    above = np.flatnonzero(inst.h_row > inst.phi_h0 * (1.0 + EPS_CLASS))
    return int(above[0]) if above.size else None


def _collapsed_before(inst: PiecewiseInstance, stop: int) -> bool:
    if inst.n == 0 or stop == 0:
        return True
    rows = inst.table[1:-1, :stop]
    return bool(np.all(_close(rows, inst.l_row[None, :stop])))


def _is_strong(inst: PiecewiseInstance) -> bool:
    j = jump_column(inst)
    return _collapsed_before(inst, inst.columns if j is None else j)


def _is_twin(inst: PiecewiseInstance) -> bool:
    h_const = bool(np.all(_close(inst.h_row, inst.phi_h0)))
    return h_const and _collapsed_before(inst, inst.columns)


def classify(inst: PiecewiseInstance, report: ValidationReport | None = None) -> InstanceClass:
    """Most specific class of ``inst`` in the lattice."""
    report = validate(inst) if report is None else report
    if not report.ok:
        return InstanceClass.INVALID
    if not is_translated(inst):
        return InstanceClass.DISCRETIZED
    if not is_layered(inst):
        return InstanceClass.TRANSLATED
    if is_floor_form(inst):
        return InstanceClass.FLOOR
    if not is_ceiling_form(inst):
        return InstanceClass.LAYERED
    if not _is_strong(inst):
        return InstanceClass.CEILING
    if _is_twin(inst):
        return InstanceClass.TWIN_CEILING
    return InstanceClass.STRONG_CEILING


def potential(inst: PiecewiseInstance, cls: InstanceClass | None = None) -> int:
    """Number of ultra-ceiling entries, plus one for floor instances."""
    cls = classify(inst) if cls is None else cls
    if cls is InstanceClass.FLOOR:
        return int(ultra_ceiling_mask(inst).sum()) + 1
    if cls.is_ceiling():
        return int(ultra_ceiling_mask(inst).sum())
    raise UnsupportedClassError(f"potential needs a floor or ceiling instance, got {cls.label}")


def jump_entry(inst: PiecewiseInstance, cls: InstanceClass | None = None) -> JumpEntry | None:
    """Leftmost column holding an ultra-ceiling entry, lowest bidder in it."""
    cls = classify(inst) if cls is None else cls
    if not cls.is_ceiling():
        raise UnsupportedClassError(f"jump_entry needs a ceiling instance, got {cls.label}")
    j = jump_column(inst)
    if j is None:
        return None
    col = inst.table[:, j]
    rows = np.flatnonzero(col > inst.phi_h0 * (1.0 + EPS_CLASS))
    r = int(rows.max())
    sigma = BidderId.from_row(r, inst.n)
    kind = JumpKind.PSEUDO if sigma.kind is BidderKind.PSEUDO else JumpKind.REAL
    return JumpEntry(sigma, j, float(inst.partition[j]), float(col[r]), kind, r)


def make_instance(partition: Sequence[float], h: Sequence[float], l: Sequence[float],
                  real: Iterable[Sequence[float]] = (), cond_value=None) -> PiecewiseInstance:
    """Convenience constructor; ``cond_value`` may be 'floor', 'ceiling' or atoms."""
    real = [list(r) for r in real]
    table = np.array([list(h)] + real + [list(l)], dtype=float)
    part = np.asarray(partition, dtype=float)
    if cond_value is None or cond_value == "ceiling":
        atoms = ((float(table[0, 0]), 1.0),)
    elif cond_value == "floor":
        atoms = ((float(part[0]), 1.0),)
    else:
        atoms = tuple((float(v), float(p)) for v, p in cond_value)
    return PiecewiseInstance(part, table, atoms, len(real))


# ---------------------------------------------------------------------
# analytic sources

@dataclass(frozen=True)
class AnalyticInstance:
    """Instance given by bid-to-value mappings on a bounded bid support.

    ``phi`` lists callables for the rows ``H, 1, …, n, L``. ``cond_value``
    is ``"ceiling"``, ``"floor"`` or an atom list. ``cdfs`` optionally keeps
    the generating bid CDFs for reference.
    """

    lower: float
    upper: float
    phi: tuple
    cond_value: object = "ceiling"
    cdfs: tuple | None = None
    label: str = ""

    @property
    def n(self) -> int:
        return len(self.phi) - 2

    @classmethod
    def from_log_derivatives(cls, lower, upper, dlog_real, dlog_pseudo,
                             cond_value="ceiling", cdfs=None, label=""):
        """Mappings from log-derivatives of the bid CDFs.

        A real bidder competes with everyone else, the pseudo bidder with
        everyone including itself.
        """
        dlog_real = tuple(dlog_real)

        def total(b):
            return sum(f(b) for f in dlog_real) + dlog_pseudo(b)

        def real_map(f):
            return lambda b: b + 1.0 / (total(b) - f(b))

        phis = tuple(real_map(f) for f in dlog_real) + (lambda b: b + 1.0 / total(b),)
        return cls(lower, upper, phis, cond_value, cdfs, label)
