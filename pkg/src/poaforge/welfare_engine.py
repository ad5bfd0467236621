"""Exact welfare evaluation on piecewise instances.

On each piece every mapping is constant, so the log-derivatives of the
reconstructed bid CDFs are rational in the bid and integrate to logs. The
first-order CDF of all bids then has the form ``K / (φ_L − b)`` on a piece,
which makes the auction welfare a finite sum of rational and log terms.
The optimal welfare integrand is a step function of the value and is summed
exactly over its breakpoints.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, InvariantError, OracleFailure, ValidationError
from .instance_model import PiecewiseInstance, check_valid

NEG_TOL = 1e-12


class Method(enum.Enum):
    CLOSED_FORM = "ClosedForm"
    QUADRATURE = "Quadrature"
    MONTE_CARLO = "MonteCarlo"


@dataclass(frozen=True)
class WelfareReport:
    fpa: float
    opt: float
    poa: float
    method: Method = Method.CLOSED_FORM
    abs_error: float = 0.0
    fpa_se: float | None = None
    opt_se: float | None = None
    poa_se: float | None = None

    def to_dict(self) -> dict:
        out = {"fpa": self.fpa, "opt": self.opt, "poa": self.poa,
               "method": self.method.value, "abs_error": self.abs_error}
        if self.fpa_se is not None:
            out.update(fpa_se=self.fpa_se, opt_se=self.opt_se, poa_se=self.poa_se)
        return out

    def to_json(self) -> str:
        return json.dumps({k: fmt_number(v) for k, v in self.to_dict().items()})


def fmt_number(x):
    """Round floats to 15 significant digits for stable serialization."""
    if isinstance(x, float):
        return float(f"{x:.15g}")
    return x


# ---------------------------------------------------------------------
# bid reconstruction

def _log_ratio(num_gap, den_gap):
    # ln(num_gap / den_gap) for num_gap >= den_gap > 0, accurate for close gaps
    return np.log1p((num_gap - den_gap) / den_gap)


def piece_log_increments(lo, hi, a, c, n: int):
    """Increments of every log-CDF across ``[lo, hi]`` inside one piece.

    ``a`` is the pseudo entry, ``c`` the real entries (monopolist first) with
    shape ``(n + 1, …)``. Returns ``(real, pseudo)`` with
    ``ln B(hi) − ln B(lo)`` for each real row and for the pseudo row.
    """
    span_a = _log_ratio(a - lo, a - hi)
    span_c = _log_ratio(c - lo, c - hi)
    real = span_a - span_c
    pseudo = span_c.sum(axis=0) - n * span_a
    return real, pseudo


@dataclass(frozen=True)
class ReconstructedBids:
    """Reconstructed bid CDFs of a piecewise instance.

    ``log_cdf[σ, j] = ln B_σ(λ_j)``, ``increments[σ, j]`` is the log-increment
    over piece ``j`` and ``omega = 1 − B_σ(λ_j)/B_σ(λ_{j+1})``.
    """

    inst: PiecewiseInstance
    increments: np.ndarray
    log_cdf: np.ndarray

    @property
    def cdf_at_partition(self) -> np.ndarray:
        return np.exp(self.log_cdf)

    @property
    def omega(self) -> np.ndarray:
        return -np.expm1(-self.increments)

    @property
    def log_first_order(self) -> np.ndarray:
        """``ln 𝓑(λ_j)`` at every partition point."""
        return self.log_cdf.sum(axis=0)

    def log_cdf_at(self, b: float) -> np.ndarray:
        """``ln B_σ(b)`` for every row, ``b`` in ``[γ, λ]``."""
        inst = self.inst
        if b >= inst.lam:
            return np.zeros(inst.n + 2)
        if b < inst.gamma:
            raise DomainError(f"bid {b} below the infimum bid {inst.gamma}")
        j = int(np.searchsorted(inst.partition, b, side="right") - 1)
        hi = inst.partition[j + 1]
        col = inst.table[:, j]
        real, pseudo = piece_log_increments(b, hi, col[-1], col[:-1], inst.n)
        return self.log_cdf[:, j + 1] - np.append(real, pseudo)

    def cdf_at(self, b: float) -> np.ndarray:
        return np.exp(self.log_cdf_at(b))

    def log_derivative_at(self, b: float) -> np.ndarray:
        """``d ln B_σ / db`` for every row inside a piece."""
        inst = self.inst
        j = int(np.clip(np.searchsorted(inst.partition, b, side="right") - 1, 0, inst.m))
        col = inst.table[:, j]
        a, c = col[-1], col[:-1]
        real = 1.0 / (a - b) - 1.0 / (c - b)
        pseudo = np.sum(1.0 / (c - b)) - inst.n / (a - b)
        return np.append(real, pseudo)


def reconstruct_bids(inst: PiecewiseInstance, check: bool = True) -> ReconstructedBids:
    if check:
        check_valid(inst)
    part = inst.partition
    lo, hi = part[:-1], part[1:]
    a = inst.l_row
    c = inst.real_rows
    real, pseudo = piece_log_increments(lo, hi, a, c, inst.n)
    inc = np.vstack([real, pseudo[None, :]])
    bad = inc < -NEG_TOL * np.maximum(1.0, np.abs(inc))
    if np.any(bad):
        cols = sorted({int(j) for j in np.nonzero(bad)[1]})
        raise ValidationError(f"reconstruction produced a decreasing CDF in columns {cols}")
    inc = np.maximum(inc, 0.0)
    # ln B(λ_j) = −Σ_{k ≥ j} increments, with ln B(λ) = 0
    tail = np.cumsum(inc[:, ::-1], axis=1)[:, ::-1]
    log_cdf = np.hstack([-tail, np.zeros((inst.n + 2, 1))])
    return ReconstructedBids(inst, inc, log_cdf)


# ---------------------------------------------------------------------
# auction welfare

def piece_fpa(lo, hi, a, c, first_order_hi):
    """Auction welfare contributed by bids in ``[lo, hi)`` of one piece.

    ``first_order_hi`` is ``𝓑(hi)``. Inputs broadcast, with the real rows on
    axis 0 of ``c``.
    """
    k = first_order_hi * (a - hi)
    first_order_lo = k / (a - lo)
    x = (hi - lo) * (c - a) / ((a - hi) * (c - lo))
    terms = x * (c - a) / (a - lo) + (x - np.log1p(x))
    return a * (first_order_hi - first_order_lo) + k * terms.sum(axis=0)


def fpa(inst: PiecewiseInstance, bids: ReconstructedBids | None = None) -> float:
    """Expected auction welfare, closed form."""
    bids = reconstruct_bids(inst) if bids is None else bids
    part = inst.partition
    lof = bids.log_first_order
    if np.any(inst.table <= part[None, 1:]):
        raise InvariantError("mapping pole inside a piece")
    pieces = piece_fpa(part[:-1], part[1:], inst.l_row, inst.real_rows, np.exp(lof[1:]))
    boundary = float(np.dot(inst.atom_values, inst.atom_probs)) * math.exp(lof[0])
    return float(math.fsum(pieces) + boundary)


# ---------------------------------------------------------------------
# optimal welfare

def opt_from_entries(gamma: float, values: np.ndarray, log_keep: np.ndarray,
                     atom_values: np.ndarray, atom_probs: np.ndarray) -> float:
    """``γ + ∫_γ^∞ (1 − P(v)·Π(1 − ω·1(v < φ))) dv`` by breakpoint sum.

    ``log_keep`` holds ``ln(1 − ω)`` for each table entry in ``values``.
    """
    values = np.ravel(values)
    log_keep = np.ravel(log_keep)
    order = np.argsort(values, kind="stable")
    vs = values[order]
    suffix = np.append(np.cumsum(log_keep[order][::-1])[::-1], 0.0)
    breaks = np.unique(np.concatenate([values, atom_values, [gamma]]))
    breaks = breaks[breaks >= gamma]
    starts = breaks[:-1]
    widths = np.diff(breaks)
    # entries strictly above v contribute on [v, next breakpoint)
    idx = np.searchsorted(vs, starts, side="right")
    a_order = np.argsort(atom_values, kind="stable")
    cum_p = np.append(0.0, np.cumsum(atom_probs[a_order]))
    p_at = cum_p[np.searchsorted(atom_values[a_order], starts, side="right")]
    integrand = 1.0 - p_at * np.exp(suffix[idx])
    return float(gamma + math.fsum(widths * integrand))


def opt(inst: PiecewiseInstance, bids: ReconstructedBids | None = None) -> float:
    """Expected optimal welfare, exact breakpoint sum."""
    bids = reconstruct_bids(inst) if bids is None else bids
    return opt_from_entries(inst.gamma, inst.table, -bids.increments,
                            inst.atom_values, inst.atom_probs)


def opt_ceiling_shortcut(inst: PiecewiseInstance, bids: ReconstructedBids | None = None) -> float:
    """Ceiling-instance form that only uses the ultra-ceiling entries."""
    bids = reconstruct_bids(inst) if bids is None else bids
    ceiling = inst.phi_h0
    mask = inst.table > ceiling
    return opt_from_entries(0.0, inst.table[mask], -bids.increments[mask],
                            np.array([ceiling]), np.array([1.0]))


def poa(inst: PiecewiseInstance, check: bool = True) -> WelfareReport:
    bids = reconstruct_bids(inst, check=check)
    f = fpa(inst, bids)
    o = opt(inst, bids)
    if not o > 0:
        raise DomainError("optimal welfare is zero; the ratio is undefined")
    scale = max(abs(o), abs(f), 1.0)
    err = 64 * np.finfo(float).eps * inst.table.size * scale
    return WelfareReport(f, o, f / o, Method.CLOSED_FORM, float(err))


# ---------------------------------------------------------------------
# independent quadrature cross-check

def quadrature_oracle_fpa(inst: PiecewiseInstance, rel_tol: float = 1e-9,
                          return_error: bool = False):
    """Adaptive Gauss-Kronrod integration of the auction-welfare integrand.

    Uses the within-piece CDF evaluator and the pointwise log-derivatives,
    never the closed-form antiderivative.
    """
    bids = reconstruct_bids(inst)
    phi_cols = inst.table

    def integrand(b, j):
        col = phi_cols[:, j]
        a, c = col[-1], col[:-1]
        real = 1.0 / (a - b) - 1.0 / (c - b)
        pseudo = np.sum(1.0 / (c - b)) - inst.n / (a - b)
        dlog = np.append(real, pseudo)
        first_order = math.exp(float(bids.log_cdf_at(b).sum()))
        return float(np.dot(col, dlog)) * first_order

    total = []
    err_total = 0.0
    for j in range(inst.columns):
        lo, hi = float(inst.partition[j]), float(inst.partition[j + 1])
        val, err = integrate.quad(integrand, lo, hi, args=(j,), epsabs=1e-14,
                                  epsrel=1e-12, limit=200)
        total.append(val)
        err_total += err
    boundary = float(np.dot(inst.atom_values, inst.atom_probs)) * float(
        np.exp(bids.log_first_order[0]))
    result = math.fsum(total) + boundary
    if err_total > rel_tol * max(abs(result), 1e-300):
        raise OracleFailure(f"quadrature error estimate {err_total:g} too large")
    return (result, err_total) if return_error else result


# ---------------------------------------------------------------------
# value reconstruction

@dataclass(frozen=True)
class ValueDistribution:
    values: np.ndarray
    probs: np.ndarray

    def cdf(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        cum = np.append(0.0, np.cumsum(self.probs))
        return cum[np.searchsorted(self.values, v, side="right")]

    def mass_at(self, v: float, tol: float = 1e-12) -> float:
        return float(self.probs[np.abs(self.values - v) <= tol * max(abs(v), 1.0)].sum())


@dataclass(frozen=True)
class ReconstructedValues:
    per_bidder: tuple[ValueDistribution, ...]

    def max_value_cdf(self, v) -> np.ndarray:
        out = np.ones_like(np.asarray(v, dtype=float))
        for d in self.per_bidder:
            out = out * d.cdf(v)
        return out

    def expected_max(self) -> float:
        """``∫ (1 − Π_σ V_σ(v)) dv`` summed exactly over the joint support."""
        pts = np.unique(np.concatenate([d.values for d in self.per_bidder] + [[0.0]]))
        pts = pts[pts >= 0]
        widths = np.diff(pts)
        return float(math.fsum(widths * (1.0 - self.max_value_cdf(pts[:-1]))))


def _merge(values, probs) -> ValueDistribution:
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    keep = probs > 0
    values, probs = values[keep], probs[keep]
    uniq, inv = np.unique(values, return_inverse=True)
    merged = np.zeros(uniq.size)
    np.add.at(merged, inv, probs)
    return ValueDistribution(uniq, merged)


def reconstruct_values(inst: PiecewiseInstance,
                       bids: ReconstructedBids | None = None) -> ReconstructedValues:
    bids = reconstruct_bids(inst) if bids is None else bids
    cdf = bids.cdf_at_partition
    masses = np.diff(cdf, axis=1)
    out = []
    for r in range(inst.n + 2):
        base = cdf[r, 0]
        if r == 0:
            vals = np.concatenate([inst.atom_values, inst.table[r]])
            probs = np.concatenate([base * inst.atom_probs, masses[r]])
        else:
            vals = np.concatenate([[inst.gamma], inst.table[r]])
            probs = np.concatenate([[base], masses[r]])
        out.append(_merge(vals, probs))
    return ReconstructedValues(tuple(out))
