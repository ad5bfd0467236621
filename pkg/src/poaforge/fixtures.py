"""Built-in instances addressable as ``builtin:NAME`` from the command line."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from . import equilibrium_lab as lab
from .errors import DomainError
from .instance_model import AnalyticInstance, PiecewiseInstance
from .worst_case_analysis import discretized_worst_case

HHT_LAMBDA = 0.57
DEFAULT_M = 2000
DEFAULT_N = 100


def hht_source(lam: float = HHT_LAMBDA) -> AnalyticInstance:
    """Monopolist ``H(b) = √(b/λ)`` against pseudo ``L(b) = (1 − λ)/(1 − b)`` on ``[0, λ]``.

    The monopolist value is identically 1, so the boundary atom sits at the
    ceiling. A floor atom would put the discretization's spurious mass
    ``H(λ/(m+1))`` at value 0 and converge only like ``m^{-1/2}``.
    """
    if not 0.0 < lam < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lam}")
    return AnalyticInstance.from_log_derivatives(
        0.0, lam,
        [lambda b: 0.5 / np.asarray(b, dtype=float)],
        lambda b: 1.0 / (1.0 - np.asarray(b, dtype=float)),
        cond_value="ceiling",
        cdfs=(lambda b: np.sqrt(np.asarray(b, dtype=float) / lam),
              lambda b: (1.0 - lam) / (1.0 - np.asarray(b, dtype=float))),
        label=f"hht(lambda={lam:g})")


def hht_poa_exact(lam: float = HHT_LAMBDA) -> float:
    """Continuous PoA of the same instance: ``1 − (1 − λ)∫_0^λ √(b/λ)/(1 + b) db``."""
    val, _ = integrate.quad(lambda b: math.sqrt(b / lam) / (1.0 + b), 0.0, lam,
                            epsabs=1e-15, epsrel=1e-13)
    return 1.0 - (1.0 - lam) * val


def hht(m: int = 4000) -> PiecewiseInstance:
    from .reduction_pipeline import discretize

    return discretize(hht_source(), m)


PIECEWISE = {
    "hht": lambda m, n: hht(m if m is not None else 4000),
    "worstcase-discrete": lambda m, n: discretized_worst_case(m if m is not None else DEFAULT_M),
}

FINITE = {
    "example1": lambda m, n: lab.example1(),
    "example2": lambda m, n: lab.example2(),
    "example3": lambda m, n: lab.example3(),
    "single": lambda m, n: lab.single_bidder(),
    "worstcase": lambda m, n: lab.build_worst_case_instance(n if n is not None else DEFAULT_N),
}


def names() -> list[str]:
    return sorted(PIECEWISE) + sorted(FINITE)


def resolve(name: str, m: int | None = None, n: int | None = None):
    """Return a :class:`PiecewiseInstance` or a finite auction for ``name``."""
    key = name.removeprefix("builtin:")
    if key in PIECEWISE:
        return PIECEWISE[key](m, n)
    if key in FINITE:
        return FINITE[key](m, n)
    raise DomainError(f"unknown builtin {name!r}; choose from {', '.join(names())}")
