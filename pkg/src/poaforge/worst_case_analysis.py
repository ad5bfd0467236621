"""The one-parameter worst-case family and its optimization.

For a supremum bid ``λ`` and shape parameter ``μ > 0`` the monopolist CDF
``H`` is defined implicitly by

    x = 1 − (1 − λ)·H·exp(k·(2 − 2√H)),   k = 1 + 1/μ,

on ``H ∈ [k^{-2}, 1]``; the pseudo bidder has ``L(b) = (1 − λ)/(1 − b)``
and the monopolist value is identically 1. The PoA of this twin ceiling
has a closed form in the pointmass ``h = H(0)``; the closed form is checked
against direct quadrature of the defining integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy import optimize as sciopt

from ._numerics import bisect_increasing, golden_max
from .errors import DomainError, OracleFailure
from .instance_model import AnalyticInstance

E2 = math.exp(-2.0)
LAMBDA_STAR = 1.0 - 4.0 * E2
MU_STAR = 1.0
POA_STAR = 1.0 - E2
ROOT_TOL = 1e-13
GRID_MARGIN = 1e-4


@dataclass(frozen=True)
class WorstCaseParams:
    lam: float
    mu: float
    h_mu: float
    objective: float
    beta: float | None = None
    gamma: float | None = None

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu, "h_mu": self.h_mu,
                "objective": self.objective, "beta": self.beta, "gamma": self.gamma}


def _k(mu: float) -> float:
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu}")
    return 1.0 + 1.0 / mu


def lambda_max(mu: float) -> float:
    """Largest feasible supremum bid for a given ``μ``."""
    k = _k(mu)
    return 1.0 - k * k * math.exp(-2.0 / mu)


def _check_feasible(lam: float, mu: float) -> None:
    if not 0.0 < lam < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lam}")
    if lam > lambda_max(mu) + 1e-15:
        raise DomainError(f"(lambda={lam}, mu={mu}) violates lambda <= {lambda_max(mu)}")


def pointmass_map(h, mu: float):
    """``G(h) = 1 − exp(−(2 − 2√h)·k)/h``, decreasing from ``λ_max`` to 0 on ``[k^{-2}, 1]``."""
    k = _k(mu)
    h = np.asarray(h, dtype=float)
    return 1.0 - np.exp(-(2.0 - 2.0 * np.sqrt(h)) * k) / h


def h_mu(lam: float, mu: float) -> float:
    """Monopolist pointmass at bid 0: the root of ``G(h) = λ``."""
    _check_feasible(lam, mu)
    k = _k(mu)
    lo = 1.0 / (k * k)
    # G is flat at its left end, so a λ within rounding of G(lo) pins h = lo
    if pointmass_map(lo, mu) <= lam + 8 * np.finfo(float).eps:
        return lo
    return float(bisect_increasing(lambda h: -pointmass_map(h, mu), -lam, lo, 1.0,
                                   xtol=ROOT_TOL))


def _bid_of(H, lam: float, mu: float):
    """Implicit equation solved for the bid: increasing in ``H`` on its range."""
    k = _k(mu)
    H = np.asarray(H, dtype=float)
    return 1.0 - (1.0 - lam) * H * np.exp(k * (2.0 - 2.0 * np.sqrt(H)))


def H_mu_at(lam: float, mu: float, x):
    """Monopolist bid CDF at bid(s) ``x ∈ [0, λ]``."""
    _check_feasible(lam, mu)
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-15) or np.any(x > lam + 1e-15):
        raise DomainError("bid outside [0, lambda]")
    k = _k(mu)
    lo = max(1.0 / (k * k), h_mu(lam, mu))
    out = bisect_increasing(lambda H: _bid_of(H, lam, mu), x, lo, 1.0, xtol=ROOT_TOL)
    out = np.where(x >= lam, 1.0, out)
    return float(out) if out.ndim == 0 else out


def dx_dH(H, lam: float, mu: float):
    k = _k(mu)
    H = np.asarray(H, dtype=float)
    s = np.sqrt(H)
    return -(1.0 - lam) * (1.0 - k * s) * np.exp(k * (2.0 - 2.0 * s))


def d2x_dH2(H, lam: float, mu: float):
    k = _k(mu)
    H = np.asarray(H, dtype=float)
    s = np.sqrt(H)
    return (1.0 - lam) * (k / s) * np.exp(k * (2.0 - 2.0 * s)) * (1.5 - k * s)


def H_derivatives(lam: float, mu: float, x):
    """``(H, H', H'')`` at bids ``x`` by the inverse-function rule."""
    H = H_mu_at(lam, mu, x)
    x1 = dx_dH(H, lam, mu)
    x2 = d2x_dH2(H, lam, mu)
    return H, 1.0 / x1, -x2 / x1 ** 3


def ode_residual(lam: float, mu: float, x, H=None, H1=None, H2=None):
    """Relative residual of the Euler-Lagrange equation at bids ``x``.

    With ``D = H + (1 − x)H'`` the equation reads
    ``(1 − x)H'^2/D^2 = 2HH'/D^2 − 2(1 − x)H^2H''/D^3``.
    """
    x = np.asarray(x, dtype=float)
    if H is None:
        H, H1, H2 = H_derivatives(lam, mu, x)
    D = H + (1.0 - x) * H1
    lhs = (1.0 - x) * H1 ** 2 / D ** 2
    rhs = 2.0 * H * H1 / D ** 2 - 2.0 * (1.0 - x) * H ** 2 * H2 / D ** 3
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    return np.abs(lhs - rhs) / scale


def ode_residual_fd(lam: float, mu: float, x, step: float = 1e-5):
    """Same residual with ``H'`` and ``H''`` from central differences."""
    x = np.asarray(x, dtype=float)
    Hm, H0, Hp = (H_mu_at(lam, mu, x + d) for d in (-step, 0.0, step))
    H1 = (Hp - Hm) / (2 * step)
    H2 = (Hp - 2 * H0 + Hm) / step ** 2
    return ode_residual(lam, mu, x, H0, H1, H2)


def poa_objective(lam: float, mu: float) -> float:
    """Closed-form PoA of the twin ceiling built from ``(λ, μ)``."""
    h = h_mu(lam, mu)
    k = _k(mu)
    return 1.0 - (1.0 - lam) * ((1.0 - h) - (2.0 - 2.0 * math.sqrt(h)) / k)


def poa_integral(lam: float, mu: float) -> float:
    """``1 − (1 − λ)∫_0^λ H·H'/(H + (1 − x)H') dx`` by adaptive quadrature."""
    _check_feasible(lam, mu)
    k = _k(mu)
    lo = max(1.0 / (k * k), h_mu(lam, mu))

    def H_at(x):
        if x >= lam:
            return 1.0
        f = lambda H: float(_bid_of(H, lam, mu)) - x
        if f(lo) >= 0.0:
            return lo
        return sciopt.brentq(f, lo, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def integrand(x):
        H = H_at(x)
        d = float(dx_dH(H, lam, mu))
        # H·H'/(H + (1 − x)H') = H / (H·dx/dH + 1 − x)
        return H / (H * d + 1.0 - x)

    val, err = integrate.quad(integrand, 0.0, lam, epsabs=1e-14, epsrel=1e-12, limit=200)
    if err > 1e-9:
        raise OracleFailure(f"quadrature error estimate {err:g}")
    return 1.0 - (1.0 - lam) * val


def g_objective(beta: float, gamma: float) -> float:
    """Reparameterized objective on the triangle ``0 < γ ≤ β < 1``."""
    if not (0.0 < gamma <= beta < 1.0):
        raise DomainError(f"need 0 < gamma <= beta < 1, got beta={beta}, gamma={gamma}")
    num = (1.0 - beta * beta) - (2.0 - 2.0 * beta) * gamma
    return num * math.exp(-(2.0 - 2.0 * beta) / gamma) / (beta * beta)


def params_from_beta_gamma(beta: float, gamma: float) -> WorstCaseParams:
    h = beta * beta
    mu = gamma / (1.0 - gamma)
    lam = float(pointmass_map(h, mu))
    return WorstCaseParams(lam, mu, h, 1.0 - g_objective(beta, gamma), beta, gamma)


def _g_grid(beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    num = (1.0 - beta ** 2) - (2.0 - 2.0 * beta) * gamma
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        val = num * np.exp(-(2.0 - 2.0 * beta) / gamma) / beta ** 2
    return np.where(gamma <= beta, val, -np.inf)


def optimize_worst_case(grid: int = 200, xtol: float = 1e-9) -> WorstCaseParams:
    """Maximize the reparameterized objective, then map back to ``(λ, μ)``."""
    axis = np.linspace(GRID_MARGIN, 1.0 - GRID_MARGIN, grid)
    B, G = np.meshgrid(axis, axis, indexing="ij")
    vals = _g_grid(B, G)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    step = axis[1] - axis[0]
    # the profile is much flatter to the right of the peak than to the left,
    # so the grid argmax can sit a few cells off; bracket generously
    b_lo = max(axis[i] - 3 * step, GRID_MARGIN)
    b_hi = min(axis[i] + 3 * step, 1.0 - GRID_MARGIN)

    def inner(beta):
        g_lo = max(GRID_MARGIN, min(axis[j], beta) - 3 * step)
        return golden_max(lambda g: g_objective(beta, g), g_lo, beta, xtol=xtol)

    beta, _ = golden_max(lambda b: inner(b)[1], b_lo, b_hi, xtol=xtol)
    gamma, _ = inner(beta)
    return params_from_beta_gamma(beta, gamma)


optimize = optimize_worst_case


def feasible_grid(n_lam: int, n_mu: int, mu_range=(0.2, 5.0)) -> list[tuple[float, float]]:
    """Feasible ``(λ, μ)`` pairs: log-spaced μ, λ spread up to the boundary."""
    mus = np.geomspace(mu_range[0], mu_range[1], n_mu)
    out = []
    for mu in mus:
        top = lambda_max(float(mu))
        for frac in np.linspace(0.02, 1.0, n_lam):
            out.append((float(frac * top), float(mu)))
    return out


# ---------------------------------------------------------------------
# twin-ceiling sources for discretization

def twin_ceiling_source(lam: float = LAMBDA_STAR, mu: float = MU_STAR) -> AnalyticInstance:
    """Twin ceiling ``(H_μ, L_λ)`` with monopolist value identically 1."""
    _check_feasible(lam, mu)
    k = _k(mu)

    def phi_h(b):
        return np.ones_like(np.asarray(b, dtype=float))

    def phi_l(b):
        b = np.asarray(b, dtype=float)
        return 1.0 - (1.0 - b) / (k * np.sqrt(H_mu_at(lam, mu, b)))

    def cdf_l(b):
        return (1.0 - lam) / (1.0 - np.asarray(b, dtype=float))

    return AnalyticInstance(0.0, lam, (phi_h, phi_l), "ceiling",
                            cdfs=(lambda b: H_mu_at(lam, mu, b), cdf_l),
                            label=f"twin-ceiling(lambda={lam:.6g}, mu={mu:.6g})")


def discretized_worst_case(m: int, lam: float = LAMBDA_STAR, mu: float = MU_STAR):
    from .reduction_pipeline import discretize

    return discretize(twin_ceiling_source(lam, mu), m)
