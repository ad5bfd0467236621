"""Small root-finding and 1-D search helpers used across modules."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def bisect_increasing(f: Callable[[np.ndarray], np.ndarray], target, lo, hi,
                      xtol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
    """Vectorized bisection for ``f(x) = target`` with ``f`` nondecreasing.

    ``lo``/``hi`` broadcast against ``target``. Targets outside
    ``[f(lo), f(hi)]`` are clamped to the nearer endpoint.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    lo_init, hi_init = lo.copy(), hi.copy()
    below = target <= f(lo)
    above = target >= f(hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        go_right = f(mid) < target
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.all(hi - lo <= xtol):
            break
    out = 0.5 * (lo + hi)
    out = np.where(below, lo_init, out)
    return np.where(above, hi_init, out)


def golden_min(f: Callable[[float], float], a: float, b: float,
               xtol: float = 1e-10, max_iter: int = 200) -> tuple[float, float]:
    """Golden-section search for a minimum of ``f`` on ``[a, b]``.

    Returns ``(x, f(x))`` with the best point seen, including both ends.
    """
    best_x, best_f = a, f(a)
    fb = f(b)
    if fb < best_f:
        best_x, best_f = b, fb
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= xtol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
    for x, fx in ((c, fc), (d, fd)):
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f


def golden_max(f: Callable[[float], float], a: float, b: float,
               xtol: float = 1e-10, max_iter: int = 200) -> tuple[float, float]:
    x, fx = golden_min(lambda t: -f(t), a, b, xtol=xtol, max_iter=max_iter)
    return x, -fx
