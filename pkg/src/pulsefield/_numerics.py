"""Small numerical kernels: adaptive Simpson quadrature and a bracketed Newton solver."""
from __future__ import annotations

import math
from typing import Callable

from .errors import QuadratureFailure, RootFindFailed

SIMPSON_ATOL = 1e-10
SIMPSON_BUDGET = 2**20


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     atol: float = SIMPSON_ATOL, budget: int = SIMPSON_BUDGET,
                     max_depth: int = 50) -> float:
    """Integrate a scalar function on [a, b] by adaptive Simpson refinement.

    Args:
        f: integrand, called with Python floats.
        a, b: interval end points.
        atol: absolute tolerance for the whole interval.
        budget: maximum number of integrand evaluations.
        max_depth: maximum bisection depth of any panel.

    Returns:
        The integral estimate (with Richardson correction per accepted panel).

    Raises:
        QuadratureFailure: if the evaluation budget is exhausted or a panel
            cannot meet its share of the tolerance at the maximum depth.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    evals = 3
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    # panel: (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, atol, 0)]
    total = 0.0
    while stack:
        lo, hi, flo, fmid, fhi, est, tol, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        evals += 2
        if evals > budget:
            raise QuadratureFailure(f"adaptive Simpson exceeded {budget} evaluations")
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - est
        if abs(delta) <= 15.0 * tol or (hi - lo) < 1e-14 * max(1.0, abs(lo)):
            total += left + right + delta / 15.0
            continue
        if depth >= max_depth:
            raise QuadratureFailure(f"no convergence on panel [{lo!r}, {hi!r}]")
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * tol, depth + 1))
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * tol, depth + 1))
    if not math.isfinite(total):
        raise QuadratureFailure("non-finite quadrature result")
    return sign * total


def expand_bracket(g: Callable[[float], float], lo: float, hi: float, max_doublings: int = 60):
    """Widen [lo, hi] geometrically until g(lo) < 0 < g(hi) for an increasing g.

    Returns (lo, hi, g_lo, g_hi).
    """
    g_lo, g_hi = g(lo), g(hi)
    width = hi - lo
    for _ in range(max_doublings):
        if g_lo <= 0.0 <= g_hi:
            return lo, hi, g_lo, g_hi
        width *= 2.0
        if g_lo > 0.0:
            hi, g_hi = lo, g_lo
            lo -= width
            g_lo = g(lo)
        else:
            lo, g_lo = hi, g_hi
            hi += width
            g_hi = g(hi)
    if g_lo <= 0.0 <= g_hi:
        return lo, hi, g_lo, g_hi
    raise RootFindFailed(f"could not bracket root after {max_doublings} doublings")


def safeguarded_newton(g_and_slope: Callable[[float], tuple[float, float]],
                       lo: float, hi: float, g_lo: float, g_hi: float,
                       guess: float, tol: float, max_iter: int = 50) -> float:
    """Root of an increasing function inside a bracket, Newton with bisection fallback.

    Iterates until |g| <= tol. A Newton step leaving the bracket, or one that does
    not at least halve |g|, is replaced by bisection.
    """
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    x = guess if lo < guess < hi else 0.5 * (lo + hi)
    prev_abs = math.inf
    for _ in range(max_iter):
        gx, slope = g_and_slope(x)
        if not math.isfinite(gx):
            raise RootFindFailed(f"non-finite residual at {x!r}")
        if abs(gx) <= tol:
            return x
        if gx < 0.0:
            lo = x
        else:
            hi = x
        step_ok = slope > 0.0 and math.isfinite(slope)
        if step_ok:
            cand = x - gx / slope
            step_ok = lo < cand < hi and abs(gx) <= 0.5 * prev_abs
        x_new = cand if step_ok else 0.5 * (lo + hi)
        prev_abs = abs(gx)
        if x_new == x or hi - lo <= 4.0 * math.ulp(max(abs(lo), abs(hi), 1.0)):
            gx, _ = g_and_slope(x_new)
            if abs(gx) <= tol:
                return x_new
            raise RootFindFailed(f"bracket collapsed at {x_new!r} with residual {gx:.3e}")
        x = x_new
    raise RootFindFailed(f"no convergence in {max_iter} iterations")
