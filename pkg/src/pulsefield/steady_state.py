"""Steady states: existence test and computation by shooting on the firing rate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BracketFailure, IntegrationFailure, NoSteadyState
from .meanfield import validate_initial
from .quantile import QuantileProfile

BOUNDARY_TOL = 1e-10
ETA_TOL = 1e-12
_RTOL, _ATOL = 1e-13, 1e-15


@dataclass(frozen=True)
class Existence:
    exists: bool
    harmonic_integral: float
    boundary: bool = False

    def __bool__(self):
        return self.exists


@dataclass(frozen=True)
class SteadyState:
    n_star: float
    profile: QuantileProfile

    @property
    def n_tilde(self) -> float:
        return 1.0 / self.n_star


def exists(response) -> Existence:
    """A steady state exists iff the integral of 1/K over [0, phi_f] exceeds one.

    Values within ``BOUNDARY_TOL`` of one are reported as the (non-existent)
    boundary case.
    """
    h = response.constants().harmonic_integral
    if abs(h - 1.0) <= BOUNDARY_TOL:
        return Existence(False, h, boundary=True)
    return Existence(h > 1.0, h)


def _rhs(response, inv_rate):
    return lambda eta, q: [response.eval(q[0]) + inv_rate]


def first_hitting_eta(response, rate: float) -> float:
    """Mass coordinate at which dq/deta = K(q) + 1/rate, q(0) = 0, first reaches phi_f."""
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate!r}")
    inv_rate = 0.0 if math.isinf(rate) else 1.0 / rate
    cap = 10.0 * max(1.0, response.constants().harmonic_integral)
    phi_f = response.phi_f

    def hit(eta, q):
        return q[0] - phi_f
    hit.terminal = True
    hit.direction = 1.0

    sol = solve_ivp(_rhs(response, inv_rate), (0.0, cap), [0.0], method="DOP853",
                    rtol=_RTOL, atol=_ATOL, events=hit)
    if sol.status == -1:
        raise IntegrationFailure(sol.message)
    if not sol.t_events[0].size:
        raise IntegrationFailure(f"q stayed below phi_f up to eta = {cap}")
    # event location comes from the dense interpolant; polish it with one exact
    # re-integration to the located point and a Newton correction
    eta_hit = float(sol.t_events[0][0])
    again = solve_ivp(_rhs(response, inv_rate), (0.0, eta_hit), [0.0], method="DOP853", rtol=_RTOL, atol=_ATOL)
    if not again.success:
        raise IntegrationFailure(again.message)
    q_hit = float(again.y[0, -1])
    return eta_hit + (phi_f - q_hit) / (response.eval(q_hit) + inv_rate)


def solve(response, n_cells: int = 200) -> SteadyState:
    """Firing rate N* and quantile profile Q* of the steady state.

    The hitting coordinate increases with N (from 0 as N -> 0 to the harmonic
    integral as N -> inf), so N* is found by bisection on a bracket around
    the value where it equals one.

    Raises:
        NoSteadyState: if the harmonic integral is at most one.
        BracketFailure: if no bracket is found.
    """
    ex = exists(response)
    if not ex:
        raise NoSteadyState(f"integral of 1/K is {ex.harmonic_integral:.12g} <= 1")
    eta = lambda n: first_hitting_eta(response, n)

    lo, hi = 1e-6, 10.0 / response.phi_f
    for _ in range(200):
        if eta(lo) < 1.0:
            break
        lo *= 0.5
    else:
        raise BracketFailure("no lower bracket for the steady firing rate")
    for _ in range(200):
        if eta(hi) > 1.0:
            break
        lo, hi = max(lo, hi), 2.0 * hi
    else:
        raise BracketFailure("no upper bracket for the steady firing rate")

    n_star = 0.5 * (lo + hi)
    for _ in range(400):
        n_star = 0.5 * (lo + hi)
        val = eta(n_star) - 1.0
        if abs(val) < ETA_TOL or hi - lo <= 4.0 * math.ulp(hi):
            break
        if val < 0.0:
            lo = n_star
        else:
            hi = n_star
    return SteadyState(n_star, steady_profile(response, n_star, n_cells))


def steady_profile(response, n_star: float, n_cells: int) -> QuantileProfile:
    grid = np.arange(n_cells + 1) / n_cells
    sol = solve_ivp(_rhs(response, 1.0 / n_star), (0.0, 1.0), [0.0], method="DOP853",
                    t_eval=grid, rtol=_RTOL, atol=_ATOL)
    if not sol.success:
        raise IntegrationFailure(sol.message)
    q = sol.y[0].copy()
    q[0], q[-1] = 0.0, response.phi_f
    z = response.eval(q) + 1.0 / n_star
    prof = QuantileProfile(q, z, response.phi_f)
    validate_initial(prof, response)
    return prof
