"""Scenario battery behind ``pulsefield verify``.

Each check returns a list of :class:`~pulsefield.diagnostics.TheoremReport`.
The default suite uses moderate grids so that it finishes in about a minute.
"""
from __future__ import annotations

import math

import numpy as np

from . import diagnostics as dg
from . import meanfield as mf
from . import particles as pt
from . import steady_state as ss
from .diagnostics import TheoremReport
from .phase_response import PhaseResponse
from .quantile import wasserstein
from .scenarios import builtin


def check_steady_constant(n_cells=200):
    response = PhaseResponse.constant(0.5)
    st = ss.solve(response, n_cells)
    err = float(np.max(np.abs(st.profile.q - st.profile.eta)))
    return [TheoremReport("steady_state_constant", "constant_steady",
                          {"N_star": st.n_star, "profile_sup_error": err}, {"N_star": 2.0},
                          abs(st.n_star - 2.0) <= 1e-8 and err <= 1e-8, 1e-8)]


def check_steady_affine(n_cells=200):
    k, b = -0.5, 1.0
    response = PhaseResponse.affine(k, b)
    st = ss.solve(response, n_cells)
    oracle = 1.0 / (k / math.expm1(k) - b)
    return [TheoremReport("steady_state_affine", "affine_decreasing", {"N_star": st.n_star},
                          {"N_star": oracle}, abs(st.n_star - oracle) <= 1e-8, 1e-8)]


def _pair(a, b, **over):
    s1, s2 = builtin(a, **over), builtin(b, **over)
    return s1, s1.run(), s2.run()


def check_l2_rate(n_cells=400):
    s, r1, r2 = _pair("affine_decreasing", "affine_decreasing_b", solver__M=n_cells)
    return [dg.l2_rate_check(r1, r2, s.response, scenario=s.name), dg.bounded_bv_check(r1, r2, s.name),
            dg.structural_check(r1, s.response, s.name), dg.structural_check(r2, s.response, s.name)]


def check_bv_band(n_cells=200):
    s, r1, r2 = _pair("concave_decreasing", "concave_decreasing_b", solver__M=n_cells)
    band = dg.contraction_band(r1, r2, s.response, scenario=s.name)
    return [band.report, dg.bounded_bv_check(r1, r2, s.name),
            dg.structural_check(r1, s.response, s.name), dg.structural_check(r2, s.response, s.name)]


def check_n_bounds(n_cells=200):
    s = builtin("smooth_decreasing", solver__M=n_cells)
    rec = s.run()
    return [dg.n_tilde_bounds_check(rec, s.response, s.initial_profile(), s.name),
            dg.structural_check(rec, s.response, s.name)]


def check_blowup_constant(n_cells=200):
    s = builtin("constant_blowup", solver__M=n_cells)
    rec = s.run()
    reports = dg.blowup_bounds(s.response, s.initial_profile(), rec, scenario=s.name)
    reports.append(TheoremReport("blowup_detected", s.name, {"outcome": rec.outcome.kind}, {},
                                 rec.outcome.kind == mf.BLOWN_UP, 0.0))
    reports.append(dg.structural_check(rec, s.response, s.name))
    return reports


def check_blowup_convex(n_cells=200):
    s = builtin("convex_increasing", solver__M=n_cells)
    rec = s.run()
    steady = ss.solve(s.response, n_cells)
    reports = dg.blowup_bounds(s.response, s.initial_profile(), rec, steady=steady, scenario=s.name)
    snaps = rec.all_snapshots()
    tau = np.array([x.tau for x in snaps])
    dist = np.array([dg.bv_distance(rec.profile(x), steady.profile) for x in snaps])
    rate = dg.fit_rate(tau, dist)
    k_min = s.response.constants().k_min
    reports.append(TheoremReport("bv_expansion_rate", s.name, {"fitted_rate": rate}, {"k_min": k_min},
                                 rate >= k_min - dg.RATE_TOL, dg.RATE_TOL))
    reports.append(dg.structural_check(rec, s.response, s.name))
    return reports


def check_relaxed(n_cells=200):
    s = builtin("fig3_relaxed", solver__M=n_cells)
    rec = s.run()
    nt, tau, minz = rec.n_tilde, rec.tau, rec.column("minZ")
    tau_star = rec.outcome.tau_star
    cross = int(np.argmax(nt <= 0)) if (nt <= 0).any() else None
    continuous = False
    if cross is not None and cross >= 11:
        jumps = np.abs(np.diff(nt))
        continuous = bool(jumps[cross - 1] <= 5.0 * jumps[cross - 11:cross - 1].max())
    negative_after = bool(tau_star is not None and np.any(minz[tau > tau_star] < 0))
    return [TheoremReport("relaxed_continuation", s.name,
                          {"tau_star": tau_star, "continuous_crossing": continuous,
                           "min_Z_after": float(minz[tau > (tau_star or 0)].min())},
                          {}, continuous and negative_after, 5.0)]


def check_integral_equation(n_cells=100):
    s = builtin("smooth_decreasing", solver__M=n_cells, tau_end=3.0)
    rec = s.run()
    chk = mf.integral_equation_residual(rec, s.response)
    return [TheoremReport("integral_equation", s.name,
                          {"max_residual": chk.max_residual, "kernel_min": chk.kernel_min,
                           "identity_residual": chk.identity_residual},
                          {"max_residual": 1e-3, "kernel_min": 0.0},
                          chk.kernel_min >= 0.0 and chk.max_residual <= 1e-3, 1e-3)]


def check_particles(count=1000):
    response = PhaseResponse.constant(0.5)
    st = ss.solve(response, 1000)
    ens = pt.run_particles(pt.init_from_density(st.profile, count, stratified=True), response, t_end=5.0)
    rate = ens.firing_rate()
    w1 = wasserstein(pt.empirical_quantile(ens, 1000), st.profile, 1)
    return [TheoremReport("particle_firing_rate", "constant_steady", {"rate": rate, "W1": w1},
                          {"N_star": st.n_star}, abs(rate / st.n_star - 1.0) <= 0.05, 0.05)]


DEFAULT_SUITE = (
    check_steady_constant, check_steady_affine, check_l2_rate, check_bv_band, check_n_bounds,
    check_blowup_constant, check_blowup_convex, check_relaxed, check_integral_equation, check_particles,
)


def run_suite(name: str = "default"):
    if name != "default":
        raise ValueError(f"unknown suite {name!r}")
    reports = []
    for check in DEFAULT_SUITE:
        reports.extend(check())
    return reports
