"""Quantile (pseudo-inverse) profiles and the distances between them.

A profile stores the quantile function ``q`` on the uniform mass grid
``eta_j = j / M`` together with its derivative ``z`` (the reciprocal density at
``q``). Distances are composite trapezoid integrals over that grid.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import GridMismatch, HypothesisViolated, NonPositiveDensity, NotNormalized

NORMALIZATION_TOL = 1e-8
RENORMALIZE_TOL = 1e-4
ATOM_WEIGHT_TOL = 1e-12


def trapezoid_mean(values: np.ndarray) -> float:
    """Composite trapezoid integral over [0, 1] of node values on a uniform grid."""
    v = np.asarray(values, dtype=float)
    m = v.size - 1
    return float((v.sum() - 0.5 * (v[0] + v[-1])) / m)


@dataclass(frozen=True)
class QuantileProfile:
    """Quantile function values ``q`` and derivatives ``z`` on ``M + 1`` nodes.

    ``generalized`` marks profiles from measures with atoms or gaps; those carry
    no derivative (``z`` is NaN) and are rejected by the PDE solver.
    """

    q: np.ndarray
    z: np.ndarray
    phi_f: float = 1.0
    generalized: bool = False

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        z = np.array(self.z, dtype=float)
        if q.ndim != 1 or q.shape != z.shape or q.size < 2:
            raise ValueError("q and z must be 1-D arrays of equal length >= 2")
        q.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "phi_f", float(self.phi_f))

    @property
    def grid_size(self) -> int:
        return self.q.size - 1


    @property
    def eta(self) -> np.ndarray:
        return np.arange(self.q.size) / self.grid_size

    def is_monotone(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.q) >= -tol))

    def boundary_residual(self) -> float:
        return max(abs(self.q[0]), abs(self.q[-1] - self.phi_f))

    def density(self):
        """Reconstructed density as (phi, rho) pairs at the nodes: rho(Q_j) = 1/Z_j."""
        with np.errstate(divide="ignore"):
            return self.q.copy(), 1.0 / self.z

    def with_values(self, q=None, z=None) -> "QuantileProfile":
        return QuantileProfile(self.q if q is None else q, self.z if z is None else z,
                               self.phi_f, self.generalized)

    # -- CSV ----------------------------------------------------------------
    def to_csv(self, path, extra: dict | None = None):
        cols = {"eta": self.eta, "Q": self.q, "Z": self.z}
        cols.update(extra or {})
        write_columns(path, cols)

    @classmethod
    def from_csv(cls, path, phi_f: float = 1.0) -> "QuantileProfile":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: empty profile")
        q = [float(r["Q"]) for r in rows]
        z = [float(r["Z"]) for r in rows]
        return cls(np.array(q), np.array(z), phi_f)


def format_float(x) -> str:
    return format(float(x), ".17g")


def write_columns(path, columns: dict):
    """Write equally long columns to CSV with round-trip exact floats."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow([v if isinstance(v, (str, np.str_)) else
                        (str(int(v)) if np.issubdtype(type(v), np.integer) else format_float(v))
                        for v in row])


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely many atoms with non-negative weights summing to one."""

    support: np.ndarray
    weights: np.ndarray
    phi_f: float = 1.0
    _cumulative: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.support, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape != w.shape or pts.size == 0:
            raise ValueError("support and weights must be non-empty and of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > ATOM_WEIGHT_TOL:
            raise NotNormalized(f"weights must be non-negative and sum to 1 (sum={w.sum()!r})")
        if np.any(pts < 0) or np.any(pts > self.phi_f):
            raise ValueError("support points must lie in [0, phi_f]")
        order = np.argsort(pts, kind="stable")
        pts, w = pts[order], w[order]
        cum = np.cumsum(w)
        cum[-1] = 1.0
        object.__setattr__(self, "support", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_cumulative", cum)

    @classmethod
    def empirical(cls, samples, phi_f: float = 1.0) -> "DiscreteDistribution":
        pts = np.sort(np.asarray(samples, dtype=float))
        n = pts.size
        return cls(pts, np.full(n, 1.0 / n), phi_f)

    def cdf(self, phi):
        idx = np.searchsorted(self.support, np.asarray(phi, dtype=float), side="right")
        return np.where(idx > 0, self._cumulative[np.maximum(idx - 1, 0)], 0.0)

    def quantile(self, eta):
        """inf{phi : F(phi) >= eta}; at eta = 0 the lower end of the support."""
        eta = np.asarray(eta, dtype=float)
        idx = np.searchsorted(self._cumulative, eta - ATOM_WEIGHT_TOL, side="left")
        return self.support[np.clip(idx, 0, self.support.size - 1)]


# -- transforms -----------------------------------------------------------

def quantile_from_density(phi, rho, n_cells: int, phi_f: float | None = None, *,
                          pde_grade: bool = True) -> QuantileProfile:
    """Quantile profile of a sampled density.

    Parameters
    ----------
    phi, rho : array_like
        Sample locations covering ``[0, phi_f]`` and density values there.
    M : int
        Number of cells of the output mass grid.
    pde_grade : bool
        Require a strictly positive density (finite ``Z`` everywhere).

    Returns
    -------
    QuantileProfile
        ``Q`` by monotone inversion of the trapezoid CDF, ``Z_j = 1 / rho(Q_j)``.
    """
    phi = np.asarray(phi, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if phi.shape != rho.shape or phi.size < 2 or np.any(np.diff(phi) <= 0):
        raise ValueError("phi must be strictly increasing and match rho in shape")
    phi_f = float(phi[-1] if phi_f is None else phi_f)
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise NonPositiveDensity("density must be finite and non-negative")
    if pde_grade and np.any(rho <= 0):
        raise NonPositiveDensity("density vanishes somewhere; a PDE profile needs rho > 0")
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(phi))])
    mass = cdf[-1]
    if abs(mass - 1.0) > RENORMALIZE_TOL:
        raise NotNormalized(f"density integrates to {mass!r}")
    if abs(mass - 1.0) > NORMALIZATION_TOL:
        rho = rho / mass
    cdf = cdf / mass
    eta = np.arange(n_cells + 1) / n_cells
    # inverse of a piecewise-linear CDF; plateaus (rho = 0 stretches) are skipped by
    # taking the left-most point where F reaches eta
    idx = np.clip(np.searchsorted(cdf, eta, side="left"), 1, cdf.size - 1)
    f0, f1 = cdf[idx - 1], cdf[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(f1 > f0, (eta - f0) / (f1 - f0), 0.0)
    q = phi[idx - 1] + np.clip(frac, 0.0, 1.0) * (phi[idx] - phi[idx - 1])
    q[0], q[-1] = phi[0], phi_f
    dens = np.interp(q, phi, rho)
    with np.errstate(divide="ignore"):
        z = np.where(dens > 0, 1.0 / np.where(dens > 0, dens, 1.0), np.inf)
    return QuantileProfile(q, z, phi_f)


def pseudo_inverse(dist: DiscreteDistribution, n_cells: int) -> QuantileProfile:
    """Generalized quantile of an atomic measure on the mass grid (flat parts at atoms)."""
    eta = np.arange(n_cells + 1) / n_cells
    q = dist.quantile(eta)
    return QuantileProfile(q, np.full(q.size, np.nan), dist.phi_f, generalized=True)


def quantile_from_cdf(cdf: Callable, n_cells: int, phi_f: float = 1.0, tol: float = 1e-13) -> QuantileProfile:
    """Generalized quantile of any right-continuous CDF on [0, phi_f] by bisection."""
    eta = np.arange(n_cells + 1) / n_cells
    lo = np.zeros(n_cells + 1)
    hi = np.full(n_cells + 1, phi_f)
    target = eta.copy()
    target[0] = np.nextafter(0.0, 1.0)  # lower end of the support
    while np.max(hi - lo) > tol * phi_f:
        mid = 0.5 * (lo + hi)
        ok = np.asarray(cdf(mid), dtype=float) >= target
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return QuantileProfile(hi, np.full(n_cells + 1, np.nan), phi_f, generalized=True)


# -- distances ------------------------------------------------------------

def _same_grid(p1: QuantileProfile, p2: QuantileProfile):
    if p1.q.size != p2.q.size:
        raise GridMismatch(f"grid sizes differ: {p1.grid_size} vs {p2.grid_size}")


def wasserstein(p1: QuantileProfile, p2: QuantileProfile, p=1) -> float:
    """L^p distance between quantile functions (1-D Wasserstein distance)."""
    _same_grid(p1, p2)
    diff = np.abs(p1.q - p2.q)
    if p in (math.inf, "inf", np.inf):
        return float(diff.max())
    if p not in (1, 2):
        raise ValueError(f"p must be 1, 2 or inf, got {p!r}")
    return trapezoid_mean(diff**p) ** (1.0 / p)


def bv_distance(p1: QuantileProfile, p2: QuantileProfile) -> float:
    """L¹ distance between the derivatives Z."""
    _same_grid(p1, p2)
    return trapezoid_mean(np.abs(p1.z - p2.z))


def p0_project(profile) -> np.ndarray:
    """Subtract the trapezoid mean; accepts a profile or raw node values."""
    q = profile.q if isinstance(profile, QuantileProfile) else np.asarray(profile, dtype=float)
    # centring on the first value first makes constants map to exact zeros
    d = q - q[0]
    return d - trapezoid_mean(d)


def modified_l2_distance(p1: QuantileProfile, p2: QuantileProfile) -> float:
    """L² distance of the mean-free parts (translation invariant)."""
    _same_grid(p1, p2)
    d = p0_project(p1.q - p2.q)
    return math.sqrt(trapezoid_mean(d * d))


def ik_functional(p1: QuantileProfile, p2: QuantileProfile, response, tol: float = 1e-8):
    """Return ``(I, I_K)``: the L¹ gap of Z and its K-weighted signed counterpart.

    ``I_K`` integrates ``(K'(Q1) Z1 - K'(Q2) Z2) * sign(Z1 - Z2)`` with sign(0) = 0.
    Both profiles must be non-decreasing and share their end values.
    """
    _same_grid(p1, p2)
    scale = max(abs(p1.phi_f), 1.0)
    if abs(p1.q[0] - p2.q[0]) > tol * scale or abs(p1.q[-1] - p2.q[-1]) > tol * scale:
        raise HypothesisViolated("profiles must share their end values")
    if not (p1.is_monotone() and p2.is_monotone()):
        raise HypothesisViolated("profiles must be non-decreasing")
    dz = p1.z - p2.z
    gap = trapezoid_mean(np.abs(dz))
    slope_gap = response.eval(p1.q, 1) * p1.z - response.eval(p2.q, 1) * p2.z
    return gap, trapezoid_mean(slope_gap * np.sign(dz))
