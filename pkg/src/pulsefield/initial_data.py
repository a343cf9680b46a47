"""Initial profiles that satisfy the boundary and derivative-compatibility conditions."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.special import beta as beta_fn, betainc

from . import steady_state
from .errors import ConfigError
from .meanfield import validate_initial
from .quantile import QuantileProfile


def steady(response, n_cells: int) -> QuantileProfile:
    return steady_state.solve(response, n_cells).profile


def perturbed_steady(response, n_cells: int, epsilon: float, mode_number: int = 1) -> QuantileProfile:
    """Steady profile plus ``epsilon * sin(pi m eta) * eta * (1 - eta)``.

    The bump vanishes with its first derivative at both ends, so the end values
    and the end derivatives (hence the firing rate and compatibility) are those
    of the steady state.
    """
    base = steady(response, n_cells)
    eta = base.eta
    arg = np.pi * mode_number * eta
    bump = np.sin(arg) * eta * (1.0 - eta)
    dbump = np.pi * mode_number * np.cos(arg) * eta * (1.0 - eta) + np.sin(arg) * (1.0 - 2.0 * eta)
    scale = response.phi_f
    q = base.q + epsilon * scale * bump
    z = base.z + epsilon * scale * dbump
    q[0], q[-1] = 0.0, response.phi_f
    z[0], z[-1] = base.z[0], base.z[-1]
    if np.any(z <= 0):
        raise ConfigError(f"initial.epsilon: {epsilon} makes the perturbed profile non-monotone")
    return _checked(QuantileProfile(q, z, response.phi_f), response)


def beta_like(response, n_cells: int, a: float = 2.0, b: float = 2.0, n_init: float = 0.5) -> QuantileProfile:
    """Derivative profile ``Z = lam + mu * eta + c * eta^(a-1) (1-eta)^(b-1)``.

    ``lam = K(0) + n_init`` and ``mu = K(phi_f) - K(0)`` fix both end derivatives
    (the bump vanishes there for a, b > 1); ``c`` restores total mass phi_f.
    """
    if a <= 1 or b <= 1:
        raise ConfigError("initial.a, initial.b: both exponents must exceed 1")
    if n_init <= 0:
        raise ConfigError("initial.n_init: must be positive")
    phi_f = response.phi_f
    k0, kf = response.eval(0.0), response.eval(phi_f)
    lam, mu = k0 + n_init, kf - k0
    c = (phi_f - lam - 0.5 * mu) / beta_fn(a, b)
    eta = np.arange(n_cells + 1) / n_cells
    z = lam + mu * eta + c * eta ** (a - 1) * (1 - eta) ** (b - 1)
    q = lam * eta + 0.5 * mu * eta**2 + c * beta_fn(a, b) * betainc(a, b, eta)
    q[0], q[-1] = 0.0, phi_f
    # the bump's maximum is at (a-1)/(a+b-2); check on a fine grid too
    fine = np.linspace(0, 1, 20001)
    if np.any(lam + mu * fine + c * fine ** (a - 1) * (1 - fine) ** (b - 1) <= 0):
        raise ConfigError(f"initial: beta_like(a={a}, b={b}, n_init={n_init}) has a non-positive derivative")
    return _checked(QuantileProfile(q, z, phi_f), response)


def explicit_table(response, n_cells: int, eta, q, z) -> QuantileProfile:
    """Hermite interpolation of tabulated (eta, Q, Z) onto the grid."""
    eta, q, z = (np.asarray(v, dtype=float) for v in (eta, q, z))
    if not (eta.shape == q.shape == z.shape) or eta.size < 2:
        raise ConfigError("initial.table: eta, Q, Z must be equally long lists")
    spline = CubicHermiteSpline(eta, q, z)
    grid = np.arange(n_cells + 1) / n_cells
    qq, zz = spline(grid), spline(grid, 1)
    qq[0], qq[-1] = 0.0, response.phi_f
    zz[0], zz[-1] = z[0], z[-1]
    return _checked(QuantileProfile(qq, zz, response.phi_f), response)


def _checked(profile, response):
    validate_initial(profile, response)
    return profile


PRESETS = {
    "steady_state": steady,
    "perturbed_steady": perturbed_steady,
    "beta_like": beta_like,
    "explicit_table": explicit_table,
}


def build(spec: dict, response, n_cells: int) -> QuantileProfile:
    """Resolve an ``initial`` config block to a profile on the M-cell grid."""
    spec = dict(spec)
    preset = spec.pop("preset", None)
    if preset not in PRESETS:
        raise ConfigError(f"initial.preset: expected one of {sorted(PRESETS)}, got {preset!r}")
    if preset == "explicit_table":
        try:
            return explicit_table(response, n_cells, spec["eta"], spec["Q"], spec["Z"])
        except KeyError as exc:
            raise ConfigError(f"initial.{exc.args[0]}: required for explicit_table") from exc
    try:
        return PRESETS[preset](response, n_cells, **spec)
    except TypeError as exc:
        raise ConfigError(f"initial: bad parameters for {preset!r}: {exc}") from exc
