"""Phase response functions and the constants derived from them."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from ._numerics import adaptive_simpson
from .errors import ConfigError, InvalidPhaseResponse

FORMS = ("affine", "quadratic", "exponential", "tabulated")
POSITIVITY_SAMPLES = 10_000
EXTENSION_MARGIN = 0.5  # fraction of phi_f over which the Taylor extension flattens out


@dataclass(frozen=True)
class ResponseConstants:
    k_min: float
    k_max: float
    harmonic_integral: float
    K_min_val: float
    K_max_val: float

    def as_dict(self):
        return {
            "k_min": self.k_min,
            "k_max": self.k_max,
            "harmonic_integral": self.harmonic_integral,
            "K_min_val": self.K_min_val,
            "K_max_val": self.K_max_val,
        }


def _flatten_map(dist: np.ndarray, margin: float):
    """Map that follows ``dist`` to third order near 0 and saturates at 0.6 margin.

    ``s(a) = a - a t^3 + 0.6 a t^4`` with ``t = a / margin`` has unit slope and
    vanishing second and third derivatives at 0, and vanishing first and second
    derivatives at ``margin``. Composed with a Taylor polynomial it is C³ at the
    end point and C² where it turns constant.
    Returns the mapped distance and its first two derivatives (odd in ``dist``).
    """
    a = np.minimum(np.abs(dist), margin)
    sgn = np.sign(dist)
    t = a / margin
    s = a - a * t**3 + 0.6 * a * t**4
    ds = 1.0 - 4.0 * t**3 + 3.0 * t**4
    d2s = (-12.0 * t * t + 12.0 * t**3) / margin
    return sgn * s, ds, sgn * d2s


class PhaseResponse:
    """Phase-dependent jump size received by an oscillator when another one fires.

    Use the alternate constructors (:meth:`affine`, :meth:`quadratic`,
    :meth:`exponential`, :meth:`tabulated`, :meth:`from_config`). Instances are
    immutable; positivity on ``[0, phi_f]`` is checked at construction.

    Outside ``[0, phi_f]`` the function continues as its third-order Taylor
    polynomial at the nearest end point, flattened to a constant over a margin
    of ``0.5 * phi_f``. The extension is C² with bounded derivatives, and C³
    across the end points themselves.
    """

    def __init__(self, form: str, params: dict, phi_f: float = 1.0, *, check: bool = True):
        if form not in FORMS:
            raise ConfigError(f"K.form: unknown form {form!r}; expected one of {FORMS}")
        phi_f = float(phi_f)
        if not (phi_f > 0.0 and math.isfinite(phi_f)):
            raise ConfigError(f"phi_f: must be positive and finite, got {phi_f!r}")
        self._form = form
        self._phi_f = phi_f
        self._params = dict(params)
        self._spline = None
        if form == "tabulated":
            values = np.asarray(self._params["values"], dtype=float)
            nodes = self._params.get("phi")
            nodes = np.linspace(0.0, phi_f, values.size) if nodes is None else np.asarray(nodes, float)
            if values.size < 4 or nodes.shape != values.shape:
                raise ConfigError("K.values: tabulated form needs >= 4 samples matching K.phi")
            if abs(nodes[0]) > 1e-12 or abs(nodes[-1] - phi_f) > 1e-12 * phi_f or np.any(np.diff(nodes) <= 0):
                raise ConfigError("K.phi: nodes must increase strictly from 0 to phi_f")
            self._params = {"phi": nodes.tolist(), "values": values.tolist()}
            self._spline = CubicSpline(nodes, values, bc_type="natural")
        self._ends = tuple(
            tuple(float(self._core(np.array(x), order)) for order in range(4))
            for x in (0.0, phi_f)
        )
        if check:
            self._check_positive()

    # -- constructors -------------------------------------------------------
    @classmethod
    def affine(cls, k: float, b: float, phi_f: float = 1.0):
        return cls("affine", {"k": float(k), "b": float(b)}, phi_f)

    @classmethod
    def constant(cls, b: float, phi_f: float = 1.0):
        return cls.affine(0.0, b, phi_f)

    @classmethod
    def quadratic(cls, c0: float, c1: float, c2: float, phi_f: float = 1.0):
        return cls("quadratic", {"c0": float(c0), "c1": float(c1), "c2": float(c2)}, phi_f)

    @classmethod
    def exponential(cls, a: float, r: float, phi_f: float = 1.0):
        return cls("exponential", {"a": float(a), "r": float(r)}, phi_f)

    @classmethod
    def tabulated(cls, values, phi=None, phi_f: float = 1.0):
        return cls("tabulated", {"values": list(values), "phi": None if phi is None else list(phi)}, phi_f)

    @classmethod
    def from_config(cls, cfg: dict):
        """Build from ``{"K": {"form": ..., ...}, "phi_f": ...}``."""
        try:
            spec = dict(cfg["K"])
            form = spec.pop("form")
        except (KeyError, TypeError) as exc:
            raise ConfigError("K.form: missing phase response definition") from exc
        phi_f = cfg.get("phi_f", 1.0)
        required = {
            "affine": ("k", "b"),
            "quadratic": ("c0", "c1", "c2"),
            "exponential": ("a", "r"),
            "tabulated": ("values",),
        }.get(form)
        if required is None:
            raise ConfigError(f"K.form: unknown form {form!r}")
        for key in required:
            if key not in spec:
                raise ConfigError(f"K.{key}: required for form {form!r}")
        return cls(form, spec, phi_f)

    def to_config(self) -> dict:
        return {"K": {"form": self._form, **self._params}, "phi_f": self._phi_f}

    # -- properties ---------------------------------------------------------
    @property
    def form(self) -> str:
        return self._form

    @property
    def phi_f(self) -> float:
        return self._phi_f

    @property
    def params(self) -> dict:
        return dict(self._params)

    @property
    def is_affine(self) -> bool:
        if self._form == "affine":
            return True
        return self._form == "quadratic" and self._params["c2"] == 0.0

    @property
    def slope(self) -> float:
        """Slope of an affine response (raises for other forms)."""
        if self._form == "affine":
            return self._params["k"]
        if self.is_affine:
            return self._params["c1"]
        raise InvalidPhaseResponse(f"{self._form} response has no single slope")

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self._params.items() if k != "values")
        return f"PhaseResponse({self._form}, {args}, phi_f={self._phi_f!r})"

    # -- evaluation ---------------------------------------------------------
    def _core(self, phi, order):
        p = self._params
        if self._form == "affine":
            if order == 0:
                return p["k"] * phi + p["b"]
            return np.full_like(phi, p["k"] if order == 1 else 0.0, dtype=float)
        if self._form == "quadratic":
            if order == 0:
                return p["c0"] + phi * (p["c1"] + phi * p["c2"])
            if order == 1:
                return p["c1"] + 2.0 * p["c2"] * phi
            return np.full_like(phi, 2.0 * p["c2"] if order == 2 else 0.0, dtype=float)
        if self._form == "exponential":
            return p["a"] * p["r"] ** order * np.exp(p["r"] * phi)
        return self._spline(phi, order)

    def eval(self, phi, order: int = 0):
        """K (order 0), K' (order 1) or K'' (order 2) at ``phi``; total on the real line."""
        if order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {order!r}")
        x = np.asarray(phi, dtype=float)
        out = np.asarray(self._core(np.clip(x, 0.0, self._phi_f), order), dtype=float)
        below, above = x < 0.0, x > self._phi_f
        if below.any() or above.any():
            out = np.array(out, dtype=float, copy=True)
            margin = EXTENSION_MARGIN * self._phi_f
            for mask, end, origin in ((below, self._ends[0], 0.0), (above, self._ends[1], self._phi_f)):
                if not mask.any():
                    continue
                k0, k1, k2, k3 = end
                s, ds, d2s = _flatten_map(x[mask] - origin, margin)
                slope = k1 + s * (k2 + 0.5 * k3 * s)
                if order == 0:
                    val = k0 + s * (k1 + s * (0.5 * k2 + s * k3 / 6.0))
                elif order == 1:
                    val = slope * ds
                else:
                    val = (k2 + k3 * s) * ds * ds + slope * d2s
                out[mask] = val
        return out if out.ndim else float(out)

    __call__ = eval

    def leaves_domain(self, phi) -> bool:
        """True when any value lies outside [0, phi_f] (extension in use)."""
        x = np.asarray(phi, dtype=float)
        return bool(np.any(x < 0.0) or np.any(x > self._phi_f))

    # -- derived constants --------------------------------------------------
    def _check_positive(self):
        grid = np.linspace(0.0, self._phi_f, POSITIVITY_SAMPLES)
        vals = self.eval(grid)
        if not np.all(np.isfinite(vals)):
            raise InvalidPhaseResponse(f"{self!r} is not finite on [0, phi_f]")
        lo = self._refined_extremum(grid, vals, sign=1.0)
        if lo <= 0.0:
            raise InvalidPhaseResponse(f"{self!r} is not positive on [0, phi_f] (min {lo:.6g})")

    def _refined_extremum(self, grid, vals, sign):
        # sign=+1 -> minimum, -1 -> maximum; polish around the best sample
        i = int(np.argmin(sign * vals))
        best = float(vals[i])
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        if b > a:
            res = minimize_scalar(lambda x: sign * self.eval(x), bounds=(a, b), method="bounded",
                                  options={"xatol": 1e-12 * self._phi_f})
            if res.success:
                best = min(best, float(res.fun) * sign) if sign > 0 else max(best, -float(res.fun))
        return best

    @cached_property
    def _constants(self) -> ResponseConstants:
        f = lambda x: float(self.eval(x))
        d2 = lambda x: float(self.eval(x, 2))
        d1_0 = float(self.eval(0.0, 1))
        if self.is_affine:
            neg = pos = 0.0
        else:
            neg = adaptive_simpson(lambda x: min(d2(x), 0.0), 0.0, self._phi_f)
            pos = adaptive_simpson(lambda x: max(d2(x), 0.0), 0.0, self._phi_f)
        harmonic = adaptive_simpson(lambda x: 1.0 / f(x), 0.0, self._phi_f)
        grid = np.linspace(0.0, self._phi_f, POSITIVITY_SAMPLES)
        vals = self.eval(grid)
        return ResponseConstants(
            k_min=d1_0 + neg,
            k_max=d1_0 + pos,
            harmonic_integral=harmonic,
            K_min_val=self._refined_extremum(grid, vals, 1.0),
            K_max_val=self._refined_extremum(grid, vals, -1.0),
        )

    def constants(self) -> ResponseConstants:
        """k_min, k_max, harmonic integral and the extreme values of K on [0, phi_f]."""
        return self._constants

    @cached_property
    def _primitive_table(self):
        grid = np.linspace(0.0, self._phi_f, 8193)
        table = cumulative_simpson(1.0 / self.eval(grid), x=grid, initial=0.0)
        return CubicSpline(grid, table)

    def harmonic_primitive(self, phi):
        """Primitive of 1/K from 0 (tabulated once, spline-interpolated)."""
        out = self._primitive_table(np.asarray(phi, dtype=float))
        return out if np.ndim(out) else float(out)
