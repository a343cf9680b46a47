"""Semi-Lagrangian solver for the quantile formulation in dilated time.

On the grid ``eta_j = j / M`` with ``dtau = 1 / M`` every characteristic moves
exactly one node per step, so a step is an index shift plus an ODE solve along
each characteristic. The boundary unknown (reciprocal firing rate) is held
constant over a step and chosen so that the last characteristic lands exactly
on the firing phase; this step rate drives Q and the clock.

The boundary values of Z use the node-time value instead: the derivative
carried to the outflow node, ``Z_M - K(phi_f)``. The step rate is an average
over the step and lags it by half a step. Setting ``Z_0 = value + K(0)`` and
``Z_M = value + K(phi_f)`` keeps derivative compatibility exact.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from ._numerics import expand_bracket, safeguarded_newton
from .errors import (BlowUpDetected, CompatibilityViolated, ConfigError, ConstraintViolated,
                     GridMismatch, InsufficientHistory)
from .quantile import QuantileProfile, trapezoid_mean, write_columns

ORIGINAL = "original"
RELAXED = "relaxed"
MODES = (ORIGINAL, RELAXED)

COMPLETED = "completed"
BLOWN_UP = "blown_up"
RELAXED_CONTINUED = "relaxed_continued"

TRAJECTORY_COLUMNS = ("step", "tau", "t", "n_tilde", "N", "minZ", "maxZ", "res_compat", "res_boundary")
_ROW_FIELD = {"N": "rate"}  # CSV column -> TrajectoryRow attribute


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of a run.

    ``snapshot_limit`` caps the number of stored profiles (ring buffer); by
    default every step is kept when ``M <= 400`` and the last ``8 * M`` otherwise.
    """

    M: int = 200
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    blowup_eps: float = 1e-8
    max_steps: int = 10_000_000
    inner_integrator: str = "rk4"
    substeps: int = 4
    snapshot_limit: int | None = None
    store_snapshots: bool = True

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 8:
            raise ConfigError(f"solver.M: need an integer >= 8, got {self.M!r}")
        if self.inner_integrator != "rk4":
            raise ConfigError(f"solver.inner_integrator: only 'rk4' is supported, got {self.inner_integrator!r}")
        if self.substeps < 2 or self.substeps % 2:
            raise ConfigError("solver.substeps: must be an even integer >= 2 (Simpson rule)")
        if not self.newton_tol > 0:
            raise ConfigError("solver.newton_tol: must be positive")
        if self.max_steps < 1:
            raise ConfigError("solver.max_steps: must be positive")

    @property
    def dtau(self) -> float:
        return 1.0 / self.M

    @property
    def snapshot_capacity(self) -> int | None:
        if self.snapshot_limit is not None:
            return int(self.snapshot_limit)
        return None if self.M <= 400 else 8 * self.M


@dataclass(frozen=True)
class MeanFieldState:
    tau: float
    t: float
    profile: QuantileProfile
    n_tilde: float            # node-time value, equal to H at both ends
    mode: str = ORIGINAL
    step_index: int = 0
    physical: bool = True
    step_rate: float | None = None  # root of the step that produced this state

    @property
    def firing_rate(self) -> float:
        return 1.0 / self.n_tilde if self.n_tilde > 0 else math.nan


@dataclass(frozen=True)
class TrajectoryRow:
    step: int
    tau: float
    t: float
    n_tilde: float
    rate: float
    minZ: float
    maxZ: float
    res_compat: float
    res_boundary: float
    step_rate: float
    monotone: bool
    in_domain: bool


@dataclass(frozen=True)
class Snapshot:
    step: int
    tau: float
    t: float
    n_tilde: float
    q: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class Outcome:
    kind: str
    tau_star: float | None = None
    t_star: float | None = None
    reason: str = ""

    def as_dict(self):
        return {"kind": self.kind, "tau_star": self.tau_star, "t_star": self.t_star, "reason": self.reason}


@dataclass
class TrajectoryRecord:
    config: SolverConfig
    mode: str
    phi_f: float
    rows: list = field(default_factory=list)
    initial: Snapshot | None = None
    snapshots: deque = field(default_factory=deque)
    outcome: Outcome = field(default_factory=lambda: Outcome(COMPLETED))
    final_state: MeanFieldState | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, _ROW_FIELD.get(name, name)) for r in self.rows])

    @property
    def tau(self):
        return self.column("tau")

    @property
    def n_tilde(self):
        return self.column("n_tilde")

    def all_snapshots(self) -> list:
        """Initial profile followed by the stored step profiles, in step order."""
        snaps = list(self.snapshots)
        if self.initial is not None and (not snaps or snaps[0].step != self.initial.step):
            snaps.insert(0, self.initial)
        return snaps

    def snapshot_at_step(self, step: int) -> Snapshot | None:
        for s in self.all_snapshots():
            if s.step == step:
                return s
        return None

    def profile(self, snap: Snapshot) -> QuantileProfile:
        return QuantileProfile(snap.q, snap.z, self.phi_f)

    def to_csv(self, path):
        cols = {name: self.column(name) for name in TRAJECTORY_COLUMNS}
        cols["step"] = cols["step"].astype(int)
        write_columns(path, cols)


# -- characteristic flow ----------------------------------------------------

def _flow(response, q0, n_tilde, dt, substeps, sensitivity=False):
    """RK4 along dq/ds = K(q) + n_tilde over ``dt``.

    Returns the end values, the integral of K'(q) along the path (Simpson on the
    substep nodes) and, if requested, dq_end/dn_tilde.
    """
    h = dt / substeps
    q = np.array(q0, dtype=float)
    v = np.zeros_like(q) if sensitivity else None
    slopes = [response.eval(q, 1)]
    for _ in range(substeps):
        if sensitivity:
            d1 = slopes[-1]
            k1 = response.eval(q) + n_tilde
            l1 = d1 * v + 1.0
            qa = q + 0.5 * h * k1
            k2 = response.eval(qa) + n_tilde
            l2 = response.eval(qa, 1) * (v + 0.5 * h * l1) + 1.0
            qb = q + 0.5 * h * k2
            k3 = response.eval(qb) + n_tilde
            l3 = response.eval(qb, 1) * (v + 0.5 * h * l2) + 1.0
            qc = q + h * k3
            k4 = response.eval(qc) + n_tilde
            l4 = response.eval(qc, 1) * (v + h * l3) + 1.0
            v = v + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
        else:
            k1 = response.eval(q) + n_tilde
            k2 = response.eval(q + 0.5 * h * k1) + n_tilde
            k3 = response.eval(q + 0.5 * h * k2) + n_tilde
            k4 = response.eval(q + h * k3) + n_tilde
        q = q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        slopes.append(response.eval(q, 1))
    w = np.ones(substeps + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    gain = (h / 3.0) * sum(wi * si for wi, si in zip(w, slopes))
    return q, gain, v


# -- public operations ----------------------------------------------------

def validate_initial(profile: QuantileProfile, response, compat_tol: float = 1e-6):
    """Check an initial profile against the boundary constraints.

    Returns ``(N_init, warnings)`` with ``N_init = 1 / (Z_M - K(phi_f))``.

    Raises
    ------
    ConstraintViolated
        Generalized or non-monotone profile, wrong end values, or ``Z_M <= K(phi_f)``.
    CompatibilityViolated
        ``Z_M - Z_0`` differs from ``K(phi_f) - K(0)`` by more than ``compat_tol * phi_f``.
    """
    phi_f = response.phi_f
    warnings = []
    if profile.generalized or not np.all(np.isfinite(profile.z)):
        raise ConstraintViolated("initial profile must have finite derivatives (no atoms or gaps)")
    if abs(profile.phi_f - phi_f) > 1e-12 * phi_f:
        raise ConstraintViolated(f"profile phi_f={profile.phi_f} differs from K.phi_f={phi_f}")
    if profile.q[0] != 0.0 or abs(profile.q[-1] - phi_f) > 1e-12 * phi_f:
        raise ConstraintViolated("initial profile must start at 0 and end at phi_f")
    if not profile.is_monotone() or np.any(profile.z <= 0):
        raise ConstraintViolated("initial profile must be strictly increasing (Z > 0)")
    k0, kf = response.eval(0.0), response.eval(phi_f)
    z0, zm = float(profile.z[0]), float(profile.z[-1])
    if zm <= kf:
        raise ConstraintViolated(f"Z_M={zm!r} must exceed K(phi_f)={kf!r}")
    mismatch = abs((zm - z0) - (kf - k0))
    if mismatch > compat_tol * phi_f:
        raise CompatibilityViolated(
            f"Z_M - Z_0 = {zm - z0!r} but K(phi_f) - K(0) = {kf - k0!r} (mismatch {mismatch:.3e})")
    if mismatch > 1e-12 * phi_f:
        warnings.append(f"derivative compatibility holds only to {mismatch:.2e}")
    n_init = 1.0 / (zm - kf)
    return n_init, warnings


def initial_state(profile: QuantileProfile, response, mode: str = ORIGINAL) -> MeanFieldState:
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {MODES}, got {mode!r}")
    n_init, _ = validate_initial(profile, response)
    return MeanFieldState(tau=0.0, t=0.0, profile=profile, n_tilde=1.0 / n_init, mode=mode)


def step(state: MeanFieldState, response, cfg: SolverConfig) -> MeanFieldState:
    """Advance one unit-CFL step of size ``1 / M``.

    Raises
    ------
    BlowUpDetected
        Original mode only, when the step root or the node-time value drops to
        ``cfg.blowup_eps``.
    RootFindFailed
        When the boundary root cannot be bracketed or converged.
    """
    return _step(state, response, cfg)


def _step(state, response, cfg):
    prof = state.profile
    n_cells = cfg.M
    if prof.grid_size != n_cells:
        raise GridMismatch(f"profile has {prof.grid_size} cells, solver expects {n_cells}")
    dt = cfg.dtau
    phi_f = response.phi_f
    q, z = prof.q, prof.z
    last = q[n_cells - 1:n_cells]

    def residual_and_slope(n):
        end, _, sens = _flow(response, last, n, dt, cfg.substeps, sensitivity=True)
        return float(end[0]) - phi_f, float(sens[0])

    prev = state.n_tilde if state.step_rate is None else state.step_rate
    width = 10.0 * dt * abs(prev) + 1.0
    lo, hi, g_lo, g_hi = expand_bracket(lambda n: residual_and_slope(n)[0], prev - width, prev + width)
    root = safeguarded_newton(residual_and_slope, lo, hi, g_lo, g_hi, prev,
                              cfg.newton_tol, cfg.newton_max_iter)
    tau_new = (state.step_index + 1) / n_cells
    if state.mode == ORIGINAL and root <= cfg.blowup_eps:
        raise BlowUpDetected(root, tau_new)

    moved, gain, _ = _flow(response, q[:-1], root, dt, cfg.substeps)
    k0, kf = response.eval(0.0), response.eval(phi_f)
    new_q = np.empty(n_cells + 1)
    new_z = np.empty(n_cells + 1)
    new_q[0], new_q[1:] = 0.0, moved
    new_z[1:] = z[:-1] * np.exp(gain)
    node_value = float(new_z[n_cells] - kf)
    new_z[0], new_z[n_cells] = node_value + k0, node_value + kf
    # the node value leads the step average by half a step; a zero crossing of
    # either one inside this step ends the physical solution
    crossed = min(root, node_value) <= cfg.blowup_eps
    if state.mode == ORIGINAL and crossed:
        raise BlowUpDetected(min(root, node_value), tau_new)
    physical = state.physical and not crossed
    new_state = MeanFieldState(
        tau=tau_new,
        t=state.t + root * dt,
        profile=QuantileProfile(new_q, new_z, phi_f),
        n_tilde=node_value,
        mode=state.mode,
        step_index=state.step_index + 1,
        physical=physical,
        step_rate=root,
    )
    return new_state


_DOMAIN_SLACK = 1e-12


def _row(state, response):
    q, z = state.profile.q, state.profile.z
    k0, kf = response.eval(0.0), response.eval(response.phi_f)
    n = state.n_tilde
    return TrajectoryRow(
        step=state.step_index,
        tau=state.tau,
        t=state.t,
        n_tilde=n,
        rate=1.0 / n if n > 0 else math.nan,
        minZ=float(z.min()),
        maxZ=float(z.max()),
        res_compat=abs(float(z[-1] - z[0]) - (kf - k0)),
        res_boundary=abs(float(q[-1]) - response.phi_f),
        step_rate=state.n_tilde if state.step_rate is None else state.step_rate,
        monotone=bool(np.all(np.diff(q) >= 0)),
        # ulp-level overshoot of Q_M is round-off, not use of the extension
        in_domain=bool(q.min() >= -_DOMAIN_SLACK * response.phi_f
                       and q.max() <= (1.0 + _DOMAIN_SLACK) * response.phi_f),
    )


def _snapshot(state):
    return Snapshot(state.step_index, state.tau, state.t, state.n_tilde, state.profile.q, state.profile.z)


def run(state: MeanFieldState, tau_end: float, response, cfg: SolverConfig) -> TrajectoryRecord:
    """Iterate :func:`step` up to ``tau_end``, blow-up (original mode) or ``max_steps``.

    In relaxed mode the run continues through non-positive boundary values and
    the first crossing is reported as ``tau_star`` of a ``relaxed_continued``
    outcome.
    """
    n_cells = cfg.M
    dt = cfg.dtau
    record = TrajectoryRecord(config=cfg, mode=state.mode, phi_f=response.phi_f,
                              snapshots=deque(maxlen=cfg.snapshot_capacity))
    record.rows.append(_row(state, response))
    record.initial = _snapshot(state)
    n_steps = max(0, math.ceil(round((tau_end - state.tau) * n_cells, 9)))
    outcome = Outcome(COMPLETED)
    crossing = None
    for i in range(n_steps):
        if i >= cfg.max_steps:
            outcome = Outcome(COMPLETED, reason="max_steps")
            break
        try:
            new = _step(state, response, cfg)
        except BlowUpDetected as sig:
            outcome = Outcome(BLOWN_UP, tau_star=state.tau + 0.5 * dt,
                              t_star=state.t + 0.5 * dt * max(sig.n_tilde, 0.0),
                              reason=str(sig))
            break
        if crossing is None and not new.physical:
            crossing = (state.tau + 0.5 * dt, state.t + 0.5 * dt * max(new.step_rate, 0.0))
        state = new
        record.rows.append(_row(state, response))
        if cfg.store_snapshots:
            record.snapshots.append(_snapshot(state))
    if crossing is not None and outcome.kind == COMPLETED:
        outcome = Outcome(RELAXED_CONTINUED, tau_star=crossing[0], t_star=crossing[1], reason=outcome.reason)
    record.outcome = outcome
    record.final_state = state
    return record


def h_profile(state, response):
    """Return ``(H, H_0, H_M)`` with ``H = Z - K(Q)``; both end values equal the boundary unknown."""
    prof = state.profile if isinstance(state, MeanFieldState) else state
    h = prof.z - response.eval(prof.q)
    return h, float(h[0]), float(h[-1])


def write_snapshot_csv(path, snap: Snapshot, response):
    eta = np.arange(snap.q.size) / (snap.q.size - 1)
    write_columns(path, {"eta": eta, "Q": snap.q, "Z": snap.z, "H": snap.z - response.eval(snap.q)})


# -- integral equation check ------------------------------------------------

@dataclass(frozen=True)
class IntegralEquationCheck:
    tau: np.ndarray
    recomputed: np.ndarray
    recorded: np.ndarray
    residual: np.ndarray
    kernel_min: float
    identity_residual: float

    @property
    def max_residual(self) -> float:
        return float(self.residual.max()) if self.residual.size else 0.0


def node_values(record: TrajectoryRecord) -> np.ndarray:
    """Boundary unknown at the node times tau_m = m / M (the recorded series)."""
    return record.n_tilde.copy()


def integral_equation_residual(record: TrajectoryRecord, response) -> IntegralEquationCheck:
    """Recompute the boundary unknown at every tau > 1 from its one-unit history.

    Uses trapezoid quadrature along the diagonal ``s -> (s, 1 - (tau - s))``
    which passes exactly through grid nodes. Also reports the worst deviation
    of the kernel identity ``1 - int c = exp(int K')``.
    """
    n_cells = record.config.M
    snaps = record.all_snapshots()
    steps = [s.step for s in snaps]
    if not snaps or steps != list(range(steps[0], steps[0] + len(steps))) or steps[0] != 0:
        raise InsufficientHistory("integral equation check needs a profile at every step from tau = 0")
    if len(snaps) != len(record.rows):
        raise InsufficientHistory("snapshot count does not match recorded steps")
    last = len(snaps) - 1
    if last - 1 <= n_cells:
        raise InsufficientHistory("trajectory does not extend beyond tau = 1")
    qs = np.stack([s.q for s in snaps])
    nodes = node_values(record)
    dt = 1.0 / n_cells
    taus, recomputed, recorded = [], [], []
    kernel_min, identity = math.inf, 0.0
    offsets = np.arange(n_cells + 1)
    for n in range(n_cells + 1, last):
        m = n - n_cells + offsets                   # s = tau_m, m = n-M .. n
        slopes = response.eval(qs[m, offsets], 1)     # K'(Q(s, 1 - (tau - s)))
        seg = 0.5 * dt * (slopes[1:] + slopes[:-1])
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])  # int_s^tau K'
        kernel = -slopes * np.exp(tail)
        weight = 0.5 * dt * (kernel[1:] + kernel[:-1]).sum()
        hist = nodes[m]
        conv = 0.5 * dt * ((kernel * hist)[1:] + (kernel * hist)[:-1]).sum()
        taus.append(n * dt)
        recomputed.append((1.0 - weight) * hist[0] + conv)
        recorded.append(nodes[n])
        kernel_min = min(kernel_min, float(kernel.min()))
        identity = max(identity, abs(1.0 - weight - math.exp(tail[0])))
    rec = np.array(recomputed)
    obs = np.array(recorded)
    return IntegralEquationCheck(np.array(taus), rec, obs, np.abs(rec - obs), kernel_min, identity)
