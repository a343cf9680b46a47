"""Event-driven simulation of finitely many pulse-coupled oscillators.

Between events every phase drifts at unit speed. When the leading phase
reaches ``phi_f`` it fires, resets to exactly 0 and kicks every other oscillator
by ``K(phase) / count``. Kicks can push further oscillators over threshold,
producing a cascade that is resolved within the same instant.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .quantile import DiscreteDistribution, QuantileProfile, pseudo_inverse, write_columns


@dataclass(frozen=True)
class SpikeEvent:
    index: int
    t: float
    cascade_size: int


@dataclass
class ParticleEnsemble:
    phases: np.ndarray
    phi_f: float = 1.0
    t: float = 0.0
    seed: int | None = None
    spike_log: list = field(default_factory=list)

    def __post_init__(self):
        self.phases = np.array(self.phases, dtype=float)

    @property
    def count(self) -> int:
        return self.phases.size

    def copy(self) -> "ParticleEnsemble":
        return replace(self, phases=self.phases.copy(), spike_log=list(self.spike_log))

    @property
    def resets(self) -> int:
        return sum(ev.cascade_size for ev in self.spike_log)

    def firing_rate(self, elapsed: float | None = None) -> float:
        """Resets per oscillator per unit physical time."""
        elapsed = self.t if elapsed is None else elapsed
        return self.resets / (self.count * elapsed)

    def spikes_to_csv(self, path):
        write_columns(path, {
            "event_index": np.array([ev.index for ev in self.spike_log], dtype=int),
            "t": np.array([ev.t for ev in self.spike_log]),
            "cascade_size": np.array([ev.cascade_size for ev in self.spike_log], dtype=int),
        })

    def phases_to_csv(self, path):
        write_columns(path, {"phase": np.sort(self.phases)})


def init_from_density(source, count: int, seed: int | None = 0, *, stratified: bool = False,
                      phi_f: float | None = None) -> ParticleEnsemble:
    """Sample ``count`` phases by inverse-CDF sampling.

    ``source`` is a :class:`QuantileProfile` (inverse CDF interpolated on its
    grid) or a :class:`DiscreteDistribution`. With ``stratified=True`` the mass
    levels are the cell midpoints ``(i + 1/2) / count`` instead of uniform draws.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if stratified:
        levels = (np.arange(count) + 0.5) / count
    else:
        levels = np.random.default_rng(seed).random(count)
    if isinstance(source, DiscreteDistribution):
        phases = source.quantile(levels)
        top = source.phi_f
    elif isinstance(source, QuantileProfile):
        phases = np.interp(levels, source.eta, source.q)
        top = source.phi_f
    else:
        raise TypeError("source must be a QuantileProfile or a DiscreteDistribution")
    top = top if phi_f is None else phi_f
    phases = np.minimum(phases, np.nextafter(top, 0.0))
    return ParticleEnsemble(phases, top, 0.0, seed)


def advance_to_next_firing(e: ParticleEnsemble):
    """Drift all phases until the leading one(s) reach ``phi_f``; returns (e', dt)."""
    out = e.copy()
    dt = _advance(out)
    return out, dt


def _advance(e):
    lead = e.phases.max()
    dt = e.phi_f - lead
    firing = e.phases == lead
    e.phases += dt
    e.phases[firing] = e.phi_f
    e.t += dt
    return dt


def fire_and_cascade(e: ParticleEnsemble, response):
    """Resolve all firings at the current instant; returns (e', cascade_size)."""
    out = e.copy()
    return out, _cascade(out, response)


def _cascade(e, response):
    phases = e.phases
    n = phases.size
    fired = np.zeros(n, dtype=bool)
    pending = phases >= e.phi_f
    size = 0
    while pending.any():
        cand = np.flatnonzero(pending)
        # decreasing phase, ties by index
        i = cand[np.lexsort((cand, -phases[cand]))[0]]
        pending[i] = False
        fired[i] = True
        phases[i] = 0.0
        size += 1
        recv = ~(fired | pending)
        phases[recv] += response.eval(phases[recv]) / n
        pending |= recv & (phases >= e.phi_f)
    return size


def run_particles(e: ParticleEnsemble, response, t_end: float | None = None,
                  spike_budget: int | None = None) -> ParticleEnsemble:
    """Alternate drift and cascades until ``t_end`` or ``spike_budget`` events."""
    if t_end is None and spike_budget is None:
        raise ValueError("give t_end, spike_budget or both")
    out = e.copy()
    events = 0
    while spike_budget is None or events < spike_budget:
        gap = out.phi_f - out.phases.max()
        if t_end is not None and out.t + gap > t_end:
            out.phases += t_end - out.t
            out.t = t_end
            break
        _advance(out)
        size = _cascade(out, response)
        out.spike_log.append(SpikeEvent(len(out.spike_log), out.t, size))
        events += 1
    return out


def empirical_quantile(e: ParticleEnsemble, n_cells: int) -> QuantileProfile:
    return pseudo_inverse(DiscreteDistribution.empirical(e.phases, e.phi_f), n_cells)
