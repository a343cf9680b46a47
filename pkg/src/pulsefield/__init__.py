"""Mean-field pulse-coupled oscillators in the quantile (pseudo-inverse) formulation."""

from .phase_response import PhaseResponse, ResponseConstants
from .quantile import (DiscreteDistribution, QuantileProfile, bv_distance, ik_functional,
                       modified_l2_distance, p0_project, pseudo_inverse, quantile_from_cdf,
                       quantile_from_density, wasserstein)
from .meanfield import (MeanFieldState, SolverConfig, TrajectoryRecord, h_profile, initial_state,
                        integral_equation_residual, run, step, validate_initial)
from .steady_state import SteadyState, exists, first_hitting_eta, solve
from .particles import (ParticleEnsemble, advance_to_next_firing, empirical_quantile,
                        fire_and_cascade, init_from_density, run_particles)
from .diagnostics import (TheoremReport, blowup_bounds, bounded_bv_check, contraction_band,
                          l2_rate_check, moment_series)

__version__ = "0.1.0"
