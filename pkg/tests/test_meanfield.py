import numpy as np
import pytest

from pulsefield import initial_data
from pulsefield import meanfield as mf
from pulsefield.diagnostics import oscillation_per_unit
from pulsefield.errors import CompatibilityViolated, ConfigError, ConstraintViolated, InsufficientHistory
from pulsefield.phase_response import PhaseResponse
from pulsefield.quantile import QuantileProfile
from pulsefield.scenarios import builtin


def uniform(n_cells):
    eta = np.arange(n_cells + 1) / n_cells
    return QuantileProfile(eta, np.ones(n_cells + 1), 1.0)


# -- validate_initial ----------------------------------------------------------

def test_validate_constant_uniform():
    n_init, warnings = mf.validate_initial(uniform(50), PhaseResponse.constant(0.5))
    assert n_init == pytest.approx(2.0, abs=1e-15)
    assert warnings == []


def test_validate_zero_outflow_rate():
    with pytest.raises(ConstraintViolated):
        mf.validate_initial(uniform(50), PhaseResponse.constant(1.0))


def test_validate_incompatible_derivatives():
    with pytest.raises(CompatibilityViolated):
        mf.validate_initial(uniform(50), PhaseResponse.affine(0.75, 0.2))


def test_validate_rejects_generalized_and_bad_ends():
    response = PhaseResponse.constant(0.5)
    gen = QuantileProfile(np.linspace(0, 1, 11), np.full(11, np.nan), 1.0, generalized=True)
    with pytest.raises(ConstraintViolated):
        mf.validate_initial(gen, response)
    short = QuantileProfile(np.linspace(0, 0.9, 11), np.ones(11), 1.0)
    with pytest.raises(ConstraintViolated):
        mf.validate_initial(short, response)


def test_unknown_mode():
    with pytest.raises(ConfigError):
        mf.initial_state(uniform(10), PhaseResponse.constant(0.5), "sideways")


# -- step / run ----------------------------------------------------------------

def test_steady_input_is_fixed_point():
    response = PhaseResponse.constant(0.5)
    cfg = mf.SolverConfig(M=64)
    state = mf.initial_state(uniform(64), response)
    for _ in range(64):
        state = mf.step(state, response, cfg)
        assert state.n_tilde == pytest.approx(0.5, abs=cfg.newton_tol)
        assert state.profile.q[-1] == pytest.approx(1.0, abs=cfg.newton_tol)
    assert np.max(np.abs(state.profile.q - uniform(64).q)) <= 1e-12
    assert state.tau == pytest.approx(1.0, abs=1e-14)
    assert state.t == pytest.approx(0.5, abs=1e-12)


def test_boundary_after_every_step():
    s = builtin("smooth_decreasing", solver__M=100, tau_end=1.0)
    rec = s.run()
    assert np.all(rec.column("res_boundary") <= rec.config.newton_tol)


def test_fig3_original_blows_up_with_decreasing_rate():
    taus = []
    for n_cells in (100, 200):
        rec = builtin("fig3", solver__M=n_cells).run()
        assert rec.outcome.kind == mf.BLOWN_UP
        assert rec.outcome.tau_star is not None
        nt = rec.n_tilde
        # after the initial transient carried in from the data, the rate decays monotonically to zero
        peak = int(np.argmax(nt))
        assert np.all(np.diff(nt[peak:]) < 0)
        assert nt[-1] < 0.1 * nt[0]
        taus.append(rec.outcome.tau_star)
    # refined-grid self oracle
    assert abs(taus[0] - taus[1]) <= 2.0 / 100


def test_constant_two_blows_up_before_half():
    s = builtin("constant_blowup", solver__M=200)
    rec = s.run()
    assert rec.outcome.kind == mf.BLOWN_UP
    assert rec.outcome.tau_star <= 0.5 + 2.0 / 200
    # blow-up is a monotone limit: N increases over the last recorded steps
    rate = rec.column("N")[-10:]
    assert np.all(np.diff(rate) > 0)
    assert rec.n_tilde[-1] > rec.config.blowup_eps  # termination step is not recorded


def test_blowup_threshold_controls_termination():
    response = PhaseResponse.constant(2.0)
    prof = initial_data.beta_like(response, 100, 2.0, 2.0, 0.5)
    loose = mf.run(mf.initial_state(prof, response), 2.0, response, mf.SolverConfig(M=100, blowup_eps=1e-2))
    tight = mf.run(mf.initial_state(prof, response), 2.0, response, mf.SolverConfig(M=100, blowup_eps=1e-8))
    assert loose.outcome.tau_star <= tight.outcome.tau_star
    assert np.all(loose.n_tilde[1:] > 1e-2)


def test_decreasing_response_stays_within_h_range():
    s = builtin("smooth_decreasing", solver__M=100)
    rec = s.run()
    h, _, _ = mf.h_profile(s.initial_profile(), s.response)
    assert rec.outcome.kind == mf.COMPLETED
    assert rec.n_tilde.min() >= h.min() - 10 / 100
    assert rec.n_tilde.max() <= h.max() + 10 / 100


def test_relaxed_mode_goes_non_monotone():
    rec = builtin("fig3_relaxed", solver__M=100).run()
    assert rec.outcome.kind == mf.RELAXED_CONTINUED
    tau_star = rec.outcome.tau_star
    later = rec.tau > tau_star
    assert np.any(rec.column("minZ")[later] < 0)
    assert not rec.column("monotone")[-1]


def test_h_profile_identities():
    response = PhaseResponse.constant(0.5)
    state = mf.initial_state(uniform(40), response)
    h, h0, hm = mf.h_profile(state, response)
    assert np.allclose(h, 0.5, atol=1e-15)
    s = builtin("smooth_decreasing", solver__M=100, tau_end=1.5)
    rec = s.run()
    for snap in rec.all_snapshots()[1:]:
        _, h0, hm = mf.h_profile(rec.profile(snap), s.response)
        assert abs(h0 - snap.n_tilde) < 10 * rec.config.newton_tol
        assert abs(hm - snap.n_tilde) < 10 * rec.config.newton_tol


def test_step_rate_tracks_node_value():
    rec = builtin("smooth_decreasing", solver__M=200, tau_end=1.0).run()
    explicit = np.array([r.step_rate for r in rec.rows[1:]])
    assert np.max(np.abs(explicit - rec.n_tilde[1:])) < 2.0 / rec.config.M


def test_structural_invariants_every_step():
    for name in ("affine_decreasing", "smooth_decreasing", "convex_increasing"):
        rec = builtin(name, solver__M=100, tau_end=1.0).run()
        tol = rec.config.newton_tol
        assert rec.column("monotone").all()
        assert rec.column("res_boundary").max() <= tol
        assert rec.column("res_compat")[1:].max() <= 10 * tol
        assert rec.column("minZ").min() >= 0


def test_density_consistency():
    # 1/Z integrated over Q increments recovers unit mass
    for n_cells in (50, 200):
        rec = builtin("smooth_decreasing", solver__M=n_cells, tau_end=1.0).run()
        snap = rec.all_snapshots()[-1]
        rho = 1.0 / snap.z
        mass = np.sum(0.5 * (rho[1:] + rho[:-1]) * np.diff(snap.q))
        assert abs(mass - 1.0) <= 2.0 / n_cells


def test_oscillation_dichotomy():
    dec = oscillation_per_unit(builtin("smooth_decreasing", solver__M=100).run())
    assert np.all(np.diff(dec) <= 1e-12)
    inc_run = builtin("convex_increasing", solver__M=100, initial__epsilon=0.005, tau_end=6.0).run()
    inc = oscillation_per_unit(inc_run)
    assert inc.size == 6
    assert np.all(np.diff(inc) >= -1e-12)


def test_self_convergence():
    qs = {}
    for n_cells in (100, 200, 400):
        rec = builtin("smooth_decreasing", solver__M=n_cells, tau_end=1.0).run()
        qs[n_cells] = rec.final_state.profile.q
    d1 = np.max(np.abs(qs[200][::2] - qs[100]))
    d2 = np.max(np.abs(qs[400][::2] - qs[200]))
    assert d1 / d2 >= 1.8


def test_snapshot_ring_buffer():
    cfg = mf.SolverConfig(M=20, snapshot_limit=5)
    response = PhaseResponse.constant(0.5)
    rec = mf.run(mf.initial_state(uniform(20), response), 1.0, response, cfg)
    snaps = rec.all_snapshots()
    assert snaps[0].step == 0
    assert [s.step for s in snaps[1:]] == [16, 17, 18, 19, 20]
    with pytest.raises(InsufficientHistory):
        mf.integral_equation_residual(rec, response)


def test_integral_equation_constant_kernel_vanishes():
    response = PhaseResponse.constant(0.4)
    prof = initial_data.beta_like(response, 50, 2.0, 2.0, 0.5)
    rec = mf.run(mf.initial_state(prof, response), 2.5, response, mf.SolverConfig(M=50))
    chk = mf.integral_equation_residual(rec, response)
    assert chk.kernel_min == 0.0
    nodes = mf.node_values(rec)
    assert chk.max_residual <= 1e-10
    assert np.allclose(nodes[100:125], nodes[50:75], atol=1e-10)


def test_integral_equation_needs_a_unit_of_history():
    s = builtin("smooth_decreasing", solver__M=50, tau_end=0.5)
    with pytest.raises(InsufficientHistory):
        mf.integral_equation_residual(s.run(), s.response)


def test_integral_equation_kernel_nonnegative_for_decreasing():
    s = builtin("smooth_decreasing", solver__M=50, tau_end=2.0)
    chk = mf.integral_equation_residual(s.run(), s.response)
    assert chk.kernel_min >= 0.0
    assert chk.identity_residual < 1e-3


def test_csv_columns_and_determinism(tmp_path):
    s = builtin("smooth_decreasing", solver__M=40, tau_end=0.5)
    s.run().to_csv(tmp_path / "a.csv")
    s.run().to_csv(tmp_path / "b.csv")
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert a.splitlines()[0] == b"step,tau,t,n_tilde,N,minZ,maxZ,res_compat,res_boundary"
