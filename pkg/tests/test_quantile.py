import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import profile_from_z
from pulsefield.errors import GridMismatch, HypothesisViolated, NonPositiveDensity, NotNormalized
from pulsefield.phase_response import PhaseResponse
from pulsefield.quantile import (DiscreteDistribution, QuantileProfile, bv_distance, ik_functional,
                                 modified_l2_distance, p0_project, pseudo_inverse, quantile_from_cdf,
                                 quantile_from_density, trapezoid_mean, wasserstein)


def linear(n_cells, phi_f=1.0):
    eta = np.arange(n_cells + 1) / n_cells
    return QuantileProfile(phi_f * eta, np.full(n_cells + 1, phi_f), phi_f)


def sqrt_profile(n_cells):
    eta = np.arange(n_cells + 1) / n_cells
    with np.errstate(divide="ignore"):
        z = np.where(eta > 0, 0.5 / np.sqrt(np.maximum(eta, 1e-300)), np.inf)
    return QuantileProfile(np.sqrt(eta), z, 1.0)


# -- transforms ---------------------------------------------------------------

def test_uniform_density():
    phi = np.linspace(0, 1, 11)
    p = quantile_from_density(phi, np.ones_like(phi), 4)
    assert np.allclose(p.q, [0, 0.25, 0.5, 0.75, 1.0], atol=1e-15)
    assert np.allclose(p.z, 1.0)


def test_linear_density_gives_square_root():
    phi = np.linspace(0, 1, 20001)
    p = quantile_from_density(phi, 2 * phi, 100, pde_grade=False)
    assert np.max(np.abs(p.q - np.sqrt(p.eta))) <= 1e-3


def test_density_normalization_errors():
    phi = np.linspace(0, 1, 101)
    with pytest.raises(NotNormalized):
        quantile_from_density(phi, np.full_like(phi, 1.1), 10)
    with pytest.raises(NonPositiveDensity):
        quantile_from_density(phi, 2 * phi, 10)
    # small deviations are renormalized
    p = quantile_from_density(phi, np.full_like(phi, 1.00005), 10)
    assert np.allclose(p.q, p.eta, atol=1e-12)


def test_atom_plus_uniform_mixture_has_flat_segment():
    # 0.3 mass at 0.5 plus 0.7 spread uniformly
    cdf = lambda x: 0.7 * np.clip(x, 0, 1) + 0.3 * (x >= 0.5)
    p = quantile_from_cdf(cdf, 1000)
    flat = np.isclose(p.q, 0.5, atol=1e-9)
    eta = p.eta[flat]
    assert eta.max() - eta.min() == pytest.approx(0.3, abs=2e-3)
    assert p.generalized


def test_single_atom():
    p = pseudo_inverse(DiscreteDistribution([0.4], [1.0]), 10)
    assert np.all(p.q[1:-1] == 0.4)


def test_two_atoms():
    p = pseudo_inverse(DiscreteDistribution([0.8, 0.2], [0.5, 0.5]), 10)
    assert np.all(p.q[p.eta <= 0.5] == 0.2)
    assert np.all(p.q[p.eta > 0.5] == 0.8)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40), st.integers(2, 60))
@settings(max_examples=100, deadline=None)
def test_empirical_quantile_is_order_statistic(samples, n_cells):
    p = pseudo_inverse(DiscreteDistribution.empirical(samples), n_cells)
    srt = np.sort(samples)
    n = len(samples)
    for j in range(1, n_cells + 1):
        eta = j / n_cells
        # brute-force infimum over the sorted list
        k = next(i for i in range(n) if (i + 1) / n >= eta - 1e-12)
        assert p.q[j] == srt[k]


def test_discrete_distribution_validation():
    with pytest.raises(NotNormalized):
        DiscreteDistribution([0.1, 0.2], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteDistribution([1.5], [1.0])


def test_round_trip_density():
    phi = np.linspace(0, 1, 4001)
    rho = 1.0 + 0.5 * np.cos(2 * np.pi * phi)
    for n_cells in (50, 200):
        p = quantile_from_density(phi, rho, n_cells)
        _, back = p.density()
        interior = slice(1, -1)
        exact = 1.0 + 0.5 * np.cos(2 * np.pi * p.q[interior])
        assert np.max(np.abs(back[interior] - exact)) <= 5.0 / n_cells


# -- distances ----------------------------------------------------------------

def test_wasserstein_identity():
    p = linear(20)
    for order in (1, 2, math.inf):
        assert wasserstein(p, p, order) == 0.0


def test_wasserstein_atoms_translation():
    a = pseudo_inverse(DiscreteDistribution([0.2], [1.0]), 50)
    b = pseudo_inverse(DiscreteDistribution([0.3], [1.0]), 50)
    # end nodes are the support end points here, so every node differs by 0.1
    assert wasserstein(a, b, 1) == pytest.approx(0.1, abs=1e-15)


def test_wasserstein_uniform_vs_linear_density():
    n_cells = 100_000
    w1 = wasserstein(linear(n_cells), sqrt_profile(n_cells), 1)
    eta = (np.arange(10**6) + 0.5) / 10**6
    riemann = np.mean(np.abs(eta - np.sqrt(eta)))
    assert riemann == pytest.approx(1 / 6, abs=1e-6)
    assert w1 == pytest.approx(1 / 6, abs=1e-6)


def test_grid_mismatch():
    for fn in (bv_distance, modified_l2_distance, lambda a, b: wasserstein(a, b, 2)):
        with pytest.raises(GridMismatch):
            fn(linear(10), linear(20))


def test_bv_distance_examples():
    p = linear(10)
    assert bv_distance(p, p) == 0.0
    a = QuantileProfile(np.linspace(0, 1, 11), np.ones(11), 1.0)
    b = QuantileProfile(np.linspace(0, 1, 11), np.full(11, 1.5), 1.0)
    assert bv_distance(a, b) == pytest.approx(0.5, abs=1e-15)


def test_p0_examples():
    p = linear(100)
    assert np.allclose(p0_project(p), p.eta - 0.5, atol=1e-15)
    assert np.all(p0_project(np.full(7, 3.2)) == 0.0)
    n_cells = 100_000
    s = sqrt_profile(n_cells)
    assert np.allclose(p0_project(s), s.q - 2 / 3, atol=1e-6)


def test_modified_l2_examples():
    p = linear(100)
    assert modified_l2_distance(p, p) == 0.0
    shifted = QuantileProfile(p.q + 0.3, p.z, 1.0)
    assert modified_l2_distance(p, shifted) == pytest.approx(0.0, abs=1e-15)
    n_cells = 2000
    eta = np.arange(n_cells + 1) / n_cells
    a = QuantileProfile(eta, np.ones(n_cells + 1), 1.0)
    b = QuantileProfile(eta - (eta - 0.5), np.ones(n_cells + 1), 1.0)
    assert modified_l2_distance(a, b) == pytest.approx(1 / math.sqrt(12), rel=1e-6)


def test_ik_affine_is_exact_multiple():
    response = PhaseResponse.affine(-0.5, 1.0)
    n_cells = 200
    eta = np.arange(n_cells + 1) / n_cells
    a = profile_from_z(1 + 0.5 * np.sin(np.pi * eta))
    b = profile_from_z(1 + 0.3 * np.cos(3 * np.pi * eta) ** 2)
    gap, ik = ik_functional(a, b, response)
    assert ik == pytest.approx(-0.5 * gap, rel=1e-13)
    assert ik_functional(a, a, response) == (0.0, 0.0)


def test_ik_rejects_mismatched_ends():
    response = PhaseResponse.constant(1.0)
    a = linear(10)
    b = QuantileProfile(a.q * 0.9, a.z * 0.9, 1.0)
    with pytest.raises(HypothesisViolated):
        ik_functional(a, b, response)


# -- properties ---------------------------------------------------------------

coef = st.floats(-0.3, 0.3)


@st.composite
def random_profile(draw, n_cells=64):
    """Z = 1 + sum a_k cos(2 pi k eta) + b_k sin(2 pi k eta), kept positive, normalized to end at 1."""
    n = draw(st.integers(1, 4))
    eta = np.arange(n_cells + 1) / n_cells
    z = np.ones(n_cells + 1)
    for k in range(1, n + 1):
        z += draw(coef) * np.cos(2 * np.pi * k * eta) + draw(coef) * np.sin(2 * np.pi * k * eta)
    z = np.maximum(z, 0.05)
    return profile_from_z(z)


@given(random_profile(), random_profile())
@settings(max_examples=200, deadline=None)
def test_lp_ordering(a, b):
    w1, w2, winf = (wasserstein(a, b, p) for p in (1, 2, math.inf))
    assert w1 <= w2 + 1e-14
    assert w2 <= winf + 1e-14


@given(random_profile(), random_profile())
@settings(max_examples=200, deadline=None)
def test_w1_below_bv(a, b):
    assert wasserstein(a, b, 1) <= bv_distance(a, b) + 1e-12


@given(random_profile(), random_profile())
@settings(max_examples=200, deadline=None)
def test_bv_bounded_by_twice_phi_f(a, b):
    assert bv_distance(a, b) <= 2.0 * (1.0 + 1.0 / a.grid_size)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=100))
@settings(max_examples=200, deadline=None)
def test_p0_mean_vanishes(values):
    out = p0_project(np.asarray(values))
    assert abs(trapezoid_mean(out)) < 1e-12 * max(1.0, np.max(np.abs(values)))


IK_FORMS = [
    PhaseResponse.quadratic(1.2, -0.4, -0.1),
    PhaseResponse.quadratic(0.3, 0.5, 0.3),
    PhaseResponse.exponential(1.0, 1.0),
    PhaseResponse.tabulated([1.0, 0.9, 1.1, 1.3, 1.2, 0.8]),
]


@pytest.mark.parametrize("response", IK_FORMS, ids=repr)
@given(a=random_profile(), b=random_profile())
@settings(max_examples=250, deadline=None)
def test_ik_bounds(response, a, b):
    c = response.constants()
    gap, ik = ik_functional(a, b, response)
    assert c.k_min * gap - 1e-10 <= ik <= c.k_max * gap + 1e-10


def test_ik_matches_fine_riemann_sum():
    # oracle: midpoint sum of the same integrand at 10x resolution from analytic Z
    response = PhaseResponse.exponential(1.0, 1.0)
    n_cells = 100
    za = lambda e: 1 + 0.4 * np.sin(2 * np.pi * e)
    zb = lambda e: 1 + 0.3 * np.cos(2 * np.pi * e) - 0.3 * np.cos(2 * np.pi * e) ** 2 + 0.15
    def build(zf, n):
        eta = np.arange(n + 1) / n
        return profile_from_z(zf(eta))
    gap, ik = ik_functional(build(za, n_cells), build(zb, n_cells), response)
    fine_a, fine_b = build(za, 10 * n_cells), build(zb, 10 * n_cells)
    dz = fine_a.z - fine_b.z
    integrand = (response.eval(fine_a.q, 1) * fine_a.z - response.eval(fine_b.q, 1) * fine_b.z) * np.sign(dz)
    mid = 0.5 * (integrand[1:] + integrand[:-1])
    assert ik == pytest.approx(mid.mean(), abs=5e-3)
    assert gap == pytest.approx(np.mean(0.5 * (np.abs(dz)[1:] + np.abs(dz)[:-1])), abs=5e-3)


def test_csv_round_trip(tmp_path):
    p = profile_from_z(1 + 0.2 * np.sin(np.linspace(0, 3, 33)))
    p.to_csv(tmp_path / "p.csv")
    header = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert header == "eta,Q,Z"
    back = QuantileProfile.from_csv(tmp_path / "p.csv")
    assert np.array_equal(back.q, p.q) and np.array_equal(back.z, p.z)
