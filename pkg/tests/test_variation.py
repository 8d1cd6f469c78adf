from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radvar import variation as var
from radvar.errors import (
    EmptyBall,
    GridTooCoarse,
    InsufficientRadii,
    NotCauchy,
    PreconditionViolated,
)
from radvar.experiments import MeshSpec, make_field
from radvar.geometry import flat_graph
from radvar.kernels import KernelFactory
from radvar.omega import OmegaBuilder, OmegaConfig

SMALL = MeshSpec(resolution=1 / 64, R_trunc=1e3)


@pytest.fixture(scope="module")
def mesh():
    return SMALL.build(flat_graph())


@pytest.fixture(scope="module")
def hat():
    return make_field("hat")


@pytest.fixture(scope="module")
def factory(mesh, hat):
    return KernelFactory(mesh, hat)


@pytest.fixture(scope="module")
def profile(factory, hat, mesh):
    nodes = np.nonzero(np.abs(mesh.centers[:, 0]) <= 0.5)[0]
    return var.variation_profile(factory, hat, 2.0**-6, nodes=nodes)


def test_kappa_anchor_reproduces_anchor_value(mesh, hat):
    kappa = var.kappa_anchor(mesh, [0.1], 2.0)
    lhs = kappa.integrate(hat.value(mesh.shifted_nodes(1.0)))
    assert lhs == pytest.approx(hat.value(np.array([[0.1, 2.0]]))[0], rel=2e-3)
    with pytest.raises(PreconditionViolated):
        var.kappa_anchor(mesh, [0.0], 1.0)


def test_kappa_uniform_is_probability(mesh):
    k = var.kappa_uniform(mesh, [0.0], 0.2)
    assert k.total == pytest.approx(1.0)
    assert np.all(k.weights[np.abs(mesh.centers[:, 0]) > 0.25] == 0)
    with pytest.raises(EmptyBall):
        var.kappa_uniform(mesh, [1e6], 0.1)


def test_height_grid_geometric():
    g = var.height_grid(2.0**-4, per_octave=2)
    assert g[0] == pytest.approx(1 / 16) and g[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(g[1:] / g[:-1], 2**0.5)


def test_profile_dominates_lower_bound(profile):
    assert profile.dominates_lower
    assert np.all(profile.values > 0)
    assert profile.coarse_change < 0.05


def test_kernel_and_b_routes_agree(factory, hat, profile):
    other = var.variation_profile(factory, hat, 2.0**-6, nodes=profile.nodes, method="b_route")
    np.testing.assert_allclose(other.values, profile.values, rtol=1e-3)


def test_coarse_grid_detected(factory, hat):
    with pytest.raises(GridTooCoarse):
        var.variation_profile(factory, hat, 2.0**-6, grid=np.geomspace(2.0**-6, 1, 3),
                              nodes=np.arange(5), grid_tol=1e-6)


def test_bourgain_search(mesh, profile, hat):
    res = var.bourgain_search(mesh, profile, [0.0], 0.1, hat, 2.0)
    assert res.ratio == pytest.approx(res.variation / res.anchor_value)
    assert res.transfer_measured <= res.transfer_bound
    assert np.abs(res.point[0]) <= 0.1
    with pytest.raises(PreconditionViolated):
        var.bourgain_search(mesh, profile, [0.0], 0.1, hat, 0.5)


def test_pole_measure_scaling_exponent_is_one(mesh):
    fit = var.scaling_exponent(var.pole_measure(mesh), mesh, [0.0], [2.0**-k for k in range(2, 6)])
    assert fit.slope == pytest.approx(1.0, abs=0.02)


def test_scaling_exponent_errors(mesh):
    pm = var.pole_measure(mesh)
    with pytest.raises(ValueError):
        var.scaling_exponent(pm, mesh, [0.0], [0.1, 0.2])
    with pytest.raises(InsufficientRadii):
        var.scaling_exponent(pm, mesh, [0.0], [0.1, 0.05, 2.0**-9])


def test_point_mass_scaling_is_flat(mesh):
    node = int(np.argmin(np.abs(mesh.centers[:, 0])))
    fit = var.scaling_exponent(var.point_mass(mesh, node), mesh, mesh.centers[node],
                               [2.0**-k for k in range(2, 6)])
    assert abs(fit.slope) < 1e-9


@pytest.fixture(scope="module")
def builder(factory):
    return OmegaBuilder(factory, OmegaConfig(epsilon=0.05, tol=1e-3))


def test_gamma_density_and_duality(builder, mesh):
    kappa = var.kappa_anchor(mesh, [0.0], 2.0)
    g = var.gamma_density(builder, kappa, F(1, 2))
    assert np.all(g.weights >= 0)
    assert g.total == pytest.approx(kappa.total, rel=1e-9)
    alpha = var.test_functions(mesh, 1)[0]
    assert var.duality_gap(builder, kappa, F(1, 2), alpha) < 1e-12


def test_nu_approximation_cauchy_rule(builder, mesh):
    kappa = var.kappa_anchor(mesh, [0.0], 2.0)
    heights = [F(1, 2**k) for k in range(1, 5)]
    nu = var.nu_approx(builder, kappa, heights, tol=0.05)
    assert nu.differences[-1] < nu.differences[0]
    with pytest.raises(NotCauchy):
        var.nu_approx(builder, kappa, heights, tol=1e-6)
    with pytest.raises(ValueError):
        var.nu_approx(builder, kappa, heights[::-1])


def test_budget_needs_profile_on_support(builder, mesh, profile, hat):
    kappa = var.kappa_anchor(mesh, [0.0], 2.0)
    nu = var.nu_approx(builder, kappa, [F(1, 2), F(1, 4)], tol=1.0).measure
    with pytest.raises(PreconditionViolated):
        var.budget_check(nu, profile, kappa, hat, mesh, 0.05)


def test_test_functions_are_bumps(mesh):
    t = var.test_functions(mesh, count=4, seed=1)
    assert t.shape == (4, mesh.size)
    assert np.all((t >= 0) & (t <= 1))


@given(st.floats(0.02, 1.0), st.floats(0.02, 1.0), st.floats(-0.5, 0.5))
@settings(max_examples=30, deadline=None)
def test_ball_mass_monotone_in_radius(r1, r2, c):
    m = SMALL.build(flat_graph())
    pm = var.pole_measure(m)
    lo, hi = sorted((r1, r2))
    assert pm.ball_mass(m, [c], lo) <= pm.ball_mass(m, [c], hi) + 1e-15
