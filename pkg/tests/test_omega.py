from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radvar.errors import NoConvergence, NonPositivePsi, PreconditionViolated
from radvar.experiments import MeshSpec, make_field
from radvar.geometry import flat_graph
from radvar.kernels import KernelFactory, max_entry, max_entry_distance
from radvar.omega import (
    OmegaBuilder,
    OmegaConfig,
    ode_residual,
    omega_vs_k_envelope,
    phi_ratio,
    pi_bounds,
    semigroup_discrepancy,
    weak_phi_constant,
)
from radvar.partitions import Partition, make_dyadic, seg

SMALL = MeshSpec(resolution=1 / 64, R_trunc=1e3)


@pytest.fixture(scope="module")
def mesh():
    return SMALL.build(flat_graph())


@pytest.fixture(scope="module")
def builder(mesh):
    return OmegaBuilder(KernelFactory(mesh, make_field("pole")), OmegaConfig(epsilon=0.05, tol=1e-3))


@pytest.mark.parametrize("kw", [{"epsilon": 1.5}, {"epsilon": 0.0}, {"tol": 0.0}, {"n_max": 2},
                                {"eps_grid": (0.1, 1.2)}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OmegaConfig(**kw)


def test_segment_report(builder):
    om, rep = builder.omega_segment(seg(F(1, 4), F(1, 2)))
    assert rep.depth >= 3
    assert rep.mean_one < 1e-9
    assert rep.min_entry > 0
    ratios = np.array(rep.increments[1:]) / np.array(rep.increments[:-1])
    assert np.all((ratios > 0.35) & (ratios < 0.65))
    assert rep.sup_lengths[:3] == [0.25, 0.125, 0.0625]
    assert builder.omega_segment(seg(F(1, 4), F(1, 2)))[0] is om


def test_no_convergence_is_reported(mesh):
    b = OmegaBuilder(KernelFactory(mesh, make_field("pole")), OmegaConfig(tol=1e-12, n_max=3))
    with pytest.raises(NoConvergence):
        b.omega_segment(seg(F(1, 4), F(1, 2)))


def test_semigroup_law(builder):
    assert semigroup_discrepancy(builder, F(1, 4), F(1, 2), 1) < 2 * builder.cfg.tol


def test_small_epsilon_recovers_poisson_kernel(mesh):
    b = OmegaBuilder(KernelFactory(mesh, make_field("pole")), OmegaConfig(epsilon=1e-9, tol=1e-3))
    om, _ = b.omega_segment(seg(F(1, 4), F(1, 2)))
    k = b.factory.k(0.25)
    assert max_entry_distance(om, k, b.rows, b.cols) / max_entry(k, b.rows, b.cols) < 1e-7


def test_constant_field_gives_k(mesh):
    b = OmegaBuilder(KernelFactory(mesh, make_field("constant")), OmegaConfig(epsilon=0.3, tol=1e-3))
    om, _ = b.omega_segment(seg(F(1, 4), F(1, 2)))
    np.testing.assert_allclose(om.mass, b.factory.k(0.25).mass, atol=1e-12)


def test_pi_bounds_envelope(builder):
    out = pi_bounds(builder, seg(F(1, 4), F(1, 2)), 3)
    assert 0 <= out["pi_vs_tilde"] < 10
    assert 0 <= out["pi_envelope"] < 10


def test_phi_ratio_preconditions(builder, mesh):
    psi = make_field("pole", depth=0.5).value(mesh.nodes)
    with pytest.raises(PreconditionViolated):
        phi_ratio(builder, seg(F(1, 4), 1), 0.5, psi)
    with pytest.raises(NonPositivePsi):
        phi_ratio(builder, seg(F(1, 8), F(1, 4)), 0.5, -psi)


def test_weak_phi_constant_is_small(builder, mesh):
    psi = make_field("pole", depth=0.5).value(mesh.nodes)
    assert weak_phi_constant(builder, seg(F(1, 4), F(1, 2)), psi) < 0.05


def test_omega_against_k_envelope(builder):
    env = omega_vs_k_envelope(builder, [F(1, 4), F(1, 8)])
    assert env.const_minus >= 0 and env.const_plus >= 0
    assert np.isfinite(env.const_minus) and np.isfinite(env.const_plus)


def test_ode_residual_small(builder, mesh):
    hat = make_field("hat").value(mesh.nodes)
    node = int(np.argmin(np.abs(mesh.centers[:, 0])))
    r = ode_residual(builder, node, F(1, 2), F(3, 4), hat, n_quad=4)
    assert r.residual < 1e-5
    assert abs(r.lhs) > 100 * r.residual


@given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.floats(0.01, 0.3))
@settings(max_examples=15, deadline=None)
def test_pi_rows_integrate_to_one(weights, eps):
    m = SMALL.build(flat_graph())
    b = OmegaBuilder(KernelFactory(m, make_field("pole")), OmegaConfig(epsilon=eps))
    total = sum(weights)
    breaks, acc = [F(1, 4)], 0
    for w in weights:
        acc += w
        breaks.append(F(1, 4) + F(acc, 4 * total))
    pi = b.iterate_pi(Partition.from_breaks(breaks))
    assert np.max(np.abs(pi.row_integrals() - 1)) < 1e-10


@given(st.integers(0, 3))
@settings(max_examples=4, deadline=None)
def test_dyadic_pi_depends_only_on_partition(n):
    m = SMALL.build(flat_graph())
    b = OmegaBuilder(KernelFactory(m, make_field("pole")))
    p1 = b.iterate_pi(make_dyadic(seg(F(1, 4), F(1, 2)), n))
    p2 = b.iterate_pi(make_dyadic(seg(F(1, 4), F(1, 2)), n))
    np.testing.assert_array_equal(p1.mass, p2.mass)
