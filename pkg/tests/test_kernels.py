import numpy as np
import pytest
from fractions import Fraction as F
from hypothesis import given, settings, strategies as st

from radvar.errors import QuadratureUnstable, ShapeMismatch
from radvar.experiments import MeshSpec, make_field
from radvar.geometry import build_boundary_mesh, flat_graph, tent_graph
from radvar.kernels import (
    DiscreteKernel,
    KernelFactory,
    b_bound_constant,
    c_bound_constant,
    compose,
    fit_quotient_exponent,
    identity_kernel,
    load_kernel,
    martin_kernel_row,
    max_entry,
    max_entry_distance,
    row_l1_norm,
    save_kernel,
    segment,
    window,
)

SMALL = MeshSpec(resolution=1 / 64, R_trunc=1e3)


@pytest.fixture(scope="module")
def mesh():
    return SMALL.build(flat_graph())


@pytest.fixture(scope="module")
def oracle(mesh):
    return KernelFactory(mesh, make_field("pole"), scheme="oracle")


@pytest.fixture(scope="module")
def model(mesh):
    return KernelFactory(mesh, make_field("pole"), scheme="semigroup")


@pytest.mark.parametrize("y", [0.125, 0.25, 0.5, 1.0])
def test_k_row_integrals_lose_only_the_tail(oracle, mesh, y):
    rows = mesh.eval_mask()
    leak = 1 - oracle.k(y).row_integrals()[rows]
    # mass past R_trunc seen from height y is about 2y/(pi R)
    assert np.all(leak >= 0)
    assert leak.max() < 2 * 2 * y / (np.pi * mesh.R_trunc)


@pytest.mark.parametrize("y", [0.125, 0.5, 1.0])
def test_c_and_b_annihilate_constants(oracle, model, y):
    for f in (oracle, model):
        assert np.max(np.abs(f.c(y).row_integrals())) < 1e-12
        assert np.max(np.abs(f.b(y).row_integrals())) < 1e-12


@pytest.mark.parametrize("y", [0.125, 0.25, 0.5])
def test_c_applied_to_trace_is_gradient_norm(oracle, mesh, y):
    u = oracle.field
    rows = np.nonzero(mesh.eval_mask())[0][::3][:50]
    lhs = oracle.c(y).mass[rows] @ oracle.trace(u, y)
    rhs = np.linalg.norm(u.gradient(mesh.shifted_nodes(2 * y)[rows]), axis=1)
    np.testing.assert_allclose(lhs, rhs, rtol=2e-3)


def test_semigroup_model_is_an_exact_semigroup(model, mesh):
    rows, cols = window(mesh)
    direct = model.k(0.75)
    comp = compose(model.k(0.25), model.k(0.5))
    assert max_entry_distance(comp, direct, rows, cols) / max_entry(direct, rows, cols) < 1e-9
    assert np.max(np.abs(model.k(0.3).row_integrals() - 1)) < 1e-10


def test_semigroup_model_close_to_oracle(model, oracle, mesh):
    rows, cols = window(mesh)
    for y in (0.25, 0.5, 1.0):
        d = max_entry_distance(model.k(y), oracle.k(y), rows, cols)
        assert d / max_entry(oracle.k(y), rows, cols) < 2e-2


def test_c_and_b_bounded_by_k_over_y(oracle):
    # for the Cauchy kernel |grad k| y / k = 2|x|y/(x^2+y^2) or |y^2-x^2|/(x^2+y^2), at most 1
    c_consts = [c_bound_constant(oracle, y) for y in (0.125, 0.25, 0.5)]
    assert max(c_consts) <= 1 + 1e-6
    fine = KernelFactory(SMALL.refined(1).build(flat_graph()), make_field("pole"), scheme="oracle")
    for y in (0.125, 0.5):
        assert b_bound_constant(fine, y) == pytest.approx(b_bound_constant(oracle, y), rel=1e-2)


def test_constant_field_gives_zero_c_and_b(mesh):
    f = KernelFactory(mesh, make_field("constant"))
    assert not np.any(f.c(0.3).mass)
    assert not np.any(f.b_segment(segment(F(1, 4), F(1, 2))).mass)
    np.testing.assert_array_equal(f.omega_tilde(segment(F(1, 4), F(1, 2)), 0.3).mass, f.k(0.25).mass)


def test_b_segment_quadrature_converges(model):
    d = segment(F(1, 4), F(1, 2))
    coarse = model.b_segment(d, 4).mass
    fine = model.b_segment(d, 8).mass
    finer = model.b_segment(d, 16).mass
    e1, e2 = np.abs(fine - coarse).max(), np.abs(finer - fine).max()
    assert e2 < 0.35 * e1
    with pytest.raises(QuadratureUnstable):
        model.b_segment(d, 1, adaptive=True, tol=1e-14, max_quad=4)


def test_compose_shape_mismatch(mesh):
    a = identity_kernel(mesh)
    other = build_boundary_mesh(flat_graph(), 100, 0.25, [0.0, 1.0])
    with pytest.raises(ShapeMismatch):
        compose(a, identity_kernel(other))


def test_save_load_round_trip(tmp_path, model):
    k = model.k(0.5)
    bin_path, json_path = save_kernel(k, tmp_path / "k")
    raw = np.fromfile(bin_path, dtype="<f8").reshape(k.shape)
    np.testing.assert_array_equal(raw, k.mass)
    back = load_kernel(tmp_path / "k")
    np.testing.assert_array_equal(back.mass, k.mass)
    np.testing.assert_array_equal(back.weights, k.weights)
    assert back.kind == "k_y" and back.height == 0.5


def test_row_l1_of_stochastic_kernel(model, mesh):
    assert row_l1_norm(model.k(0.5), mesh.eval_mask()) == pytest.approx(1.0, abs=1e-10)


def test_quotient_exponent_is_fitted(oracle):
    fit = fit_quotient_exponent(oracle, [0.125, 0.25, 0.5, 1.0])
    assert 0 < fit.alpha < 3


def test_martin_row_on_tent_flags_nothing_near_origin():
    g = tent_graph()
    m = build_boundary_mesh(g, 100, 0.125, [0.0, 1.0], n_walks=20_000)
    row, flagged = martin_kernel_row(m, [0.0, 0.5], n_walks=20_000)
    central = np.abs(m.centers[:, 0]) < 0.5
    assert not flagged[central].any()
    assert np.all(np.isfinite(row[central]))


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
@settings(max_examples=15, deadline=None)
def test_composition_is_associative(a, b, c):
    m = build_boundary_mesh(flat_graph(), 100, 0.25, [0.0, 1.0])
    f = KernelFactory(m, make_field("pole"), scheme="oracle")
    left = compose(compose(f.k(a), f.k(b)), f.k(c))
    right = compose(f.k(a), compose(f.k(b), f.k(c)))
    np.testing.assert_allclose(left.mass, right.mass, atol=1e-13)


@given(st.floats(0.01, 2.0))
@settings(max_examples=20, deadline=None)
def test_identity_is_neutral(y):
    m = build_boundary_mesh(flat_graph(), 100, 0.25, [0.0, 1.0])
    k = KernelFactory(m, scheme="oracle").k(y)
    np.testing.assert_array_equal(compose(identity_kernel(m), k).mass, k.mass)


def test_zero_weight_columns_are_flagged(mesh):
    w = mesh.weights.copy()
    w[0] = 0.0
    k = DiscreteKernel(np.eye(len(w)), w, "identity")
    assert k.zero_weight[0] and not k.zero_weight[1:].any()
