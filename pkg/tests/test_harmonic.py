import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radvar import harmonic
from radvar.errors import InvalidHeights, InvalidRadii, OutsideDomain, StepTooLarge
from radvar.geometry import build_boundary_mesh, flat_graph, tent_graph
from radvar.harmonic import (
    HarnackConstants,
    PiecewiseLinearDataField,
    PoissonPoleField,
    chain_quotient_bounds,
    estimate_harmonic_measure,
    gradient,
    gradient_bound_ratio,
    halfspace_cell_masses,
    harnack_envelope,
    sample_hitting_points,
)


def laplacian(field, p, h=1e-3):
    p = np.asarray(p, dtype=float)
    total = -2 * len(p) * field.value(p[None])[0]
    for k in range(len(p)):
        e = np.zeros_like(p)
        e[k] = h
        total += field.value((p + e)[None])[0] + field.value((p - e)[None])[0]
    return total / h**2


def test_cell_masses_match_arctan_closed_form():
    lo, hi = np.array([[-1.0], [0.0]]), np.array([[0.0], [2.0]])
    m = halfspace_cell_masses(lo, hi, [[0.0, 1.0]])[0]
    assert m[0] == pytest.approx(0.25)
    assert m[1] == pytest.approx(math.atan(2) / math.pi)


def test_cell_masses_three_dims_sum_to_one():
    big = 1e9
    m = halfspace_cell_masses(np.array([[-big, -big]]), np.array([[big, big]]), [[0.3, -0.2, 0.7]])
    assert m[0] == pytest.approx(1.0, abs=1e-8)
    quarter = halfspace_cell_masses(np.array([[0.0, 0.0]]), np.array([[big, big]]), [[0, 0, 1.0]])
    assert quarter[0] == pytest.approx(0.25, abs=1e-8)


def test_oracle_rejects_points_below():
    with pytest.raises(OutsideDomain):
        halfspace_cell_masses(np.array([[0.0]]), np.array([[1.0]]), [[0.0, -1.0]])


def test_hitting_points_reproducible_and_on_boundary():
    g = flat_graph()
    a = sample_hitting_points(g, [0.0, 1.0], 5000, seed=3)
    b = sample_hitting_points(g, [0.0, 1.0], 5000, seed=3)
    np.testing.assert_array_equal(a, b)
    assert np.all(a[:, -1] == 0.0)
    c = sample_hitting_points(g, [0.0, 1.0], 5000, seed=4)
    assert not np.array_equal(a, c)


def test_tent_exits_lie_on_the_tent():
    g = tent_graph()
    ex = sample_hitting_points(g, [0.0, 0.5], 2000, seed=1)
    np.testing.assert_allclose(ex[:, -1], g.phi(ex[:, :-1]), atol=1e-12)


def test_monte_carlo_measure_within_standard_errors():
    g = flat_graph()
    mesh = build_boundary_mesh(g, 100, 0.25, [0.0, 1.0])
    est = estimate_harmonic_measure(g, [0.0, 1.0], mesh, 40_000, seed=2)
    exact = np.append(mesh.weights, mesh.tail_mass)
    z = (est.masses - exact) / np.maximum(est.std_errors, 1e-12)
    assert np.mean(np.abs(z) < 3) > 0.97
    assert est.masses.sum() == pytest.approx(1.0)


@given(st.floats(-2, 2), st.floats(0.1, 3))
@settings(max_examples=40, deadline=None)
def test_pole_field_is_harmonic(x, y):
    f = PoissonPoleField([0.0, -0.5])
    assert abs(laplacian(f, [x, y])) < 1e-4 * max(1.0, f.value(np.array([[x, y]]))[0] / y**2)


@given(st.floats(-2, 2), st.floats(0.2, 3))
@settings(max_examples=40, deadline=None)
def test_hat_field_is_harmonic_and_positive(x, y):
    f = PiecewiseLinearDataField.hat(0.0, 1.0, 1.0)
    v = f.value(np.array([[x, y]]))[0]
    assert v > 0
    assert abs(laplacian(f, [x, y])) < 1e-4


def test_hat_field_boundary_values():
    f = PiecewiseLinearDataField.hat(0.0, 1.0, 1.0)
    xs = np.array([-1.5, -0.5, 0.0, 0.25, 2.0])
    vals = f.value(np.column_stack([xs, np.full_like(xs, 1e-7)]))
    np.testing.assert_allclose(vals, [0.0, 0.5, 1.0, 0.75, 0.0], atol=1e-5)


@given(st.floats(-2, 2), st.floats(0.05, 2))
@settings(max_examples=40, deadline=None)
def test_gradient_bound_holds(x, y):
    f = PoissonPoleField([0.0, -1.0])
    assert gradient_bound_ratio(f, flat_graph(), [[x, y]])[0] <= 1.0


def test_finite_difference_gradient_matches_analytic():
    g = flat_graph()
    mesh = build_boundary_mesh(g, 100, 0.25, [0.0, 1.0])
    f = PoissonPoleField([0.0, -1.0])
    p = np.array([0.3, 0.4])
    np.testing.assert_allclose(gradient(f, mesh, p), f.gradient(p[None])[0], rtol=1e-5)
    with pytest.raises(StepTooLarge):
        gradient(f, mesh, p, h=0.3)


@given(st.floats(0, 0.99), st.sampled_from([2, 3]))
@settings(max_examples=40, deadline=None)
def test_harnack_envelope_brackets_poisson_kernel(q, d):
    # u(x) = (1 - |x|^2)/|x - e|^d is positive harmonic in the unit ball
    e = np.zeros(d)
    e[0] = 1.0
    x = np.zeros(d)
    x[0] = -q
    u = (1 - q * q) / np.linalg.norm(x - e) ** d
    lo, hi = harnack_envelope(1.0, q, 1.0, d)
    assert lo * (1 - 1e-12) <= u <= hi * (1 + 1e-12)


def test_harnack_errors():
    with pytest.raises(InvalidRadii):
        harnack_envelope(1.0, 1.0, 1.0, 2)
    with pytest.raises(InvalidHeights):
        chain_quotient_bounds(HarnackConstants.from_lipschitz(0.1, 2), 0.5, 0.25)


def test_chain_bounds_hold_on_flat_pole_field():
    consts = HarnackConstants.from_lipschitz(0.1, 2)
    f = PoissonPoleField([0.0, -1.0])
    for x in (-0.5, 0.0, 0.7):
        for y1, y2 in ((0.01, 0.1), (0.05, 1.0), (0.2, 0.4)):
            lo, hi = chain_quotient_bounds(consts, y1, y2)
            r = f.value(np.array([[x, y2]]))[0] / f.value(np.array([[x, y1]]))[0]
            assert lo <= r <= hi
