import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radvar.errors import EmptyBall, LipschitzViolation, OutsideDomain, SupportViolation
from radvar.experiments import MeshSpec
from radvar.geometry import (
    BoundaryMesh,
    LipschitzGraph,
    build_boundary_mesh,
    build_graph,
    distance_to_boundary,
    flat_graph,
    random_pl_graph,
    surface_ball,
    tent_graph,
)


@pytest.fixture(scope="module")
def mesh():
    return MeshSpec().build(flat_graph())


def test_default_mesh_size_and_tail(mesh):
    # cell count of the graded default mesh; tail mass of the Cauchy law past R
    assert mesh.size == 618
    assert mesh.tail_mass == pytest.approx(1 - 2 / math.pi * math.atan(1e4), rel=1e-9)
    assert mesh.weights.sum() + mesh.tail_mass == pytest.approx(1.0, abs=1e-14)


def test_refinement_levels_grow_the_mesh():
    sizes = [MeshSpec().refined(lv).build(flat_graph()).size for lv in range(3)]
    assert sizes == [618, 1262, 2584]


def test_flat_graph_constant():
    g = flat_graph(L=0.1)
    assert g.c_S == pytest.approx(1 / math.sqrt(1.01))
    assert g.is_flat


def test_tent_lipschitz_and_apex():
    g = tent_graph(height=0.1, r=0.5)
    assert g.lipschitz == pytest.approx(0.2, rel=1e-9)
    assert g.phi(np.array([[0.0]]))[0] == pytest.approx(0.1)
    assert g.phi(np.array([[0.7]]))[0] == 0.0


def test_random_graph_respects_declared_constant():
    g = random_pl_graph(L=0.3, seed=4)
    assert g.measured_lipschitz <= 0.3


def test_graph_validation_errors():
    ax = np.linspace(-0.5, 0.5, 5)
    with pytest.raises(LipschitzViolation):
        build_graph(ax, np.array([0, 0, 0.3, 0, 0]), 0.5, 0.5)
    wide = np.linspace(-0.6, 0.6, 7)
    with pytest.raises(SupportViolation):
        build_graph(wide, np.array([0.05, 0, 0, 0, 0, 0, 0]), 1.0, 0.5)
    with pytest.raises(SupportViolation):
        build_graph(ax, np.zeros(5), 1.0, 1.5)


def test_pole_below_graph_rejected():
    with pytest.raises(OutsideDomain):
        build_boundary_mesh(flat_graph(), 100, 0.1, [0.0, -0.5])


def test_graph_and_mesh_json_round_trip(tmp_path, mesh):
    g = tent_graph()
    assert LipschitzGraph.from_dict(g.to_dict()).to_dict() == g.to_dict()
    mesh.to_json(tmp_path / "m.json")
    back = BoundaryMesh.from_json(tmp_path / "m.json")
    np.testing.assert_array_equal(back.weights, mesh.weights)
    np.testing.assert_array_equal(back.nodes, mesh.nodes)


def test_surface_ball(mesh):
    idx = surface_ball(mesh, [0.0], 0.1)
    assert np.all(np.abs(mesh.centers[idx, 0]) <= 0.1)
    with pytest.raises(EmptyBall):
        surface_ball(mesh, [0.0], 1e-5)


@given(st.floats(-3, 3), st.floats(0.01, 2))
@settings(max_examples=50, deadline=None)
def test_flat_distance_is_height(x, y):
    assert distance_to_boundary(flat_graph(), np.array([x, y])) == pytest.approx(y)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
@settings(max_examples=50, deadline=None)
def test_locate_finds_the_containing_cell(xs):
    m = build_boundary_mesh(flat_graph(), 100, 1 / 8, [0.0, 1.0])
    idx = m.locate(np.array(xs)[:, None])
    for x, i in zip(xs, idx):
        assert m.lo[i, 0] <= x <= m.hi[i, 0]


@given(st.floats(0.05, 3.0))
@settings(max_examples=20, deadline=None)
def test_tent_distance_never_exceeds_height(y):
    g = tent_graph()
    p = np.array([0.1, g.phi(np.array([[0.1]]))[0] + y])
    assert 0 < distance_to_boundary(g, p) <= y + 1e-12
