"""Variation functional, dual densities, the limit measure and ball-mass scaling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import harmonic
from .errors import (
    EmptyBall,
    GridTooCoarse,
    InsufficientRadii,
    NonPositive,
    NotCauchy,
    PreconditionViolated,
)
from .geometry import BoundaryMesh, ball_fractions, surface_ball
from .harmonic import HarmonicField, harnack_envelope
from .kernels import KernelFactory
from .omega import OmegaBuilder
from .partitions import as_fraction


@dataclass
class MeasureOnMesh:
    """Nonnegative mass per mesh cell."""
    weights: np.ndarray
    provenance: str
    meta: dict = dc_field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def integrate(self, data) -> float:
        return float(np.dot(self.weights, data))

    def ball_mass(self, mesh: BoundaryMesh, center, radius: float) -> float:
        return float(np.dot(self.weights, ball_fractions(mesh, center, radius)))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "provenance": self.provenance,
                "total": self.total, "meta": self.meta}


def point_mass(mesh: BoundaryMesh, node: int) -> MeasureOnMesh:
    w = np.zeros(mesh.size)
    w[node] = 1.0
    return MeasureOnMesh(w, f"point mass at node {node}")


def pole_measure(mesh: BoundaryMesh) -> MeasureOnMesh:
    return MeasureOnMesh(mesh.weights.copy(), "pole measure")


def kappa_anchor(mesh: BoundaryMesh, center, y_anchor: float, n_walks: int = 20000,
                 seed: int = 0) -> MeasureOnMesh:
    """Hitting law from z + (y_anchor - 1) e_d for z on S above ``center``.

    With this choice the integral of u_1 equals u(z + y_anchor e_d).
    """
    if y_anchor <= 1:
        raise PreconditionViolated("y_anchor must exceed 1")
    c = np.asarray(center, dtype=float)
    z = mesh.graph.lift(c[None] if c.shape[-1] == mesh.dim - 1 else c[None, :-1])[0]
    start = z.copy()
    start[-1] += y_anchor - 1
    w = harmonic.cell_masses(mesh, start[None], n_walks, seed)[0]
    return MeasureOnMesh(w, "anchor hitting law",
                         {"center": z.tolist(), "y_anchor": y_anchor, "start": start.tolist()})


def kappa_uniform(mesh: BoundaryMesh, center, radius: float) -> MeasureOnMesh:
    """Pole measure restricted to a surface ball and normalized."""
    frac = ball_fractions(mesh, center, radius) * mesh.weights
    if frac.sum() <= 0:
        raise EmptyBall("ball carries no mass")
    return MeasureOnMesh(frac / frac.sum(), "uniform over ball",
                         {"center": np.asarray(center).tolist(), "radius": radius})


# --------------------------------------------------------------- variation

def height_grid(delta: float, per_octave: int = 6) -> np.ndarray:
    """Geometric grid from delta to 1 with ``per_octave`` steps per doubling."""
    if not 0 < delta < 1:
        raise ValueError("lower cut must lie in (0, 1)")
    n = max(2, int(math.ceil(per_octave * math.log2(1 / delta))))
    return np.geomspace(delta, 1.0, n + 1)


def _log_trapezoid(ys: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """int f dy over the grid, trapezoid in log y; vals has shape (len(ys), m)."""
    s = np.log(ys)
    g = vals * ys[:, None]
    return np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(s)[:, None], axis=0)


@dataclass
class VariationProfile:
    nodes: np.ndarray          # mesh node indices
    values: np.ndarray         # V at those nodes
    radial: np.ndarray         # int_delta^1 ||grad u(x_t)|| dt
    lower: np.ndarray          # int_delta^1 ||grad u(x_{3y})|| dy
    grid: np.ndarray
    delta: float
    method: str
    coarse_change: float

    @property
    def dominates_lower(self) -> bool:
        tol = 1e-3 * max(1.0, float(np.max(np.abs(self.lower))))
        return bool(np.all(self.values >= self.lower - tol))

    def value_at(self, node: int) -> float:
        return float(self.values[np.nonzero(self.nodes == node)[0][0]])

    def csv_rows(self) -> list:
        return [("node", "V", "radial_var", "lower_bound")] + [
            (int(n), float(v), float(r), float(lo))
            for n, v, r, lo in zip(self.nodes, self.values, self.radial, self.lower)]

    def to_dict(self) -> dict:
        return {"nodes": self.nodes.tolist(), "values": self.values.tolist(),
                "radial": self.radial.tolist(), "lower": self.lower.tolist(),
                "grid": self.grid.tolist(), "delta": self.delta, "method": self.method,
                "coarse_change": self.coarse_change}


def _grad_norm(field: HarmonicField, points) -> np.ndarray:
    return np.linalg.norm(field.gradient(points), axis=1)


def _integrand(factory: KernelFactory, field: HarmonicField, nodes, y: float, method: str,
               n_walks: int, seed: int, shell: float) -> np.ndarray:
    mesh = factory.mesh
    if method == "kernel":
        g = _grad_norm(field, mesh.shifted_nodes(2 * y))
        return factory.k(y).mass[nodes] @ g
    if method == "b_route":
        u_y = field.value(mesh.shifted_nodes(y))
        return factory.b(y).mass[nodes] @ u_y
    if method == "sampling":
        starts = mesh.shifted_nodes(y)[nodes]
        exits = harmonic.sample_exits(mesh.graph, starts, n_walks, seed, shell)
        lifted = exits.reshape(-1, mesh.dim).copy()
        lifted[:, -1] += 2 * y
        return _grad_norm(field, lifted).reshape(len(nodes), n_walks).mean(axis=1)
    raise ValueError(f"unknown variation method {method!r}")


def variation_profile(factory: KernelFactory, field: HarmonicField, delta: float = 2.0**-7,
                      grid=None, nodes=None, method: str = "auto", n_walks: int = 2000,
                      seed: int = 0, shell: float = 1e-4, check_grid: bool = True,
                      grid_tol: float = 0.05) -> VariationProfile:
    """V(x) = int_delta^1 (K_y ||grad u_{2y}||)(x) dy at the requested nodes.

    ``method`` is "kernel" (mesh kernels), "b_route" (int B_y u_y, which
    must agree with the kernel route), "sampling" (walk-on-spheres exits,
    for curved graphs) or "auto".  The grid is geometric; halving it must
    change V by at most ``grid_tol`` relative, else GridTooCoarse.
    """
    mesh = factory.mesh
    if not 0 < delta < 0.25:
        raise ValueError("lower cut must lie in (0, 1/4)")
    if method == "auto":
        method = "kernel" if mesh.graph.is_flat else "sampling"
    ys = height_grid(delta) if grid is None else np.asarray(grid, dtype=float)
    if len(ys) % 2 == 0:
        ys = np.geomspace(ys[0], ys[-1], len(ys) + 1)
    nodes = np.arange(mesh.size) if nodes is None else np.asarray(nodes)
    vals = np.array([_integrand(factory, field, nodes, y, method, n_walks, seed, shell) for y in ys])
    V = _log_trapezoid(ys, vals)
    Vc = _log_trapezoid(ys[::2], vals[::2])
    scale = max(float(np.max(np.abs(V))), 1e-300)
    change = float(np.max(np.abs(V - Vc)) / scale)
    if check_grid and change > grid_tol:
        raise GridTooCoarse(f"halving the height grid moves V by {change:.3g}")
    base = mesh.nodes[nodes]
    radial, lower = [], []
    for y in ys:
        p = base.copy()
        p[:, -1] += y
        radial.append(_grad_norm(field, p))
        p[:, -1] += 2 * y
        lower.append(_grad_norm(field, p))
    return VariationProfile(nodes, V, _log_trapezoid(ys, np.array(radial)),
                            _log_trapezoid(ys, np.array(lower)), ys, float(delta), method, change)


# ------------------------------------------------------------------ duals

def gamma_density(builder: OmegaBuilder, kappa: MeasureOnMesh, y) -> MeasureOnMesh:
    """Cell masses of gamma_y against the pole measure: sum_i kappa_i omega_y[i, .]."""
    y = as_fraction(y)
    if not 0 < y < 1:
        raise ValueError("height must lie in (0, 1)")
    mass = kappa.weights @ builder.omega_height(y).mass
    if np.any(mass < 0):
        raise NonPositive(f"gamma_y has negative mass {mass.min():.3g}; epsilon too large")
    return MeasureOnMesh(mass, "dual density", {"y": str(y), "epsilon": builder.cfg.epsilon})


def duality_gap(builder: OmegaBuilder, kappa: MeasureOnMesh, y, alpha) -> float:
    """Relative gap between <Omega_y alpha, kappa> and <alpha, gamma_y>."""
    om = builder.omega_height(y).mass
    lhs = float(kappa.weights @ (om @ alpha))
    rhs = float((kappa.weights @ om) @ alpha)
    return abs(lhs - rhs) / max(abs(lhs), 1e-300)


def test_functions(mesh: BoundaryMesh, count: int = 10, seed: int = 0) -> np.ndarray:
    """Smooth bumps on the evaluation window as node values, shape (count, N)."""
    rng = np.random.default_rng(seed)
    x = mesh.centers
    out = []
    for _ in range(count):
        c = rng.uniform(-mesh.eval_radius, mesh.eval_radius, x.shape[1])
        s = rng.uniform(0.1, 0.5)
        out.append(np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * s * s)))
    return np.array(out)


@dataclass
class NuApproximation:
    measure: MeasureOnMesh
    heights: list
    integrals: np.ndarray      # (len(heights), count)
    totals: list
    differences: list          # max change of test integrals between consecutive heights

    def to_dict(self) -> dict:
        return {"heights": self.heights, "integrals": self.integrals.tolist(),
                "totals": self.totals, "differences": self.differences,
                "y_min": self.heights[-1], "total": self.measure.total}


def nu_approx(builder: OmegaBuilder, kappa: MeasureOnMesh, heights, tests=None,
              tol: float = 5e-3) -> NuApproximation:
    """gamma_{y_min} along a decreasing height sequence, with a Cauchy check.

    The last change of the test integrals must be below ``tol`` relative to
    their size, else NotCauchy.
    """
    ys = [as_fraction(y) for y in heights]
    if any(a <= b for a, b in zip(ys, ys[1:])):
        raise ValueError("heights must decrease")
    tests = test_functions(builder.mesh) if tests is None else np.asarray(tests)
    rows, totals, last = [], [], None
    for y in ys:
        last = gamma_density(builder, kappa, y)
        rows.append(tests @ last.weights)
        totals.append(last.total)
    ints = np.array(rows)
    scale = np.maximum(np.abs(ints[-1]), 1e-300)
    diffs = [float(np.max(np.abs(a - b) / scale)) for a, b in zip(ints[1:], ints[:-1])]
    if diffs and diffs[-1] > tol:
        raise NotCauchy(f"test integrals still move by {diffs[-1]:.3g} at y = {ys[-1]}")
    last.provenance = "limit measure approximation"
    return NuApproximation(last, [str(y) for y in ys], ints, totals, diffs)


def sequence_agreement(a: NuApproximation, b: NuApproximation) -> float:
    """Largest relative disagreement of the final test integrals."""
    x, y = a.integrals[-1], b.integrals[-1]
    return float(np.max(np.abs(x - y) / np.maximum(np.abs(x), 1e-300)))


@dataclass
class BudgetResult:
    lhs: float
    rhs: float
    epsilon: float
    constant: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def budget_check(nu: MeasureOnMesh, profile: VariationProfile, kappa: MeasureOnMesh,
                 field: HarmonicField, mesh: BoundaryMesh, epsilon: float) -> BudgetResult:
    """int V dnu against int u_1 dkappa; constant = lhs * eps / rhs.

    The profile must cover every node carrying mass of nu.
    """
    V = np.zeros(mesh.size)
    V[profile.nodes] = profile.values
    missing = np.setdiff1d(np.nonzero(nu.weights)[0], profile.nodes)
    if len(missing):
        raise PreconditionViolated(f"{len(missing)} charged nodes lack V values")
    lhs = float(nu.weights @ V)
    rhs = float(kappa.weights @ field.value(mesh.shifted_nodes(1.0)))
    return BudgetResult(lhs, rhs, epsilon, lhs * epsilon / rhs)


@dataclass
class BourgainResult:
    node: int
    point: list
    variation: float
    anchor_value: float
    ratio: float
    transfer_measured: float
    transfer_bound: float
    ball_size: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def bourgain_search(mesh: BoundaryMesh, profile: VariationProfile, center, radius: float,
                    field: HarmonicField, y_anchor: float) -> BourgainResult:
    """Node of least variation in the ball and its ratio V / u(x_{y_anchor}).

    Also records u(z_y)/u(x*_y) next to the Harnack bound
    (1 + t)^(d-1)/(1 - t), t = |z_y - x*_y| / c_S.
    """
    if y_anchor <= 1:
        raise PreconditionViolated("y_anchor must exceed 1")
    ball = surface_ball(mesh, center, radius)
    inside = np.isin(profile.nodes, ball)
    if not inside.any():
        raise EmptyBall("profile has no nodes in the ball")
    cand = profile.nodes[inside]
    vals = profile.values[inside]
    k = int(np.argmin(vals))
    node = int(cand[k])
    x_anchor = mesh.nodes[node].copy()
    x_anchor[-1] += y_anchor
    u_anchor = float(field.value(x_anchor[None])[0])
    c = np.asarray(center, dtype=float)
    z = mesh.graph.lift(c[None] if c.shape[-1] == mesh.dim - 1 else c[None, :-1])[0]
    z[-1] += y_anchor
    u_z = float(field.value(z[None])[0])
    dist = float(np.linalg.norm(z - x_anchor))
    c_S = mesh.graph.c_S
    if dist < c_S:
        lo, _ = harnack_envelope(1.0, dist, c_S, mesh.dim)
        bound = 1.0 / lo
    else:
        bound = math.inf
    return BourgainResult(node, mesh.nodes[node].tolist(), float(vals[k]), u_anchor,
                          float(vals[k]) / u_anchor, u_z / u_anchor, bound, int(len(cand)))


@dataclass
class ScalingFit:
    slope: float
    stderr: float
    radii: list
    masses: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def scaling_exponent(measure: MeasureOnMesh, mesh: BoundaryMesh, center, radii,
                     min_radii: int = 4) -> ScalingFit:
    """Least-squares slope of log nu(B(center, r)) against log r."""
    rs = np.asarray(radii, dtype=float)
    if np.any(np.diff(rs) >= 0):
        raise ValueError("radii must decrease")
    masses = np.array([measure.ball_mass(mesh, center, r) for r in rs])
    usable = (masses > 0) & (rs >= mesh.resolution)
    if usable.sum() < min_radii:
        raise InsufficientRadii(f"only {int(usable.sum())} usable radii")
    x, y = np.log(rs[usable]), np.log(masses[usable])
    A = np.column_stack([np.ones_like(x), x])
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    n = len(x)
    resid = y - A @ coef
    s2 = float(resid @ resid) / max(n - 2, 1)
    stderr = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    return ScalingFit(float(coef[1]), stderr, rs.tolist(), masses.tolist())
