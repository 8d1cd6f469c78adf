"""Harmonic measure, extensions and Harnack-type bounds.

Walk-on-spheres estimates the exit distribution on a PL graph; the flat half
space has closed forms that serve as the oracle.  Test functions are
``HarmonicField`` objects exposing values and gradients.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidHeights,
    InvalidRadii,
    MaxStepsExceeded,
    OutsideDomain,
    StepTooLarge,
)
from .geometry import BoundaryMesh, LipschitzGraph, nearest_boundary_point

GRADIENT_FLOOR = 1e-10
_BIG = 1e15


# ------------------------------------------------------------ flat oracle

def halfspace_constant(d: int) -> float:
    """Normalizing constant of the half-space Poisson kernel in R^d."""
    return math.gamma(d / 2) / math.pi ** (d / 2)


def halfspace_kernel_oracle(d: int, y, x, xi):
    """Poisson kernel of {t > 0} in R^d at (x, y) against boundary point xi."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("height must be positive")
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if d == 2:
        r2 = (np.asarray(x) - np.asarray(xi)) ** 2
    else:
        r2 = np.sum((x - xi) ** 2, axis=-1)
    return halfspace_constant(d) * y / (r2 + y**2) ** (d / 2)


def _corner(u, v, h):
    # harmonic measure of the quadrant [0,u]x[0,v] (signed) seen from height h
    u = np.clip(u, -_BIG, _BIG)
    v = np.clip(v, -_BIG, _BIG)
    return np.arctan(u * v / (h * np.sqrt(u * u + v * v + h * h))) / (2 * np.pi)


def halfspace_cell_masses(lo, hi, points) -> np.ndarray:
    """Exact hitting probabilities of box cells for the flat half space.

    ``lo``/``hi`` are (N, d-1) box corners (entries may be infinite);
    ``points`` is (m, d) with positive last coordinate.  Returns (m, N).
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    Y = p[:, -1][:, None]
    if np.any(Y <= 0):
        raise OutsideDomain("oracle points must lie above the flat boundary")
    if lo.shape[1] == 1:
        X = p[:, 0][:, None]
        return (np.arctan2(hi[:, 0] - X, Y) - np.arctan2(lo[:, 0] - X, Y)) / np.pi
    if lo.shape[1] == 2:
        X0, X1 = p[:, 0][:, None], p[:, 1][:, None]
        a0, b0 = lo[:, 0] - X0, hi[:, 0] - X0
        a1, b1 = lo[:, 1] - X1, hi[:, 1] - X1
        return _corner(b0, b1, Y) - _corner(a0, b1, Y) - _corner(b0, a1, Y) + _corner(a0, a1, Y)
    raise NotImplementedError("closed-form cell masses are implemented for d = 2, 3")


def halfspace_cell_mass_gradients(lo, hi, points) -> np.ndarray:
    """Gradient of the cell masses in the start point, shape (m, N, d)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape[1] == 1:
        X = p[:, 0][:, None]
        Y = p[:, 1][:, None]
        gx = np.zeros((len(p), len(lo)))
        gy = np.zeros((len(p), len(lo)))
        for edge, sign in ((hi[:, 0], 1.0), (lo[:, 0], -1.0)):
            fin = np.isfinite(edge)
            d = np.where(fin, edge, 0.0) - X
            r2 = Y * Y + d * d
            gx += sign * np.where(fin, -Y / r2, 0.0)
            gy += sign * np.where(fin, -d / r2, 0.0)
        return np.stack([gx, gy], axis=-1) / np.pi
    out = np.empty((len(p), len(lo), p.shape[1]))
    for k in range(p.shape[1]):
        h = 1e-6 * p[:, -1]
        e = np.zeros(p.shape[1])
        e[k] = 1.0
        up = halfspace_cell_masses(lo, hi, p + h[:, None] * e)
        dn = halfspace_cell_masses(lo, hi, p - h[:, None] * e)
        out[..., k] = (up - dn) / (2 * h[:, None])
    return out


def cauchy_cdf(xi, x, y):
    """Hitting-law CDF on the line for the half plane, start (x, y)."""
    return 0.5 + np.arctan((np.asarray(xi) - x) / y) / np.pi


# --------------------------------------------------------- walk on spheres

def _unit_vectors(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def wos_sample(graph: LipschitzGraph, start, shell: float, rng: np.random.Generator,
               max_steps: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Run walk-on-spheres from each start point until the shell is entered.

    Returns the exit points (projected onto S) and the step counts.
    ``start`` may be one point or an (n, d) array.
    """
    if shell <= 0:
        raise ValueError("shell must be positive")
    pos = np.array(np.atleast_2d(start), dtype=float)
    if np.any(graph.height_above(pos) <= 0):
        raise OutsideDomain("walks must start strictly above the graph")
    n, d = pos.shape
    exits = np.empty_like(pos)
    steps = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    for _ in range(max_steps):
        dist, q = nearest_boundary_point(graph, pos[active])
        done = dist < shell
        if done.any():
            exits[active[done]] = q[done]
            keep = ~done
            active, dist = active[keep], dist[keep]
        if len(active) == 0:
            return exits, steps
        pos[active] += dist[:, None] * _unit_vectors(rng, len(active), d)
        steps[active] += 1
    raise MaxStepsExceeded(f"{len(active)} walks still active after {max_steps} steps")


def _batch_rngs(seed, n_items: int, batch: int):
    n_batches = max(1, -(-n_items // batch))
    children = np.random.SeedSequence(seed).spawn(n_batches)
    for b, child in enumerate(children):
        lo = b * batch
        yield lo, min(n_items, lo + batch), np.random.default_rng(child)


@dataclass
class MeasureEstimate:
    masses: np.ndarray       # per cell, tail cell last
    std_errors: np.ndarray
    counts: np.ndarray
    n_walks: int
    seed: int
    shell: float
    runtime: float

    def to_dict(self) -> dict:
        return {"masses": self.masses.tolist(), "std_errors": self.std_errors.tolist(),
                "counts": self.counts.tolist(), "n_walks": self.n_walks, "seed": self.seed,
                "shell": self.shell, "runtime": self.runtime}


def estimate_harmonic_measure(graph: LipschitzGraph, pole, mesh: BoundaryMesh, n_walks: int,
                              seed: int = 0, shell: float = 1e-4,
                              batch: int = 1 << 16) -> MeasureEstimate:
    """Cell masses of the exit distribution from ``pole`` (tail cell last).

    Walks are processed in fixed-size batches, each with its own spawned
    seed, so results depend only on (seed, n_walks, batch).
    """
    t0 = time.perf_counter()
    pole = np.asarray(pole, dtype=float)
    counts = np.zeros(mesh.size + 1, dtype=np.int64)
    for lo, hi, rng in _batch_rngs(seed, n_walks, batch):
        start = np.repeat(pole[None], hi - lo, axis=0)
        exits, _ = wos_sample(graph, start, shell, rng)
        counts += np.bincount(mesh.locate(exits[:, :-1]), minlength=mesh.size + 1)
    p = counts / n_walks
    se = np.sqrt(p * (1 - p) / n_walks)
    return MeasureEstimate(p, se, counts, n_walks, seed, shell, time.perf_counter() - t0)


def sample_hitting_points(graph: LipschitzGraph, start, n_walks: int, seed: int = 0,
                          shell: float = 1e-4, batch: int = 1 << 16) -> np.ndarray:
    """Exit points of ``n_walks`` walks from one start, batched like the estimator."""
    start = np.asarray(start, dtype=float)
    out = np.empty((n_walks, len(start)))
    for lo, hi, rng in _batch_rngs(seed, n_walks, batch):
        out[lo:hi], _ = wos_sample(graph, np.repeat(start[None], hi - lo, axis=0), shell, rng)
    return out


def sample_exits(graph: LipschitzGraph, points, n_per_point: int, seed: int = 0,
                 shell: float = 1e-4) -> np.ndarray:
    """Exit points of ``n_per_point`` walks from each point, shape (m, n, d).

    Point k always uses the k-th spawned stream, so the same seed gives
    common random numbers across calls with the same point count.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty((len(pts), n_per_point, pts.shape[1]))
    children = np.random.SeedSequence(seed).spawn(len(pts))
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        out[k], _ = wos_sample(graph, np.repeat(pts[k][None], n_per_point, 0), shell, rng)
    return out


def cell_masses(mesh: BoundaryMesh, points, n_walks: int = 4000, seed: int = 0,
                shell: float = 1e-4) -> np.ndarray:
    """Harmonic measure of every mesh cell seen from each point, (m, N).

    Exact on flat graphs, walk-on-spheres counts otherwise.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if mesh.graph.is_flat:
        return halfspace_cell_masses(mesh.lo, mesh.hi, pts)
    ex = sample_exits(mesh.graph, pts, n_walks, seed, shell)
    out = np.zeros((len(pts), mesh.size))
    for k in range(len(pts)):
        c = np.bincount(mesh.locate(ex[k, :, :-1]), minlength=mesh.size + 1)
        out[k] = c[:-1] / n_walks
    return out


# ----------------------------------------------------------------- fields

class HarmonicField:
    """Positive harmonic test function with values and gradients."""

    dim: int = 2
    bound: float = math.inf
    analytic: str | None = None

    def value(self, points) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, points) -> np.ndarray:
        return fd_gradient(self.value, points, None)

    def shifted(self, y: float) -> "HarmonicField":
        return ShiftedField(self, y)

    def direction(self, points) -> np.ndarray:
        """Unit gradient, zero where the gradient is below the floor."""
        g = self.gradient(points)
        n = np.linalg.norm(g, axis=1, keepdims=True)
        return np.where(n >= GRADIENT_FLOOR, g / np.where(n > 0, n, 1.0), 0.0)


def fd_gradient(fun, points, h) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if h is None:
        h = 1e-5 * np.maximum(np.abs(p[:, -1]), 1e-3)
    h = np.broadcast_to(np.asarray(h, dtype=float), (len(p),))
    g = np.empty_like(p)
    for k in range(p.shape[1]):
        e = np.zeros(p.shape[1])
        e[k] = 1.0
        g[:, k] = (fun(p + h[:, None] * e) - fun(p - h[:, None] * e)) / (2 * h)
    return g


class ConstantField(HarmonicField):
    analytic = "constant"

    def __init__(self, c: float = 1.0, dim: int = 2):
        self.c, self.dim, self.bound = float(c), dim, float(c)

    def value(self, points):
        return np.full(len(np.atleast_2d(points)), self.c)

    def gradient(self, points):
        return np.zeros_like(np.atleast_2d(np.asarray(points, dtype=float)))


class HeightField(HarmonicField):
    """The vertical coordinate; harmonic and positive on the upper half space."""
    analytic = "height"

    def __init__(self, dim: int = 2):
        self.dim = dim

    def value(self, points):
        return np.atleast_2d(np.asarray(points, dtype=float))[:, -1].copy()

    def gradient(self, points):
        g = np.zeros_like(np.atleast_2d(np.asarray(points, dtype=float)))
        g[:, -1] = 1.0
        return g


class PoissonPoleField(HarmonicField):
    """Half-space Poisson kernel with boundary point ``pole`` below S.

    u(p) = scale * c_d * (p_d - q_d) / |p - q|^d is positive and harmonic
    for p_d > q_d, bounded on every domain staying a positive distance above
    q_d, and vanishes at infinity.
    """
    analytic = "poisson_pole"

    def __init__(self, pole, scale: float = 1.0):
        self.pole = np.asarray(pole, dtype=float)
        self.dim = len(self.pole)
        self.scale = float(scale)

    def value(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        diff = p - self.pole
        h = diff[:, -1]
        r = np.linalg.norm(diff, axis=1)
        return self.scale * halfspace_constant(self.dim) * h / r**self.dim

    def gradient(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.dim
        diff = p - self.pole
        h = diff[:, -1][:, None]
        r = np.linalg.norm(diff, axis=1)[:, None]
        e = np.zeros(d)
        e[-1] = 1.0
        return self.scale * halfspace_constant(d) * (e / r**d - d * h * diff / r ** (d + 2))


class PiecewiseLinearDataField(HarmonicField):
    """Poisson extension to the upper half plane of continuous PL data.

    Data are given by knots (xi_k, f_k) and vanish outside the knot range.
    The extension is Re F with F(z) = (1/(pi i)) int f(t)/(t - z) dt, which is
    available in closed form piece by piece.
    """
    analytic = "pl_poisson"

    def __init__(self, knots, values):
        self.knots = np.asarray(knots, dtype=float)
        self.fvals = np.asarray(values, dtype=float)
        if np.any(self.fvals < 0):
            raise ValueError("boundary data must be nonnegative")
        self.dim = 2
        self.bound = float(self.fvals.max())

    @classmethod
    def hat(cls, center: float = 0.0, half_width: float = 1.0, height: float = 1.0):
        return cls([center - half_width, center, center + half_width], [0.0, height, 0.0])

    def boundary(self, xi):
        return np.interp(xi, self.knots, self.fvals, left=0.0, right=0.0)

    def _pieces(self):
        a, b = self.knots[:-1], self.knots[1:]
        fa, fb = self.fvals[:-1], self.fvals[1:]
        alpha = (fb - fa) / (b - a)
        beta = fa - alpha * a
        return a, b, alpha, beta

    def _z(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (p[:, 0] + 1j * p[:, 1])[:, None]

    def value(self, points):
        z = self._z(points)
        a, b, alpha, beta = self._pieces()
        F = alpha * (b - a) + (alpha * z + beta) * (np.log(b - z) - np.log(a - z))
        return (F / (np.pi * 1j)).real.sum(axis=1)

    def gradient(self, points):
        z = self._z(points)
        a, b, alpha, beta = self._pieces()
        dF = alpha * (np.log(b - z) - np.log(a - z)) + (alpha * z + beta) * (1 / (a - z) - 1 / (b - z))
        dF = (dF / (np.pi * 1j)).sum(axis=1)
        return np.column_stack([dF.real, -dF.imag])


class ShiftedField(HarmonicField):
    """u_y(p) = u(p + y e_d)."""

    def __init__(self, base: HarmonicField, y: float):
        self.base, self.y = base, float(y)
        self.dim, self.bound = base.dim, base.bound
        self.analytic = base.analytic

    def _move(self, points):
        p = np.array(np.atleast_2d(points), dtype=float)
        p[:, -1] += self.y
        return p

    def value(self, points):
        return self.base.value(self._move(points))

    def gradient(self, points):
        return self.base.gradient(self._move(points))


class MeshDataField(HarmonicField):
    """Extension of nonnegative mesh data by kernel quadrature.

    u(p) = sum_i k(p, xi_i) f_i w_i = sum_i omega^p(cell_i) f_i, with exact
    cell masses on flat graphs and walk-on-spheres counts otherwise (common
    random numbers across calls through a fixed seed).
    """

    def __init__(self, mesh: BoundaryMesh, data, n_walks: int = 4000, seed: int = 0):
        self.mesh = mesh
        self.data = np.asarray(data, dtype=float)
        if self.data.shape != (mesh.size,):
            raise ValueError("data must have one value per mesh node")
        if np.any(self.data < 0):
            raise ValueError("boundary data must be nonnegative")
        self.dim = mesh.dim
        self.bound = float(self.data.max()) if len(self.data) else 0.0
        self.n_walks, self.seed = n_walks, seed
        self.analytic = "flat_quadrature" if mesh.graph.is_flat else None

    def value(self, points):
        return cell_masses(self.mesh, points, self.n_walks, self.seed) @ self.data

    def gradient(self, points):
        if self.mesh.graph.is_flat:
            g = halfspace_cell_mass_gradients(self.mesh.lo, self.mesh.hi, points)
            return np.einsum("mnk,n->mk", g, self.data)
        return fd_gradient(self.value, points, None)


def extend(field: HarmonicField, mesh: BoundaryMesh | None, p):
    """Value of the harmonic extension at p (one point or an array)."""
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    if mesh is not None and np.any(mesh.graph.height_above(pts) <= 0):
        raise OutsideDomain("extension points must lie above the graph")
    v = field.value(pts)
    return float(v[0]) if np.ndim(p) == 1 else v


def gradient(field: HarmonicField, mesh: BoundaryMesh, p, h: float | None = None) -> np.ndarray:
    """Central finite-difference gradient of ``extend`` with step h.

    Default h = min(1e-3, dist/4).  Raises StepTooLarge if 2h >= dist(p, S).
    """
    from .geometry import distance_to_boundary

    pts = np.atleast_2d(np.asarray(p, dtype=float))
    dist = np.atleast_1d(distance_to_boundary(mesh.graph, pts))
    hh = np.minimum(1e-3, dist / 4) if h is None else np.full(len(pts), float(h))
    if np.any(2 * hh >= dist):
        raise StepTooLarge("finite-difference step reaches the boundary")
    g = fd_gradient(lambda q: extend(field, mesh, q), pts, hh)
    return g[0] if np.ndim(p) == 1 else g


def gradient_bound_ratio(field: HarmonicField, graph: LipschitzGraph, points) -> np.ndarray:
    """||grad u|| dist / (d^{3/2} u); the gradient bound says this is <= 1."""
    from .geometry import distance_to_boundary

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dist = np.atleast_1d(distance_to_boundary(graph, pts))
    g = np.linalg.norm(field.gradient(pts), axis=1)
    return g * dist / (pts.shape[1] ** 1.5 * field.value(pts))


# ---------------------------------------------------------------- Harnack

def harnack_envelope(u0: float, r: float, R: float, d: int) -> tuple[float, float]:
    """Harnack bounds for u(x) with |x - x0| = r inside a ball of radius R."""
    if not 0 <= r < R:
        raise InvalidRadii("need 0 <= r < R")
    q = r / R
    return (1 - q) / (1 + q) ** (d - 1) * u0, (1 + q) / (1 - q) ** (d - 1) * u0


@dataclass(frozen=True)
class HarnackConstants:
    c_S: float
    C1: float
    C2: float
    alpha1: float
    alpha2: float
    d: int
    shrink: float = 0.5
    radius_factor: float = 0.75

    @classmethod
    def from_lipschitz(cls, L: float, d: int, shrink: float = 0.5,
                       radius_factor: float = 0.75) -> "HarnackConstants":
        """Chain constants: step ``shrink*c*a`` inside balls of radius ``radius_factor*c*a``."""
        c = 1.0 / math.sqrt(L * L + 1.0)
        q = shrink / radius_factor
        C1 = (1 - q) / (1 + q) ** (d - 1)
        C2 = (1 + q) / (1 - q) ** (d - 1)
        base = math.log(1 - shrink * c)
        return cls(c, C1, C2, math.log(C1) / base, -math.log(C2) / base, d, shrink, radius_factor)

    @classmethod
    def from_graph(cls, graph: LipschitzGraph, **kw) -> "HarnackConstants":
        return cls.from_lipschitz(graph.lipschitz, graph.dim, **kw)


def chain_quotient_bounds(consts: HarnackConstants, y1: float, y2: float) -> tuple[float, float]:
    """Envelope for u_{y2}(x)/u_{y1}(x) from a Harnack chain, 0 < y1 <= y2."""
    if not 0 < y1 <= y2:
        raise InvalidHeights("need 0 < y1 <= y2")
    lower = (y1 / y2) ** consts.alpha2 / consts.C2
    upper = (y2 / y1) ** consts.alpha1 / consts.C1
    return lower, upper
