"""Near half spaces given as epigraphs of piecewise-linear graphs.

A domain is {(x, t) : t > phi(x)} where phi is piecewise linear on a regular
grid over the horizontal coordinates and vanishes outside a ball of radius
r < 1.  The boundary S is the graph of phi.  Points are stored as arrays whose
last coordinate is the vertical one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    EmptyBall,
    InsufficientWalks,
    LipschitzViolation,
    OutsideDomain,
    SupportViolation,
)

_ZERO_TOL = 1e-12
# points-times-facets budget for one vectorized distance block
_BLOCK = 400_000


@dataclass(frozen=True)
class LipschitzGraph:
    dim: int
    axes: tuple
    values: np.ndarray
    lipschitz: float
    radius: float
    measured_lipschitz: float = 0.0

    @property
    def c_S(self) -> float:
        """Distance constant 1/sqrt(L^2 + 1) of the graph."""
        return 1.0 / np.sqrt(self.lipschitz**2 + 1.0)

    @property
    def is_flat(self) -> bool:
        return bool(np.all(np.abs(self.values) <= _ZERO_TOL))

    @property
    def height_range(self) -> tuple[float, float]:
        return float(min(0.0, self.values.min())), float(max(0.0, self.values.max()))

    def phi(self, xbar) -> np.ndarray:
        """Evaluate the graph function at horizontal coordinates (n, d-1)."""
        xbar = np.atleast_2d(np.asarray(xbar, dtype=float))
        if self.is_flat:
            return np.zeros(len(xbar))
        if self.dim == 2:
            return np.interp(xbar[:, 0], self.axes[0], self.values, left=0.0, right=0.0)
        return _phi_2d(self.axes[0], self.axes[1], self.values, xbar)

    def lift(self, xbar) -> np.ndarray:
        """Points on S above the given horizontal coordinates."""
        xbar = np.atleast_2d(np.asarray(xbar, dtype=float))
        return np.column_stack([xbar, self.phi(xbar)])

    def height_above(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts[:, -1] - self.phi(pts[:, :-1])

    def shift(self, xbar, y) -> np.ndarray:
        """The points x_y = x + y e_d for x on S over xbar."""
        p = self.lift(xbar)
        p[:, -1] += y
        return p

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "axes": [a.tolist() for a in self.axes],
            "values": self.values.tolist(),
            "lipschitz": self.lipschitz,
            "radius": self.radius,
            "measured_lipschitz": self.measured_lipschitz,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LipschitzGraph":
        axes = [np.asarray(a, dtype=float) for a in data["axes"]]
        grid = axes[0] if len(axes) == 1 else tuple(axes)
        return build_graph(grid, np.asarray(data["values"], dtype=float),
                           data["lipschitz"], data["radius"])


def _phi_2d(xs, ys, z, xbar):
    # triangulated bilinear cells: (00,10,01) and (11,01,10)
    px, py = xbar[:, 0], xbar[:, 1]
    inside = (px > xs[0]) & (px < xs[-1]) & (py > ys[0]) & (py < ys[-1])
    out = np.zeros(len(xbar))
    if not inside.any():
        return out
    qx, qy = px[inside], py[inside]
    i = np.clip(np.searchsorted(xs, qx) - 1, 0, len(xs) - 2)
    j = np.clip(np.searchsorted(ys, qy) - 1, 0, len(ys) - 2)
    s = (qx - xs[i]) / (xs[i + 1] - xs[i])
    t = (qy - ys[j]) / (ys[j + 1] - ys[j])
    z00, z10, z01, z11 = z[i, j], z[i + 1, j], z[i, j + 1], z[i + 1, j + 1]
    lower = s + t <= 1.0
    val = np.where(lower,
                   z00 + s * (z10 - z00) + t * (z01 - z00),
                   z11 + (1 - s) * (z01 - z11) + (1 - t) * (z10 - z11))
    out[inside] = val
    return out


def _grid_points(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def measured_lipschitz(axes, values) -> float:
    """Largest slope over all node pairs (and facet gradients in d = 3)."""
    pts = _grid_points(axes)
    vals = np.asarray(values, dtype=float).ravel()
    best = 0.0
    step = max(1, _BLOCK // max(len(pts), 1))
    for start in range(0, len(pts), step):
        p = pts[start:start + step]
        dist = np.linalg.norm(p[:, None, :] - pts[None, :, :], axis=-1)
        dv = np.abs(vals[start:start + step, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(dist > 0, dv / dist, 0.0)
        best = max(best, float(slope.max()))
    if len(axes) == 2:
        xs, ys = axes
        z = np.asarray(values, dtype=float)
        hx = np.diff(xs)[:, None]
        hy = np.diff(ys)[None, :]
        gx1 = (z[1:, :-1] - z[:-1, :-1]) / hx
        gy1 = (z[:-1, 1:] - z[:-1, :-1]) / hy
        gx2 = (z[1:, 1:] - z[:-1, 1:]) / hx
        gy2 = (z[1:, 1:] - z[1:, :-1]) / hy
        best = max(best, float(np.hypot(gx1, gy1).max()), float(np.hypot(gx2, gy2).max()))
    return best


def build_graph(grid, values, L_declared: float, r: float) -> LipschitzGraph:
    """Validate grid data and return the graph.

    ``grid`` is a 1-D array (d = 2) or a tuple of 1-D arrays (d >= 3).
    """
    if isinstance(grid, (tuple, list)) and len(grid) > 0 and np.ndim(grid[0]) == 1:
        axes = tuple(np.asarray(a, dtype=float) for a in grid)
    else:
        axes = (np.asarray(grid, dtype=float),)
    values = np.asarray(values, dtype=float)
    if not 0.0 < r < 1.0:
        raise SupportViolation(f"support radius must lie in (0, 1), got {r}")
    if values.shape != tuple(len(a) for a in axes):
        raise ValueError(f"values shape {values.shape} does not match grid")
    if not np.all(np.isfinite(values)):
        raise ValueError("graph values must be finite")
    for a in axes:
        if np.any(np.diff(a) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if a[0] > -r or a[-1] < r:
            raise SupportViolation("grid does not cover the support ball")
    pts = _grid_points(axes)
    outside = np.linalg.norm(pts, axis=1) > r + _ZERO_TOL
    if np.any(np.abs(values.ravel()[outside]) > _ZERO_TOL):
        raise SupportViolation("nonzero value outside the support ball")
    lip = measured_lipschitz(axes, values)
    if lip > L_declared * (1 + 1e-12) + _ZERO_TOL:
        raise LipschitzViolation(f"measured Lipschitz constant {lip:.6g} exceeds declared {L_declared}")
    return LipschitzGraph(len(axes) + 1, axes, values, float(L_declared), float(r), lip)


def flat_graph(dim: int = 2, r: float = 0.5, n: int = 5, L: float = 0.1) -> LipschitzGraph:
    ax = np.linspace(-r, r, n)
    axes = tuple([ax] * (dim - 1))
    return build_graph(axes[0] if dim == 2 else axes, np.zeros([n] * (dim - 1)), L, r)


def tent_graph(dim: int = 2, height: float = 0.1, r: float = 0.5, n: int = 21,
               L: float | None = None) -> LipschitzGraph:
    """Cone of the given apex height over the support ball (exactly PL in d = 2)."""
    if n % 2 == 0:
        n += 1
    ax = np.linspace(-r, r, n)
    pts = _grid_points([ax] * (dim - 1))
    vals = height * np.clip(1.0 - np.linalg.norm(pts, axis=1) / r, 0.0, None)
    vals = vals.reshape([n] * (dim - 1))
    if L is None:
        L = measured_lipschitz(tuple([ax] * (dim - 1)), vals)
    grid = ax if dim == 2 else tuple([ax] * (dim - 1))
    return build_graph(grid, vals, L, r)


def random_pl_graph(dim: int = 2, L: float = 0.2, r: float = 0.5, n: int = 17,
                    seed: int = 0) -> LipschitzGraph:
    """Random PL graph with measured Lipschitz constant 0.9 L."""
    rng = np.random.default_rng(seed)
    ax = np.linspace(-r, r, n)
    axes = tuple([ax] * (dim - 1))
    pts = _grid_points(axes)
    envelope = np.clip(1.0 - np.linalg.norm(pts, axis=1) / r, 0.0, None)
    vals = (envelope * rng.uniform(-1.0, 1.0, len(pts))).reshape([n] * (dim - 1))
    lip = measured_lipschitz(axes, vals)
    if lip > 0:
        vals = vals * (0.9 * L / lip)
    return build_graph(ax if dim == 2 else axes, vals, L, r)


# ---------------------------------------------------------------- distances

def _facets(graph: LipschitzGraph):
    """Segments (d = 2) or triangles (d = 3) of the non-flat part."""
    if graph.dim == 2:
        xs, z = graph.axes[0], graph.values
        verts = np.column_stack([xs, z])
        return verts[:-1], verts[1:]
    xs, ys = graph.axes
    z = graph.values
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([X, Y, z], axis=-1)
    p00, p10, p01, p11 = P[:-1, :-1], P[1:, :-1], P[:-1, 1:], P[1:, 1:]
    t1 = np.stack([p00, p10, p01], axis=-2).reshape(-1, 3, 3)
    t2 = np.stack([p11, p01, p10], axis=-2).reshape(-1, 3, 3)
    return np.concatenate([t1, t2])


def _closest_on_segments(p, a, b):
    # p (m, k), a/b (s, k) -> closest points (m, s, k)
    ab = b - a
    t = np.einsum("msk,sk->ms", p[:, None, :] - a[None], ab) / np.einsum("sk,sk->s", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    return a[None] + t[..., None] * ab[None]


def _closest_on_triangles(p, tri):
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n, axis=1, keepdims=True)
    d = np.einsum("msk,sk->ms", p[:, None, :] - a[None], n)
    proj = p[:, None, :] - d[..., None] * n[None]
    # barycentric test on the projection
    v0, v1 = b - a, c - a
    v2 = proj - a[None]
    d00 = np.einsum("sk,sk->s", v0, v0)
    d01 = np.einsum("sk,sk->s", v0, v1)
    d11 = np.einsum("sk,sk->s", v1, v1)
    d20 = np.einsum("msk,sk->ms", v2, v0)
    d21 = np.einsum("msk,sk->ms", v2, v1)
    den = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)
    best = proj.copy()
    best_d = np.where(inside, np.abs(d), np.inf)
    for e0, e1 in ((a, b), (b, c), (c, a)):
        q = _closest_on_segments(p, e0, e1)
        dq = np.linalg.norm(q - p[:, None, :], axis=-1)
        take = (~inside) & (dq < best_d)
        best = np.where(take[..., None], q, best)
        best_d = np.where(take, dq, best_d)
    return best


def _flat_exterior(graph: LipschitzGraph, p):
    """Nearest point on the flat part of S outside the grid box."""
    q = p.copy()
    q[:, -1] = 0.0
    if graph.is_flat:
        return q
    lo = np.array([a[0] for a in graph.axes])
    hi = np.array([a[-1] for a in graph.axes])
    xb = p[:, :-1]
    inside = np.all((xb > lo) & (xb < hi), axis=1)
    if inside.any():
        xi = xb[inside]
        gaps = np.concatenate([xi - lo, hi - xi], axis=1)
        k = np.argmin(gaps, axis=1)
        proj = xi.copy()
        dim = xi.shape[1]
        rows = np.arange(len(xi))
        axis = k % dim
        proj[rows, axis] = np.where(k < dim, lo[axis], hi[axis])
        q[inside, :-1] = proj
    return q


def nearest_boundary_point(graph: LipschitzGraph, points) -> tuple[np.ndarray, np.ndarray]:
    """Exact Euclidean distance to S and the nearest point, vectorized."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    q = _flat_exterior(graph, p)
    dist = np.linalg.norm(p - q, axis=1)
    if graph.is_flat:
        return dist, q
    lo = np.array([a[0] for a in graph.axes] + [graph.height_range[0]])
    hi = np.array([a[-1] for a in graph.axes] + [graph.height_range[1]])
    box_gap = np.linalg.norm(np.maximum(0.0, np.maximum(lo - p, p - hi)), axis=1)
    need = np.nonzero(box_gap < dist)[0]
    if len(need) == 0:
        return dist, q
    facets = _facets(graph)
    nfac = len(facets[0]) if graph.dim == 2 else len(facets)
    step = max(1, _BLOCK // nfac)
    for start in range(0, len(need), step):
        idx = need[start:start + step]
        pp = p[idx]
        if graph.dim == 2:
            cand = _closest_on_segments(pp, *facets)
        else:
            cand = _closest_on_triangles(pp, facets)
        dc = np.linalg.norm(cand - pp[:, None, :], axis=-1)
        k = np.argmin(dc, axis=1)
        rows = np.arange(len(idx))
        better = dc[rows, k] < dist[idx]
        dist[idx[better]] = dc[rows, k][better]
        q[idx[better]] = cand[rows, k][better]
    return dist, q


def distance_to_boundary(graph: LipschitzGraph, p) -> np.ndarray | float:
    """Distance from p (one point or an (n, d) array) to S.

    Raises OutsideDomain if any point lies on or below the graph.
    """
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    if np.any(graph.height_above(pts) <= 0):
        raise OutsideDomain("point is not strictly above the graph")
    dist, _ = nearest_boundary_point(graph, pts)
    return float(dist[0]) if np.ndim(p) == 1 else dist


# ------------------------------------------------------------------- meshes

def graded_edges(resolution: float, fine_radius: float, R_trunc: float,
                 growth: float = 1.08) -> np.ndarray:
    """Symmetric 1-D cell edges: uniform on [-F, F], geometric out to R_trunc."""
    n_fine = int(np.ceil(fine_radius / resolution - 1e-9))
    right = list(resolution * np.arange(n_fine + 1))
    width = resolution
    while right[-1] < R_trunc:
        width *= growth
        right.append(right[-1] + width)
    right[-1] = R_trunc
    if len(right) > 2 and right[-1] - right[-2] < 0.5 * (right[-2] - right[-3]):
        del right[-2]
    right = np.asarray(right)
    if right[-1] <= right[-2]:
        raise ValueError("R_trunc must exceed the fine region")
    return np.concatenate([-right[::-1], right[1:]])


@dataclass
class BoundaryMesh:
    """Quadrature cells on S with pole-measure weights.

    Cells are tensor-product boxes in the horizontal coordinates; the node of
    a cell is the point of S above the box centre.  Everything outside the
    truncation box is the tail cell, whose pole mass is ``tail_mass``.
    """
    graph: LipschitzGraph
    edges: tuple
    nodes: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    weights: np.ndarray
    tail_mass: float
    R_trunc: float
    pole: np.ndarray
    resolution: float
    provenance: str = "oracle"
    std_errors: np.ndarray | None = None
    n_walks: int = 0
    seed: int | None = None
    eval_radius: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.graph.dim

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def centers(self) -> np.ndarray:
        return self.nodes[:, :-1]

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.hi - self.lo, axis=1)

    def eval_mask(self, radius: float | None = None) -> np.ndarray:
        """Rows inside the compact evaluation window."""
        rad = self.eval_radius if radius is None else radius
        return np.linalg.norm(self.centers, axis=1) <= rad + 1e-12

    def interior_mask(self) -> np.ndarray:
        """Cells that do not touch the truncation box."""
        ok = np.ones(self.size, dtype=bool)
        for k, e in enumerate(self.edges):
            ok &= (self.lo[:, k] > e[0]) & (self.hi[:, k] < e[-1])
        return ok

    def shifted_nodes(self, y: float) -> np.ndarray:
        p = self.nodes.copy()
        p[:, -1] += y
        return p

    def locate(self, xbar) -> np.ndarray:
        """Cell index for horizontal coordinates; ``size`` marks the tail."""
        xbar = np.atleast_2d(xbar)
        shape = [len(e) - 1 for e in self.edges]
        idx = np.zeros(len(xbar), dtype=np.int64)
        tail = np.zeros(len(xbar), dtype=bool)
        for k, e in enumerate(self.edges):
            i = np.searchsorted(e, xbar[:, k], side="right") - 1
            tail |= (i < 0) | (i >= shape[k])
            idx = idx * shape[k] + np.clip(i, 0, shape[k] - 1)
        idx[tail] = self.size
        return idx

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "edges": [e.tolist() for e in self.edges],
            "nodes": self.nodes.tolist(),
            "weights": self.weights.tolist(),
            "std_errors": None if self.std_errors is None else self.std_errors.tolist(),
            "tail_mass": self.tail_mass,
            "R_trunc": self.R_trunc,
            "pole": self.pole.tolist(),
            "resolution": self.resolution,
            "provenance": self.provenance,
            "n_walks": self.n_walks,
            "seed": self.seed,
            "eval_radius": self.eval_radius,
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, data: dict) -> "BoundaryMesh":
        graph = LipschitzGraph.from_dict(data["graph"])
        edges = tuple(np.asarray(e) for e in data["edges"])
        lo, hi = _cell_boxes(edges)
        se = data.get("std_errors")
        return cls(graph, edges, np.asarray(data["nodes"]), lo, hi,
                   np.asarray(data["weights"]), float(data["tail_mass"]),
                   float(data["R_trunc"]), np.asarray(data["pole"]),
                   float(data["resolution"]), data["provenance"],
                   None if se is None else np.asarray(se), int(data["n_walks"]),
                   data["seed"], float(data["eval_radius"]), data.get("meta", {}))

    @classmethod
    def from_json(cls, path) -> "BoundaryMesh":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _cell_boxes(edges):
    lows = np.meshgrid(*[e[:-1] for e in edges], indexing="ij")
    highs = np.meshgrid(*[e[1:] for e in edges], indexing="ij")
    lo = np.column_stack([m.ravel() for m in lows])
    hi = np.column_stack([m.ravel() for m in highs])
    return lo, hi


def build_boundary_mesh(graph: LipschitzGraph, R_trunc: float, resolution: float,
                        pole: Sequence[float], n_walks: int | None = None, seed: int = 0, *,
                        fine_radius: float = 1.25, growth: float = 1.08,
                        method: str = "auto", max_rel_se: float | None = None,
                        shell: float = 1e-4, eval_radius: float = 1.0) -> BoundaryMesh:
    """Discretize S and the pole measure.

    ``method`` is "oracle" (closed-form half-space masses, flat graphs only),
    "monte_carlo" (walk-on-spheres counts) or "auto" (oracle when flat).
    """
    from . import harmonic  # harmonic imports this module

    pole = np.asarray(pole, dtype=float)
    if graph.height_above(pole[None])[0] <= 0:
        raise OutsideDomain("pole must lie strictly above the graph")
    if R_trunc < 2 * graph.radius:
        raise ValueError("R_trunc must be at least twice the support radius")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if method == "auto":
        method = "oracle" if graph.is_flat else "monte_carlo"
    e1 = graded_edges(resolution, min(fine_radius, R_trunc / 2), R_trunc, growth)
    edges = tuple([e1] * (graph.dim - 1))
    lo, hi = _cell_boxes(edges)
    nodes = graph.lift(0.5 * (lo + hi))
    mesh = BoundaryMesh(graph, edges, nodes, lo, hi, np.zeros(len(nodes)), 0.0,
                        float(R_trunc), pole, float(resolution), method,
                        eval_radius=eval_radius)
    if method == "oracle":
        if not graph.is_flat:
            raise ValueError("oracle weights require a flat graph")
        w = harmonic.halfspace_cell_masses(lo, hi, pole[None])[0]
        mesh.weights = w
        mesh.tail_mass = float(max(0.0, 1.0 - w.sum()))
        mesh.std_errors = np.zeros_like(w)
    elif method == "monte_carlo":
        if not n_walks:
            raise InsufficientWalks("Monte Carlo weights need n_walks > 0")
        est = harmonic.estimate_harmonic_measure(graph, pole, mesh, n_walks, seed, shell=shell)
        mesh.weights = est.masses[:-1]
        mesh.tail_mass = float(est.masses[-1])
        mesh.std_errors = est.std_errors[:-1]
        mesh.n_walks = int(n_walks)
        mesh.seed = seed
        if max_rel_se is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.where(mesh.weights > 0, mesh.std_errors / mesh.weights, np.inf)
            if np.any(rel > max_rel_se):
                raise InsufficientWalks(
                    f"{int(np.sum(rel > max_rel_se))} cells exceed relative standard error {max_rel_se}")
    else:
        raise ValueError(f"unknown weight method {method!r}")
    return mesh


def surface_ball(mesh: BoundaryMesh, center, radius: float) -> np.ndarray:
    """Indices of nodes within Euclidean distance ``radius`` of ``center``.

    ``center`` may be a point of S (d coordinates) or its horizontal part.
    """
    c = np.asarray(center, dtype=float)
    if c.shape[-1] == mesh.dim - 1:
        c = mesh.graph.lift(c[None])[0]
    if radius <= 0:
        raise ValueError("radius must be positive")
    idx = np.nonzero(np.linalg.norm(mesh.nodes - c, axis=1) <= radius)[0]
    if len(idx) == 0:
        raise EmptyBall(f"no node within {radius} of {c.tolist()}")
    return idx


def ball_fractions(mesh: BoundaryMesh, center, radius: float, sub: int = 8) -> np.ndarray:
    """Fraction of each cell (by horizontal measure) lying in the ball.

    Exact for flat d = 2 meshes; otherwise cells are sub-sampled on a
    ``sub``-per-axis grid of midpoints.
    """
    c = np.asarray(center, dtype=float)
    if c.shape[-1] == mesh.dim - 1:
        c = mesh.graph.lift(c[None])[0]
    if mesh.dim == 2 and mesh.graph.is_flat:
        half = np.sqrt(max(radius**2 - c[-1] ** 2, 0.0))
        a = np.maximum(mesh.lo[:, 0], c[0] - half)
        b = np.minimum(mesh.hi[:, 0], c[0] + half)
        return np.clip(b - a, 0.0, None) / (mesh.hi[:, 0] - mesh.lo[:, 0])
    frac = np.zeros(mesh.size)
    cand = np.nonzero(np.all((mesh.hi > c[:-1] - radius) & (mesh.lo < c[:-1] + radius), axis=1))[0]
    t = (np.arange(sub) + 0.5) / sub
    offs = np.stack(np.meshgrid(*([t] * (mesh.dim - 1)), indexing="ij"), -1).reshape(-1, mesh.dim - 1)
    for i in cand:
        xb = mesh.lo[i] + offs * (mesh.hi[i] - mesh.lo[i])
        pts = mesh.graph.lift(xb)
        frac[i] = np.mean(np.linalg.norm(pts - c, axis=1) <= radius)
    return frac
