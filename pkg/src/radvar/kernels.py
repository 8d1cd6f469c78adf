"""Discrete kernels k_y, c_y, b_y, b_Delta and the perturbed kernel over a mesh.

Kernels are stored in operator form: ``mass[i, j] = K(x_i, xi_j) * w_j``, the
integral of the kernel density against the pole measure over cell j.  In this
form composition is a plain matrix product and applying a kernel to boundary
data is a matrix-vector product.  Densities are recovered by dividing columns
by the weights.

Three schemes produce the height-y hitting masses:

* ``oracle``: exact half-space cell masses (flat graphs).
* ``semigroup``: flat d = 2 only.  A symmetric jump generator is built from
  the exact rates of the Cauchy process between cells and exponentiated
  exactly, so that the discrete kernels form a semigroup and preserve mass.
* ``monte_carlo``: walk-on-spheres counts from every shifted node.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import harmonic
from .errors import OutsideDomain, QuadratureUnstable, ShapeMismatch
from .geometry import BoundaryMesh
from .harmonic import ConstantField, HarmonicField
from .partitions import Segment, as_fraction, fraction_str

ZERO_WEIGHT_FLOOR = 1e-14
KINDS = ("k_y", "c_y", "b_y", "b_delta", "omega_tilde", "pi", "omega", "composed", "identity")


@dataclass
class DiscreteKernel:
    """Kernel on mesh nodes in operator form (rows: evaluation nodes)."""
    mass: np.ndarray
    weights: np.ndarray
    kind: str
    height: float | None = None
    segment: Segment | None = None
    epsilon: float | None = None
    provenance: str = "oracle"
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.mass.ndim != 2 or self.mass.shape[1] != len(self.weights):
            raise ShapeMismatch(f"mass {self.mass.shape} vs {len(self.weights)} weights")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mass.shape

    @property
    def zero_weight(self) -> np.ndarray:
        """Columns whose weight is below the floor; their densities are undefined."""
        return self.weights < ZERO_WEIGHT_FLOOR

    @property
    def values(self) -> np.ndarray:
        """Densities against the pole measure; NaN on zero-weight columns."""
        w = np.where(self.zero_weight, np.nan, self.weights)
        return self.mass / w

    def row_integrals(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def apply(self, data) -> np.ndarray:
        return apply_kernel(self, data)

    def with_kind(self, kind: str, **kw) -> "DiscreteKernel":
        return DiscreteKernel(self.mass, self.weights, kind,
                              kw.get("height", self.height), kw.get("segment", self.segment),
                              kw.get("epsilon", self.epsilon), kw.get("provenance", self.provenance),
                              dict(self.meta))

    def sidecar(self) -> dict:
        return {
            "shape": list(self.shape),
            "dtype": "float64",
            "order": "row-major",
            "layout": "operator",
            "kind": self.kind,
            "height": self.height,
            "segment": None if self.segment is None else self.segment.to_json(),
            "epsilon": self.epsilon,
            "provenance": self.provenance,
            "weights": self.weights.tolist(),
            "meta": self.meta,
        }


def identity_kernel(mesh: BoundaryMesh) -> DiscreteKernel:
    """Discrete delta: the identity against the pole measure."""
    return DiscreteKernel(np.eye(mesh.size), mesh.weights, "identity", provenance="exact")


def compose(p: DiscreteKernel, q: DiscreteKernel, kind: str = "composed") -> DiscreteKernel:
    """(p o q)[i, j] = sum_z p[i, z] q[z, j] w_z, computed in operator form."""
    if p.shape[1] != q.shape[0] or not np.array_equal(p.weights, q.weights):
        raise ShapeMismatch(f"cannot compose {p.shape} with {q.shape}")
    return DiscreteKernel(p.mass @ q.mass, q.weights, kind, provenance="composed")


def apply_kernel(kernel: DiscreteKernel, data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.shape[0] != kernel.shape[1]:
        raise ShapeMismatch(f"data of length {data.shape[0]} for kernel {kernel.shape}")
    return kernel.mass @ data


def save_kernel(kernel: DiscreteKernel, path) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (row-major float64 operator form) and ``<path>.json``."""
    path = Path(path)
    binp, jsonp = path.with_suffix(".bin"), path.with_suffix(".json")
    np.ascontiguousarray(kernel.mass, dtype="<f8").tofile(binp)
    jsonp.write_text(json.dumps(kernel.sidecar(), sort_keys=True))
    return binp, jsonp


def load_kernel(path) -> DiscreteKernel:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    mass = np.fromfile(path.with_suffix(".bin"), dtype="<f8").reshape(meta["shape"])
    seg = meta["segment"]
    return DiscreteKernel(mass, np.asarray(meta["weights"]), meta["kind"], meta["height"],
                          None if seg is None else Segment(Fraction(seg[0]), Fraction(seg[1])),
                          meta["epsilon"], meta["provenance"], meta.get("meta", {}))


# -------------------------------------------------------------------- norms

def max_entry(kernel: DiscreteKernel, rows=None, cols=None) -> float:
    """Largest absolute density over the given rows and columns.

    Zero-weight columns are always skipped.
    """
    rows = slice(None) if rows is None else rows
    keep = ~kernel.zero_weight
    if cols is not None:
        keep &= cols
    v = kernel.values[rows][:, keep]
    return float(np.max(np.abs(v))) if v.size else 0.0


def max_entry_distance(a: DiscreteKernel, b: DiscreteKernel, rows=None, cols=None) -> float:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return max_entry(DiscreteKernel(a.mass - b.mass, a.weights, "composed"), rows, cols)


def window(mesh: BoundaryMesh) -> tuple[np.ndarray, np.ndarray]:
    """Default norm window: evaluation rows and interior columns."""
    return mesh.eval_mask(), mesh.interior_mask()


def row_l1_norm(kernel: DiscreteKernel, rows=None) -> float:
    """sup over rows of sum_j |K[i, j]| w_j."""
    rows = slice(None) if rows is None else rows
    return float(np.max(np.abs(kernel.mass[rows]).sum(axis=1)))


# ------------------------------------------------------------------ schemes

def _unbounded_boxes(mesh: BoundaryMesh):
    """Cell boxes with the outermost faces pushed to infinity."""
    lo, hi = mesh.lo.copy(), mesh.hi.copy()
    for k, e in enumerate(mesh.edges):
        lo[lo[:, k] <= e[0], k] = -np.inf
        hi[hi[:, k] >= e[-1], k] = np.inf
    return lo, hi


class KernelScheme:
    """Source of height-y hitting masses and their start-point gradients."""

    name = "base"

    def __init__(self, mesh: BoundaryMesh):
        self.mesh = mesh

    def masses(self, y: float) -> np.ndarray:
        raise NotImplementedError

    def mass_gradients(self, y: float) -> np.ndarray:
        """(N, N, d) gradient in the start point x_y of each cell mass.

        Outer cells extend to infinity so that every row sums to zero.
        """
        raise NotImplementedError


class OracleScheme(KernelScheme):
    name = "oracle"

    def __init__(self, mesh: BoundaryMesh):
        if not mesh.graph.is_flat:
            raise ValueError("the oracle scheme needs a flat graph")
        super().__init__(mesh)
        self._lo_inf, self._hi_inf = _unbounded_boxes(mesh)

    def masses(self, y):
        return harmonic.halfspace_cell_masses(self.mesh.lo, self.mesh.hi, self.mesh.shifted_nodes(y))

    def mass_gradients(self, y):
        return harmonic.halfspace_cell_mass_gradients(self._lo_inf, self._hi_inf,
                                                      self.mesh.shifted_nodes(y))


class SemigroupScheme(OracleScheme):
    """Exact exponential of a symmetric cell-jump generator (flat, d = 2).

    The jump rate from node x_i into cell j is the exact Cauchy-process rate
    (1/pi)(1/(a_j - x_i) - 1/(b_j - x_i)); rates are symmetrized against the
    cell lengths so the generator is self-adjoint for Lebesgue measure, then
    diagonalized once.
    """
    name = "semigroup"

    def __init__(self, mesh: BoundaryMesh):
        if mesh.dim != 2:
            raise ValueError("the semigroup scheme is implemented for d = 2")
        super().__init__(mesh)
        a, b = mesh.lo[:, 0], mesh.hi[:, 0]
        x = mesh.centers[:, 0]
        ell = b - a
        X = x[:, None]
        with np.errstate(divide="ignore"):
            rate = (1.0 / (a - X) - 1.0 / (b - X)) / np.pi
        np.fill_diagonal(rate, 0.0)
        density = 0.5 * (rate / ell[None, :] + rate.T / ell[:, None])
        jumps = density * ell[None, :]
        np.fill_diagonal(jumps, 0.0)
        gen = -jumps
        gen[np.diag_indices_from(gen)] = jumps.sum(axis=1)
        sq = np.sqrt(ell)
        sym = sq[:, None] * gen / sq[None, :]
        self.eigvals, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
        self._left = vecs / sq[:, None]
        self._right = vecs.T * sq[None, :]

    def masses(self, y):
        return (self._left * np.exp(-y * self.eigvals)) @ self._right


class MonteCarloScheme(KernelScheme):
    """Walk-on-spheres masses; gradients by common-random-number differences."""
    name = "monte_carlo"

    def __init__(self, mesh: BoundaryMesh, n_walks: int = 2000, seed: int = 0,
                 shell: float = 1e-4):
        super().__init__(mesh)
        self.n_walks, self.seed, self.shell = n_walks, seed, shell

    def _masses_at(self, points):
        return harmonic.cell_masses(self.mesh, points, self.n_walks, self.seed, self.shell)

    def masses(self, y):
        return self._masses_at(self.mesh.shifted_nodes(y))

    def mass_gradients(self, y):
        p = self.mesh.shifted_nodes(y)
        h = min(1e-2, y / 4)
        out = np.empty((len(p), self.mesh.size, p.shape[1]))
        for k in range(p.shape[1]):
            e = np.zeros(p.shape[1])
            e[k] = h
            out[..., k] = (self._masses_at(p + e) - self._masses_at(p - e)) / (2 * h)
        return out


def make_scheme(mesh: BoundaryMesh, name: str = "auto", **kw) -> KernelScheme:
    if name == "auto":
        if mesh.graph.is_flat:
            name = "semigroup" if mesh.dim == 2 else "oracle"
        else:
            name = "monte_carlo"
    if name == "oracle":
        return OracleScheme(mesh)
    if name == "semigroup":
        return SemigroupScheme(mesh)
    if name == "monte_carlo":
        return MonteCarloScheme(mesh, **kw)
    raise ValueError(f"unknown kernel scheme {name!r}")


# ------------------------------------------------------------------ factory

def _seg_floats(delta: Segment) -> tuple[float, float]:
    return float(delta.m), float(delta.M)


class KernelFactory:
    """Builds and caches k_y, c_y, b_y, b_Delta and the perturbed kernels."""

    def __init__(self, mesh: BoundaryMesh, field: HarmonicField | None = None,
                 scheme: KernelScheme | str = "auto", cache_size: int = 48, **scheme_kw):
        self.mesh = mesh
        self.field = field
        self.scheme = make_scheme(mesh, scheme, **scheme_kw) if isinstance(scheme, str) else scheme
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()

    @property
    def trivial_field(self) -> bool:
        return self.field is None or isinstance(self.field, ConstantField)

    def _cached(self, key, build):
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        val = build()
        self._cache[key] = val
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return val

    def _kernel(self, mass, kind, **kw) -> DiscreteKernel:
        return DiscreteKernel(mass, self.mesh.weights, kind, provenance=self.scheme.name, **kw)

    def k(self, y: float) -> DiscreteKernel:
        y = float(y)
        if y <= 0:
            raise ValueError("height must be positive")
        return self._cached(("k", y), lambda: self._kernel(self.scheme.masses(y), "k_y", height=y))

    def c(self, y: float) -> DiscreteKernel:
        y = float(y)

        def build():
            n = self.mesh.size
            if self.trivial_field:
                return self._kernel(np.zeros((n, n)), "c_y", height=y)
            grads = self.scheme.mass_gradients(y)
            sigma = self.field.direction(self.mesh.shifted_nodes(2 * y))
            return self._kernel(np.einsum("ijk,ik->ij", grads, sigma), "c_y", height=y)
        return self._cached(("c", y), build)

    def b(self, y: float) -> DiscreteKernel:
        y = float(y)

        def build():
            if self.trivial_field:
                n = self.mesh.size
                return self._kernel(np.zeros((n, n)), "b_y", height=y)
            return self._kernel(self.k(y).mass @ self.c(y).mass, "b_y", height=y)
        return self._cached(("b", y), build)

    def _b_midpoint(self, lo: float, hi: float, n_quad: int) -> np.ndarray:
        step = (hi - lo) / n_quad
        acc = np.zeros((self.mesh.size, self.mesh.size))
        for q in range(n_quad):
            acc += step * self.b(lo + (q + 0.5) * step).mass
        return acc

    def b_segment(self, delta: Segment, n_quad: int = 1, adaptive: bool = False,
                  tol: float = 1e-4, max_quad: int = 64) -> DiscreteKernel:
        """Composite-midpoint integral of b_y over the segment.

        With ``adaptive`` the panel count doubles until the densities on the
        evaluation window move by less than ``tol``.
        """
        lo, hi = _seg_floats(delta)
        if self.trivial_field:
            n = self.mesh.size
            return self._kernel(np.zeros((n, n)), "b_delta", segment=delta)
        mass = self._b_midpoint(lo, hi, n_quad)
        if adaptive:
            rows = self.mesh.eval_mask()
            while True:
                if 2 * n_quad > max_quad:
                    raise QuadratureUnstable(f"b on {delta} not stable with {n_quad} panels")
                finer = self._b_midpoint(lo, hi, 2 * n_quad)
                diff = self._kernel(finer - mass, "composed")
                n_quad *= 2
                mass = finer
                if max_entry(diff, rows) < tol:
                    break
        out = self._kernel(mass, "b_delta", segment=delta)
        out.meta["n_quad"] = n_quad
        return out

    def omega_tilde(self, delta: Segment, eps: float, n_quad: int = 1) -> DiscreteKernel:
        """k_{|Delta|} - eps b_Delta."""
        if not 0 <= eps < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        kmass = self.k(float(delta.length)).mass
        if eps == 0 or self.trivial_field:
            mass = kmass
        else:
            mass = kmass - eps * self.b_segment(delta, n_quad).mass
        return self._kernel(mass, "omega_tilde", segment=delta, epsilon=eps)

    def trace(self, field: HarmonicField, y: float = 0.0) -> np.ndarray:
        """Values of a field on the mesh nodes lifted by y."""
        return field.value(self.mesh.shifted_nodes(y))


def martin_kernel_row(mesh: BoundaryMesh, p, n_walks: int = 20000, seed: int = 0,
                      shell: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Density of the hitting law from p against the pole measure.

    Returns (row, flagged) where flagged marks zero-weight cells whose entry
    is set to NaN.
    """
    p = np.asarray(p, dtype=float)
    if mesh.graph.height_above(p[None])[0] <= 0:
        raise OutsideDomain("point must lie above the graph")
    m = harmonic.cell_masses(mesh, p[None], n_walks, seed, shell)[0]
    flagged = mesh.weights < ZERO_WEIGHT_FLOOR
    row = np.full(mesh.size, np.nan)
    row[~flagged] = m[~flagged] / mesh.weights[~flagged]
    return row, flagged


# -------------------------------------------------------- fitted constants

def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    ok = den > 0
    return np.where(ok, num / np.where(ok, den, 1.0), np.nan)


@dataclass
class QuotientFit:
    alpha: float
    const: float
    pairs: list          # (y1, y2, max log-ratio)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "const": self.const,
                "pairs": [list(p) for p in self.pairs]}


def fit_quotient_exponent(factory: KernelFactory, heights) -> QuotientFit:
    """Fit k_{y2}/k_{y1} <= c (y2/y1)^alpha over all pairs y1 < y2.

    alpha is the least-squares slope of the maximal log-ratio against
    log(y2/y1); c is then the smallest constant making every pair hold.
    """
    rows = factory.mesh.eval_mask()
    hs = sorted(float(h) for h in heights)
    pairs = []
    for i, y1 in enumerate(hs):
        a = factory.k(y1).mass[rows]
        for y2 in hs[i + 1:]:
            r = _ratio(factory.k(y2).mass[rows], a)
            pairs.append((y1, y2, float(np.log(np.nanmax(r)))))
    if not pairs:
        raise ValueError("need at least two heights")
    t = np.array([math.log(y2 / y1) for y1, y2, _ in pairs])
    r = np.array([p[2] for p in pairs])
    A = np.column_stack([np.ones_like(t), t])
    (_, alpha), *_ = np.linalg.lstsq(A, r, rcond=None)
    alpha = max(float(alpha), 0.0)
    const = float(np.exp(np.max(r - alpha * t)))
    return QuotientFit(alpha, const, pairs)


def height_difference_constant(factory: KernelFactory, y: float, taus, zs, alpha: float) -> float:
    """Smallest c with |k_{y+tau} - k_y| <= c((y+tau)^a - y^a) k_z / z^a."""
    rows = factory.mesh.eval_mask()
    base = factory.k(y).mass[rows]
    worst = 0.0
    for tau in taus:
        diff = np.abs(factory.k(y + tau).mass[rows] - base)
        scale = (y + tau) ** alpha - y**alpha
        for z in zs:
            if z > y:
                raise ValueError("need z <= y")
            bound = scale * factory.k(z).mass[rows] / z**alpha
            worst = max(worst, float(np.nanmax(_ratio(diff, bound))))
    return worst


def _window_ratio(factory: KernelFactory, num: np.ndarray, den: np.ndarray) -> float:
    # the outermost cells carry the unbounded tails of c_y, so only interior columns count
    rows, cols = window(factory.mesh)
    return float(np.nanmax(_ratio(np.abs(num[rows][:, cols]), den[rows][:, cols])))


def c_bound_constant(factory: KernelFactory, y: float) -> float:
    """max |c_y| y / k_y over the evaluation window."""
    return _window_ratio(factory, factory.c(y).mass * y, factory.k(y).mass)


def b_bound_constant(factory: KernelFactory, y: float) -> float:
    """max |b_y| y / k_y over the evaluation window."""
    return _window_ratio(factory, factory.b(y).mass * y, factory.k(y).mass)


def b_segment_bound_constant(factory: KernelFactory, delta: Segment, alpha: float,
                             n_quad: int = 8) -> float:
    """Smallest c with |b_Delta| <= c (rho^(alpha-1)/m)|Delta| k_m."""
    m, M = _seg_floats(delta)
    scale = (M / m) ** (alpha - 1) / m * (M - m)
    return _window_ratio(factory, factory.b_segment(delta, n_quad).mass, scale * factory.k(m).mass)


def segment(m, M) -> Segment:
    return Segment(as_fraction(m), as_fraction(M))


__all__ = [
    "DiscreteKernel", "KernelFactory", "KernelScheme", "OracleScheme", "SemigroupScheme",
    "MonteCarloScheme", "make_scheme", "compose", "apply_kernel", "identity_kernel",
    "save_kernel", "load_kernel", "max_entry", "max_entry_distance", "window", "row_l1_norm",
    "martin_kernel_row", "fit_quotient_exponent", "height_difference_constant",
    "c_bound_constant", "b_bound_constant", "b_segment_bound_constant", "QuotientFit",
    "fraction_str", "segment",
]
