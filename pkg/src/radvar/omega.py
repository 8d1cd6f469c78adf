"""Refinement limits of composed perturbed kernels and their properties.

For a partition mu = {j_1 < ... < j_K} of a height segment the composed
kernel is omega~_{j_K} o ... o omega~_{j_1}; in operator form the factor for
the highest segment sits on the left.  The limit kernel omega_Delta is
approached along dyadic partitions and the last two iterates are combined by
Richardson extrapolation, since increments halve with the mesh width.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field, replace
from fractions import Fraction

import numpy as np

from .errors import NoConvergence, NonPositiveOmega, NonPositivePsi, PreconditionViolated
from .kernels import (
    DiscreteKernel,
    KernelFactory,
    max_entry,
    max_entry_distance,
    row_l1_norm,
    window,
)
from .partitions import (
    Partition,
    Segment,
    as_fraction,
    doubling_decomposition,
    joint_lambda_refinement,
    make_dyadic,
    seg,
)


@dataclass(frozen=True)
class OmegaConfig:
    epsilon: float = 0.05
    tol: float = 2e-4
    n_max: int = 9
    min_depth: int = 3
    eps_grid: tuple = (0.02, 0.05, 0.1, 0.2, 0.4)
    extrapolate: bool = True
    independence: bool = False
    n_quad: int = 1

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.n_max < 3:
            raise ValueError("n_max must be at least 3")
        if any(not 0 < e < 1 for e in self.eps_grid):
            raise ValueError("epsilon grid must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "tol": self.tol, "n_max": self.n_max,
                "min_depth": self.min_depth, "eps_grid": list(self.eps_grid),
                "extrapolate": self.extrapolate, "independence": self.independence,
                "n_quad": self.n_quad}


@dataclass
class ConvergenceReport:
    segment: Segment
    epsilon: float
    increments: list
    sup_lengths: list
    rate: float | None
    slope: float | None
    depth: int
    mean_one: float
    min_entry: float
    row_l1: float
    independence: float | None = None
    independence_increments: list = dc_field(default_factory=list)
    runtime: float = 0.0

    def to_dict(self) -> dict:
        return {
            "segment": self.segment.to_json(),
            "epsilon": self.epsilon,
            "increments": self.increments,
            "sup_lengths": self.sup_lengths,
            "rate": self.rate,
            "slope": self.slope,
            "depth": self.depth,
            "mean_one": self.mean_one,
            "min_entry": self.min_entry,
            "row_l1": self.row_l1,
            "independence": self.independence,
            "independence_increments": self.independence_increments,
            "runtime": self.runtime,
        }

    def csv_rows(self) -> list:
        return [("depth", "sup_length", "increment")] + [
            (n + 1, h, inc) for n, (h, inc) in enumerate(zip(self.sup_lengths[1:], self.increments))]


def _fit_rate(increments, burn_in: int = 3) -> tuple[float | None, float | None]:
    """Geometric-mean ratio of increments past the burn-in, and the log-log slope
    of increments against the partition mesh width (halving per depth)."""
    tail = [v for v in increments[burn_in - 1:] if v > 0]
    if len(tail) < 2:
        return None, None
    ratios = np.array(tail[1:]) / np.array(tail[:-1])
    rate = float(np.exp(np.mean(np.log(ratios))))
    return rate, float(-math.log2(rate))


class OmegaBuilder:
    """Constructs Pi^mu, omega_Delta and omega_{[y,1]} for one field and epsilon."""

    def __init__(self, factory: KernelFactory, cfg: OmegaConfig | None = None):
        self.factory = factory
        self.cfg = cfg or OmegaConfig()
        self.mesh = factory.mesh
        self.rows, self.cols = window(self.mesh)
        self._omega: dict = {}
        self._composite: dict = {}
        self.reports: dict = {}

    def with_epsilon(self, eps: float) -> "OmegaBuilder":
        """A builder sharing the kernel cache but using another epsilon."""
        return OmegaBuilder(self.factory, replace(self.cfg, epsilon=eps))

    def _kernel(self, mass, kind, **kw) -> DiscreteKernel:
        return DiscreteKernel(mass, self.mesh.weights, kind, epsilon=self.cfg.epsilon,
                              provenance="composed", **kw)

    def distance(self, a: DiscreteKernel, b: DiscreteKernel) -> float:
        return max_entry_distance(a, b, self.rows, self.cols)

    def relative_distance(self, a: DiscreteKernel, b: DiscreteKernel) -> float:
        return self.distance(a, b) / max_entry(b, self.rows, self.cols)

    def iterate_pi(self, mu: Partition) -> DiscreteKernel:
        eps, nq = self.cfg.epsilon, self.cfg.n_quad
        prod = None
        for j in mu:
            w = self.factory.omega_tilde(j, eps, nq).mass
            prod = w if prod is None else w @ prod
        return self._kernel(prod, "pi", segment=mu.parent)

    def _limit(self, partitions, label: str):
        """Iterate along a refining sequence until increments drop below tol.

        Increments are max-entry distances relative to the largest entry of
        the newer iterate, since densities grow like 1/m(Delta) near 0.
        """
        cfg = self.cfg
        prev, incs, sups = None, [], []
        for n, mu in enumerate(partitions):
            cur = self.iterate_pi(mu)
            sups.append(float(mu.sup_length))
            if prev is not None:
                scale = max_entry(cur, self.rows, self.cols)
                incs.append(self.distance(cur, prev) / scale)
                if n >= cfg.min_depth and incs[-1] < cfg.tol:
                    return cur, prev, incs, sups
            prev = cur
        raise NoConvergence(f"{label}: increment {incs[-1]:.3g} above {cfg.tol} at depth {cfg.n_max}")

    def omega_segment(self, delta: Segment) -> tuple[DiscreteKernel, ConvergenceReport]:
        """omega_Delta along dyadic refinement, with an optional second sequence."""
        key = (delta, self.cfg.epsilon)
        if key in self._omega:
            return self._omega[key], self.reports[key]
        t0 = time.perf_counter()
        cfg = self.cfg
        dyadic = (make_dyadic(delta, n) for n in range(cfg.n_max + 1))
        cur, prev, incs, sups = self._limit(dyadic, f"omega on {delta}")
        mass = 2 * cur.mass - prev.mass if cfg.extrapolate else cur.mass
        omega = self._kernel(mass, "omega", segment=delta)
        rate, slope = _fit_rate(incs)
        report = ConvergenceReport(
            delta, cfg.epsilon, incs, sups, rate, slope, len(incs),
            mean_one=float(np.max(np.abs(omega.row_integrals() - 1))),
            min_entry=float(np.min(omega.values[self.rows][:, self.cols])),
            row_l1=row_l1_norm(omega, self.rows))
        if cfg.independence:
            other, dist, other_incs = self.independence_check(delta, omega)
            report.independence = dist
            report.independence_increments = other_incs
        report.runtime = time.perf_counter() - t0
        self._omega[key] = omega
        self.reports[key] = report
        return omega, report

    def second_sequence(self, delta: Segment, n: int) -> Partition:
        """2-regular joint refinement of d_n with a split at one third of Delta.

        The result is uniform with 3 * 2^n pieces, so it never meets the
        dyadic sequence while keeping the same error structure.
        """
        cut = delta.m + delta.length / 3
        return joint_lambda_refinement(make_dyadic(delta, n),
                                       Partition.from_breaks([delta.m, cut, delta.M]), 2)

    def independence_check(self, delta: Segment, omega: DiscreteKernel):
        seq = (self.second_sequence(delta, n) for n in range(self.cfg.n_max + 1))
        cur, prev, incs, _ = self._limit(seq, f"second sequence on {delta}")
        other = 2 * cur.mass - prev.mass if self.cfg.extrapolate else cur.mass
        other = self._kernel(other, "omega", segment=delta)
        return other, self.relative_distance(other, omega), incs

    def omega(self, delta: Segment) -> DiscreteKernel:
        """omega_Delta; long segments are assembled from doubling pieces."""
        if delta.m > 0 and delta.length >= delta.m and len(doubling_decomposition(delta)) > 1:
            key = (delta, self.cfg.epsilon)
            if key not in self._composite:
                prod = None
                for piece in doubling_decomposition(delta):
                    w = self.omega_segment(piece)[0].mass
                    prod = w if prod is None else w @ prod
                self._composite[key] = self._kernel(prod, "omega", segment=delta)
            return self._composite[key]
        return self.omega_segment(delta)[0]

    def omega_height(self, y) -> DiscreteKernel:
        """omega_y = omega_{[y, 1]}."""
        y = as_fraction(y)
        if not 0 < y < 1:
            raise ValueError("height must lie in (0, 1)")
        return self.omega(Segment(y, Fraction(1)))


# ------------------------------------------------------------------ checks

def semigroup_discrepancy(builder: OmegaBuilder, a, b, c) -> float:
    """Relative max-entry distance between omega_[a,c] and omega_[b,c] o omega_[a,b]."""
    whole = builder.omega_segment(seg(a, c))[0]
    upper = builder.omega_segment(seg(b, c))[0]
    lower = builder.omega_segment(seg(a, b))[0]
    return builder.relative_distance(builder._kernel(upper.mass @ lower.mass, "composed"), whole)


def pi_bounds(builder: OmegaBuilder, delta: Segment, depth: int) -> dict:
    """Fitted constants for |Pi - omega~_Delta| <= c eps |Delta|^2/m^2 k_m and
    |Pi| <= k_|Delta| + c eps k_m on the dyadic partition of given depth."""
    f, eps = builder.factory, builder.cfg.epsilon
    rows = builder.rows
    m, L = float(delta.m), float(delta.length)
    pi = builder.iterate_pi(make_dyadic(delta, depth)).mass[rows]
    tilde = f.omega_tilde(delta, eps, 8).mass[rows]
    km = f.k(m).mass[rows]
    kl = f.k(L).mass[rows]
    with np.errstate(divide="ignore", invalid="ignore"):
        c_tilde = np.nanmax(np.abs(pi - tilde) / (eps * (L / m) ** 2 * km))
        c_env = np.nanmax((np.abs(pi) - kl) / (eps * km))
    return {"pi_vs_tilde": float(c_tilde), "pi_envelope": float(max(c_env, 0.0))}


@dataclass
class PositivityScan:
    eps_hat: float | None
    min_entries: dict          # eps -> {segment: min entry}
    monotone: bool
    warning: str | None = None

    def to_dict(self) -> dict:
        return {"eps_hat": self.eps_hat, "monotone": self.monotone, "warning": self.warning,
                "min_entries": {str(e): {str(k): v for k, v in d.items()}
                                for e, d in self.min_entries.items()}}


def positivity_scan(builder: OmegaBuilder, deltas, eps_grid=None) -> PositivityScan:
    """Largest grid epsilon with omega_Delta entrywise positive on every Delta."""
    grid = sorted(eps_grid or builder.cfg.eps_grid)
    table = {}
    for eps in grid:
        b = builder if eps == builder.cfg.epsilon else builder.with_epsilon(eps)
        table[eps] = {}
        for delta in deltas:
            if delta.length < delta.m:
                raise PreconditionViolated(f"need |Delta| >= m(Delta) for {delta}")
            om = b.omega(delta)
            table[eps][delta] = float(np.min(om.values[b.rows][:, b.cols]))
    worst = [min(table[e].values()) for e in grid]
    monotone = all(x >= y - 1e-12 for x, y in zip(worst, worst[1:]))
    ok = [e for e, v in zip(grid, worst) if v > 0]
    eps_hat = max(ok) if ok else None
    warning = None
    if eps_hat is None:
        warning = "no grid epsilon gives a positive kernel"
    elif eps_hat == grid[0] and len(grid) > 1:
        warning = "threshold at the smallest grid point"
    return PositivityScan(eps_hat, table, monotone, warning)


@dataclass
class PhiPropertyResult:
    constant: float
    ratios: dict               # (y, Delta) -> max |Omega psi - psi| / psi * y/|Delta|
    envelopes_hold: bool

    def to_dict(self) -> dict:
        return {"constant": self.constant, "envelopes_hold": self.envelopes_hold,
                "ratios": {f"{y}|{d}": v for (y, d), v in self.ratios.items()}}


def phi_ratio(builder: OmegaBuilder, delta: Segment, y: float, psi) -> tuple[float, np.ndarray]:
    """max over evaluation nodes of |Omega psi - psi| / psi, scaled by y/|Delta|."""
    psi = np.asarray(psi, dtype=float)
    if np.any(psi[builder.rows] <= 0):
        raise NonPositivePsi("psi must be positive on the evaluation window")
    if not delta.M <= as_fraction(y):
        raise PreconditionViolated("Delta must lie in (0, y]")
    out = builder.omega(delta).mass @ psi
    rel = np.abs(out - psi)[builder.rows] / psi[builder.rows]
    return float(rel.max() * y / float(delta.length)), out


def phi_property_check(builder: OmegaBuilder, cases, tol: float = 0.0) -> PhiPropertyResult:
    """Fit the Phi-property constant over (y, Delta, psi) cases.

    ``cases`` holds (y, Delta, psi) with psi the node values of a positive
    harmonic function on the domain lowered by y.  The exponential envelopes
    are then checked with the fitted constant.
    """
    ratios, outs = {}, []
    for y, delta, psi in cases:
        r, out = phi_ratio(builder, delta, y, psi)
        key = (float(y), delta)
        ratios[key] = max(ratios.get(key, 0.0), r)
        outs.append((y, delta, np.asarray(psi), out))
    c = max(ratios.values())
    ok = True
    rows = builder.rows
    for y, delta, psi, out in outs:
        t = c * float(delta.length) / float(y)
        lo = np.exp(-4 * t) * psi[rows]
        hi = np.exp(2 * t) * psi[rows]
        ok &= bool(np.all(out[rows] >= lo - tol) and np.all(out[rows] <= hi + tol))
    return PhiPropertyResult(c, ratios, ok)


def weak_phi_constant(builder: OmegaBuilder, delta: Segment, psi) -> float:
    """Smallest c with |psi - Omega psi| <= |psi - K_|Delta| psi| + c (|Delta|/m)||psi||."""
    psi = np.asarray(psi, dtype=float)
    rows = builder.rows
    om = builder.omega(delta).mass @ psi
    kp = builder.factory.k(float(delta.length)).mass @ psi
    excess = np.abs(psi - om)[rows] - np.abs(psi - kp)[rows]
    scale = float(delta.length / delta.m) * np.max(np.abs(psi))
    return float(max(excess.max(), 0.0) / scale)


def comparison_constant(builder: OmegaBuilder, eta, y, phi_y) -> float:
    """Smallest c with Omega_eta phi_y <= c Omega_y phi_y on the window."""
    a = builder.omega_height(eta).mass @ phi_y
    b = builder.omega_height(y).mass @ phi_y
    rows = builder.rows
    if np.any(b[rows] <= 0):
        raise NonPositiveOmega("Omega_y phi_y is not positive")
    return float(np.max(a[rows] / b[rows]))


@dataclass
class EnvelopeResult:
    heights: list
    lower: list          # per y: min of log(omega_y/k_{1-y})/log(y)
    upper: list          # per y: max of the same
    const_minus: float
    const_plus: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def omega_vs_k_envelope(builder: OmegaBuilder, heights) -> EnvelopeResult:
    """Exponents e with omega_y = y^e k_{1-y} entrywise, extremes per height.

    The ratio of densities equals the ratio of operator-form entries since
    both share the column weights.
    """
    lows, highs = [], []
    for y in heights:
        om = builder.omega_height(y).mass[builder.rows][:, builder.cols]
        if np.any(om <= 0):
            raise NonPositiveOmega(f"omega_y not positive at y={y}, eps={builder.cfg.epsilon}")
        k = builder.factory.k(1 - float(y)).mass[builder.rows][:, builder.cols]
        e = np.log(om / k) / math.log(float(y))
        lows.append(float(e.min()))
        highs.append(float(e.max()))
    eps = builder.cfg.epsilon
    # omega <= y^{-c+ eps} k means e >= -c+ eps; omega >= y^{c- eps} k means e <= c- eps
    return EnvelopeResult([float(y) for y in heights], lows, highs,
                          max(0.0, -min(lows)) / eps, max(0.0, max(highs)) / eps)


@dataclass
class OdeResult:
    residual: float
    lhs: float
    rhs: float
    lipschitz: float
    n_quad: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ode_residual(builder: OmegaBuilder, node: int, y1, y2, data, n_quad: int = 8) -> OdeResult:
    """Residual of f(y2) - f(y1) = eps int_{y1}^{y2} (Omega_y B_y phi_y)(x) dy.

    f(y) = (Omega_y phi_y)(x) with phi_y = K_y phi the height-y trace of the
    extension of boundary data phi.  The integral uses composite Simpson on
    n_quad (even) panels; omega_y on the grid is built top-down by composing
    omega on consecutive grid segments.
    """
    y1, y2 = as_fraction(y1), as_fraction(y2)
    if y1 == y2:
        return OdeResult(0.0, 0.0, 0.0, 0.0, 0)
    if not 0 < y1 < y2 <= 1:
        raise ValueError("need 0 < y1 < y2 <= 1")
    if n_quad % 2:
        raise ValueError("Simpson quadrature needs an even panel count")
    f = builder.factory
    eps = builder.cfg.epsilon
    data = np.asarray(data, dtype=float)
    grid = [y1 + (y2 - y1) * Fraction(k, n_quad) for k in range(n_quad + 1)]
    omegas = [None] * (n_quad + 1)
    omegas[-1] = np.eye(f.mesh.size) if y2 == 1 else builder.omega(Segment(y2, Fraction(1))).mass
    for k in range(n_quad - 1, -1, -1):
        piece = builder.omega_segment(Segment(grid[k], grid[k + 1]))[0].mass
        omegas[k] = omegas[k + 1] @ piece
    fvals, gvals = [], []
    for y, om in zip(grid, omegas):
        yf = float(y)
        phi_y = f.k(yf).mass @ data
        fvals.append(float(om[node] @ phi_y))
        gvals.append(eps * float(om[node] @ (f.b(yf).mass @ phi_y)))
    h = float(y2 - y1) / n_quad
    w = np.ones(n_quad + 1)
    w[1:-1:2], w[2:-1:2] = 4, 2
    rhs = float(h / 3 * np.dot(w, gvals))
    lhs = fvals[-1] - fvals[0]
    lip = float(np.max(np.abs(np.diff(fvals))) / h)
    return OdeResult(abs(lhs - rhs), lhs, rhs, lip, n_quad)


def operator_norm(builder: OmegaBuilder, delta: Segment) -> float:
    """sup_x sum_j |omega_Delta[x, j]| w_j over the evaluation window."""
    return row_l1_norm(builder.omega(delta), builder.rows)
