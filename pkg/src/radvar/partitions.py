"""Exact-rational segments and partitions of height intervals.

All arithmetic uses ``fractions.Fraction`` so that certificates, several of
which hold with equality, are decided exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

from .errors import NoFeasibleN, PreconditionViolated


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12) if not x.is_integer() else Fraction(int(x))
    return Fraction(x)


def fraction_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True, order=True)
class Segment:
    """Closed interval [m, M] with 0 <= m < M."""
    m: Fraction
    M: Fraction

    def __post_init__(self):
        object.__setattr__(self, "m", as_fraction(self.m))
        object.__setattr__(self, "M", as_fraction(self.M))
        if not 0 <= self.m < self.M:
            raise ValueError(f"invalid segment [{self.m}, {self.M}]")

    @property
    def length(self) -> Fraction:
        return self.M - self.m

    @property
    def ratio(self) -> Fraction:
        if self.m == 0:
            raise ValueError("ratio M/m undefined for a segment starting at 0")
        return self.M / self.m

    def contains(self, other: "Segment") -> bool:
        return self.m <= other.m and other.M <= self.M

    def bisect(self) -> tuple["Segment", "Segment"]:
        mid = self.m + self.length / 2
        return Segment(self.m, mid), Segment(mid, self.M)

    def to_json(self) -> list[str]:
        return [fraction_str(self.m), fraction_str(self.M)]

    def __repr__(self) -> str:
        return f"[{self.m}, {self.M}]"


def seg(m, M) -> Segment:
    return Segment(as_fraction(m), as_fraction(M))


def union_length(segs: Iterable[Segment]) -> Fraction:
    """|U(nu)|: total length of a collection of non-overlapping segments."""
    return sum((s.length for s in segs), Fraction(0))


def union_min(segs: Iterable[Segment]) -> Fraction:
    return min(s.m for s in segs)


class Partition:
    """Contiguous increasing sequence of segments covering a parent segment."""

    def __init__(self, segments: Sequence[Segment]):
        segs = tuple(segments)
        if not segs:
            raise ValueError("a partition needs at least one segment")
        for a, b in zip(segs, segs[1:]):
            if a.M != b.m:
                raise ValueError(f"segments {a} and {b} are not contiguous")
        self.segments = segs

    @classmethod
    def from_breaks(cls, breaks: Sequence) -> "Partition":
        b = [as_fraction(x) for x in breaks]
        return cls([Segment(lo, hi) for lo, hi in zip(b, b[1:])])

    @property
    def parent(self) -> Segment:
        return Segment(self.segments[0].m, self.segments[-1].M)

    @property
    def breaks(self) -> list[Fraction]:
        return [self.segments[0].m] + [s.M for s in self.segments]

    @property
    def lengths(self) -> list[Fraction]:
        return [s.length for s in self.segments]

    @property
    def sup_length(self) -> Fraction:
        return max(self.lengths)

    @property
    def inf_length(self) -> Fraction:
        return min(self.lengths)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, k):
        return self.segments[k]

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and self.segments == other.segments

    def __hash__(self) -> int:
        return hash(self.segments)

    def __repr__(self) -> str:
        return "Partition(" + ", ".join(map(repr, self.segments)) + ")"

    def refines(self, other: "Partition") -> bool:
        """Every segment of self lies inside some segment of other."""
        return self.parent == other.parent and set(other.breaks) <= set(self.breaks)

    def bisected(self) -> "Partition":
        return Partition([h for s in self.segments for h in s.bisect()])

    def to_json(self) -> str:
        return json.dumps([s.to_json() for s in self.segments])

    @classmethod
    def from_json(cls, text: str) -> "Partition":
        return cls([Segment(Fraction(a), Fraction(b)) for a, b in json.loads(text)])


# ------------------------------------------------------------- operations

def make_dyadic(delta: Segment, n: int) -> Partition:
    """The dyadic partition d_n(delta) into 2^n equal segments."""
    if n < 0:
        raise ValueError("depth must be nonnegative")
    step = delta.length / 2**n
    return Partition.from_breaks([delta.m + i * step for i in range(2**n + 1)])


def is_lambda_regular(segs: Sequence[Segment], lam) -> bool:
    lens = [s.length for s in segs]
    return max(lens) <= as_fraction(lam) * min(lens)


def is_weakly_regular(segs: Sequence[Segment], lam, total: Fraction | None = None) -> bool:
    """sup |j| <= lam * |U| / count, with |U| the covered length."""
    lens = [s.length for s in segs]
    total = union_length(segs) if total is None else total
    return max(lens) * len(lens) <= as_fraction(lam) * total


def regularity(mu, lam) -> tuple[bool, bool]:
    """(lambda-regular, weakly lambda-regular), decided exactly."""
    lam = as_fraction(lam)
    if lam < 1:
        raise ValueError("lambda must be at least 1")
    segs = list(mu)
    strong = is_lambda_regular(segs, lam)
    weak = is_weakly_regular(segs, lam)
    if strong and not weak:
        raise AssertionError("lambda-regular partition failed weak regularity")
    return strong, weak


def _rational_gcd(values: Sequence[Fraction]) -> Fraction:
    den = math.lcm(*[v.denominator for v in values])
    g = math.gcd(*[v.numerator * (den // v.denominator) for v in values])
    return Fraction(g, den)


def joint_lambda_refinement(tau: Partition, mu: Partition, lam) -> Partition:
    """Common lambda-regular refinement of two partitions of the same segment.

    With eta the shortest joint cell: for lam >= 2 every joint cell is cut
    into eta-pieces with the remainder merged into its last piece (length
    < 2 eta); for 1 < lam < 2 cells are cut into equal pieces of length in
    [theta, lam*theta] with theta = eta/ceil(1/(lam-1)); for lam = 1 the
    pieces all have the rational gcd of the joint lengths.
    """
    lam = as_fraction(lam)
    if tau.parent != mu.parent:
        raise ValueError("partitions cover different segments")
    if lam < 1:
        raise ValueError("lambda must be at least 1")
    joint = Partition.from_breaks(sorted(set(tau.breaks) | set(mu.breaks)))
    lens = joint.lengths
    eta = min(lens)
    breaks = [joint.parent.m]
    if lam == 1 or all((ell / eta).denominator == 1 for ell in lens):
        theta = eta if all((ell / eta).denominator == 1 for ell in lens) else _rational_gcd(lens)
        for s in joint:
            k = int(s.length / theta)
            breaks += [s.m + i * theta for i in range(1, k + 1)]
    elif lam >= 2:
        for s in joint:
            k = int(s.length // eta)
            breaks += [s.m + i * eta for i in range(1, k)] + [s.M]
    else:
        n = math.ceil(1 / (lam - 1))
        theta = eta / n
        for s in joint:
            k = int(s.length // theta)
            step = s.length / k
            breaks += [s.m + i * step for i in range(1, k + 1)]
    out = Partition.from_breaks(breaks)
    assert is_lambda_regular(out.segments, lam)
    return out


def subpartition_bound(tau: Partition, mu: Sequence[Segment], lam) -> Fraction:
    """Weak-regularity constant of tau minus mu.

    Returns lam*|tau_1|/(|tau| - lam*|mu|) (|.| counts segments) after
    certifying sup_{tau_1}|j| <= bound * |U(tau_1)| / |tau_1| exactly.
    """
    lam = as_fraction(lam)
    mu_set = set(mu)
    if not mu_set <= set(tau.segments):
        raise ValueError("mu must be a sub-collection of tau")
    if lam * len(mu_set) >= len(tau):
        raise PreconditionViolated("need lam*|mu| < |tau|")
    if not is_weakly_regular(tau.segments, lam):
        raise PreconditionViolated("tau is not weakly lambda-regular")
    tau1 = [s for s in tau if s not in mu_set]
    bound = lam * len(tau1) / (len(tau) - lam * len(mu_set))
    sup = max(s.length for s in tau1)
    if not sup <= bound * union_length(tau1) / len(tau1):
        raise AssertionError("subpartition bound certificate failed")
    return bound


@dataclass(frozen=True)
class Counterexample:
    tau: Partition
    tau1: tuple
    tau2: tuple
    omega: Fraction
    N: int
    eps: Fraction

    def certificate(self, A: int, lam) -> dict:
        """Exact checks: tau weakly lam-regular and tau_1 meets the A bound."""
        lam = as_fraction(lam)
        sup1 = max(s.length for s in self.tau1)
        rhs1 = A * union_length(self.tau1) / len(self.tau1)
        return {
            "tau_weakly_regular": is_weakly_regular(self.tau.segments, lam),
            "tau1_sup": sup1,
            "tau1_A_mean": rhs1,
            "tau1_violates": sup1 >= rhs1,
            "equality": sup1 == rhs1,
            "covers": self.tau.parent,
        }


def counterexample_partition(delta: Segment, A: int, lam, max_N: int = 100_000) -> Counterexample:
    """Weakly lam-regular tau of delta whose head tau_1 breaks weak A-regularity.

    tau_1 is one segment of length omega followed by A of length omega/A^2;
    the rest are N - A - 1 segments of length (1+eps)omega/lam with
    eps = (lam-1)/2, so tau has N segments.  N is the first value from A + 2
    on satisfying (N-A-1)(1+eps) >= lam(N/lam - 1 - 1/A), which is exactly
    the weak-regularity certificate for this count.
    """
    lam = as_fraction(lam)
    if A < 1 or lam <= 1:
        raise ValueError("need A >= 1 and lambda > 1")
    eps = (lam - 1) / 2
    tail = (1 + eps) / lam
    for N in range(A + 2, max_N):
        if (N - A - 1) * (1 + eps) >= lam * (Fraction(N) / lam - 1 - Fraction(1, A)):
            break
    else:
        raise NoFeasibleN(f"no N below {max_N}")
    omega = delta.length / (1 + Fraction(1, A) + (N - A - 1) * tail)
    lens = [omega] + [omega / A**2] * A + [tail * omega] * (N - A - 1)
    breaks = [delta.m]
    for ell in lens:
        breaks.append(breaks[-1] + ell)
    tau = Partition.from_breaks(breaks)
    assert tau.parent == delta
    return Counterexample(tau, tau.segments[:A + 1], tau.segments[A + 1:], omega, N, eps)


def doubling_decomposition(delta: Segment) -> Partition:
    """Pieces [2^k m, 2^{k+1} m] and a last [2^n m, M], each with m(j) <= |j| <= 3m(j)."""
    m, M = delta.m, delta.M
    if m <= 0:
        raise PreconditionViolated("doubling decomposition needs m(delta) > 0")
    if delta.length < m:
        raise PreconditionViolated("need |delta| >= m(delta)")
    breaks = [m]
    while 4 * breaks[-1] <= M:
        breaks.append(2 * breaks[-1])
    breaks.append(M)
    out = Partition.from_breaks(breaks)
    for s in out:
        if not s.m <= s.length <= 3 * s.m:
            raise AssertionError(f"piece {s} violates m <= |j| <= 3m")
    return out


def lambda_beta_holds(mu: Partition, beta, lam) -> bool:
    """Check both subpartition statements for every nonempty sub-collection."""
    beta, lam = as_fraction(beta), as_fraction(lam)
    delta = mu.parent
    beta_pre = delta.length <= beta * delta.m
    reg_pre = is_lambda_regular(mu.segments, lam)
    segs = mu.segments
    for k in range(1, len(segs) + 1):
        for nu in combinations(segs, k):
            if beta_pre and not union_length(nu) <= beta * union_min(nu):
                return False
            if reg_pre and not is_lambda_regular(nu, lam):
                return False
    return True
