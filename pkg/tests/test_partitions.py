from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from radvar.errors import PreconditionViolated
from radvar.partitions import (
    Partition,
    Segment,
    counterexample_partition,
    doubling_decomposition,
    is_lambda_regular,
    is_weakly_regular,
    joint_lambda_refinement,
    lambda_beta_holds,
    make_dyadic,
    regularity,
    seg,
    subpartition_bound,
)

REFERENCE_TAU = Partition.from_breaks([0, F(1, 16), F(7, 16), F(1, 2), 1])

fractions = st.fractions(min_value=F(1, 64), max_value=4, max_denominator=64)


@st.composite
def partitions(draw, min_size=1, max_size=8):
    start = draw(st.fractions(min_value=F(1, 8), max_value=2, max_denominator=16))
    lens = draw(st.lists(fractions, min_size=min_size, max_size=max_size))
    breaks = [start]
    for ell in lens:
        breaks.append(breaks[-1] + ell)
    return Partition.from_breaks(breaks)


def test_reference_partition_is_weakly_but_not_strongly_2_regular():
    assert regularity(REFERENCE_TAU, 2) == (False, True)


def test_reference_partition_subpartition_loses_weak_regularity():
    sub = REFERENCE_TAU.segments[:3]
    assert Partition(sub).parent == seg(0, F(1, 2))
    assert regularity(sub, 2) == (False, False)


def test_segment_rejects_empty_and_negative():
    with pytest.raises(ValueError):
        seg(1, 1)
    with pytest.raises(ValueError):
        seg(-1, 1)


def test_dyadic_lengths_and_count():
    d = make_dyadic(seg(F(1, 4), F(1, 2)), 3)
    assert len(d) == 8
    assert set(d.lengths) == {F(1, 32)}
    assert d.parent == seg(F(1, 4), F(1, 2))


def test_partition_json_round_trip():
    assert Partition.from_json(REFERENCE_TAU.to_json()) == REFERENCE_TAU


@pytest.mark.parametrize("A,lam,N,omega", [
    (2, F(3, 2), 6, F(1, 4)), (2, 2, 4, F(4, 9)), (2, 3, 4, F(6, 13)),
    (3, 2, 7, F(12, 43)), (5, 2, 14, F(5, 36)), (5, 3, 9, F(5, 16)),
])
def test_counterexample_values(A, lam, N, omega):
    ce = counterexample_partition(seg(0, 1), A, lam)
    assert (ce.N, ce.omega) == (N, omega)
    assert len(ce.tau) == N
    cert = ce.certificate(A, lam)
    assert cert["tau_weakly_regular"] and cert["tau1_violates"]


def test_doubling_decomposition_pieces():
    d = doubling_decomposition(seg(F(1, 8), 1))
    assert d.breaks == [F(1, 8), F(1, 4), F(1, 2), 1]
    with pytest.raises(PreconditionViolated):
        doubling_decomposition(seg(0, 1))
    with pytest.raises(PreconditionViolated):
        doubling_decomposition(seg(1, F(3, 2)))


@given(partitions(min_size=1), st.integers(0, 4))
@settings(max_examples=60, deadline=None)
def test_dyadic_refines_and_is_regular(mu, n):
    d = make_dyadic(mu.parent, n)
    assert is_lambda_regular(d.segments, 1)
    assert make_dyadic(mu.parent, n + 1).refines(d)


@given(partitions(max_size=5), partitions(max_size=5), st.sampled_from([F(2), F(3)]))
@settings(max_examples=60, deadline=None)
def test_joint_refinement_refines_both_and_is_regular(a, b, lam):
    b = Partition.from_breaks([a.parent.m + (x - b.parent.m) * a.parent.length / b.parent.length
                               for x in b.breaks])
    j = joint_lambda_refinement(a, b, lam)
    assert j.refines(a) and j.refines(b)
    assert is_lambda_regular(j.segments, lam)


@given(st.integers(0, 5), st.integers(0, 5), st.sampled_from([F(1), F(3, 2)]))
@settings(max_examples=40, deadline=None)
def test_joint_refinement_of_dyadics_for_small_lambda(n, k, lam):
    delta = seg(F(1, 4), F(1, 2))
    j = joint_lambda_refinement(make_dyadic(delta, n), make_dyadic(delta, k), lam)
    assert j == make_dyadic(delta, max(n, k))
    cut = Partition.from_breaks([delta.m, delta.m + delta.length / 3, delta.M])
    j = joint_lambda_refinement(make_dyadic(delta, n), cut, lam)
    assert is_lambda_regular(j.segments, lam) and j.refines(cut)


@given(partitions(min_size=2, max_size=10), st.sampled_from([F(3, 2), F(2), F(3)]), st.data())
@settings(max_examples=80, deadline=None)
def test_subpartition_bound_holds_on_weakly_regular(tau, lam, data):
    if not is_weakly_regular(tau.segments, lam):
        return
    k = data.draw(st.integers(0, -(-len(tau) // lam) - 1))
    mu = data.draw(st.permutations(tau.segments))[:int(k)]
    bound = subpartition_bound(tau, mu, lam)
    rest = [s for s in tau if s not in mu]
    assert max(s.length for s in rest) * len(rest) <= bound * sum(s.length for s in rest)


@given(partitions(min_size=1, max_size=7), st.sampled_from([F(1), F(2)]),
       st.fractions(min_value=0, max_value=2, max_denominator=4))
@settings(max_examples=60, deadline=None)
def test_lambda_beta_statements(mu, lam, slack):
    beta = mu.parent.length / mu.parent.m + slack
    assert lambda_beta_holds(mu, beta, lam)


@given(partitions(min_size=1), st.sampled_from([F(1), F(2), F(5, 2)]))
@settings(max_examples=60, deadline=None)
def test_regular_implies_weakly_regular(mu, lam):
    strong, weak = regularity(mu, lam)
    assert weak or not strong
