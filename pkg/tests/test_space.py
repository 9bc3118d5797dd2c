"""Tests for the approximation space: dyadic metric, basic opens, probes.

The metric tests lean on two facts worth stating once: the distance is
``2^-k`` for the least ``k`` where the labelled restrictions to ``{0..k}``
differ, and approximations that agree as far as both reach only ever
yield an upper bound, never an exact value.
"""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from amalgam.classes import bundled
from amalgam.errors import InvalidStructure
from amalgam.limits import Chain, build_limit
from amalgam.space import (
    AtMost,
    Containment,
    Exact,
    PointApprox,
    distance_at_depth,
    in_basic_open,
    orbit_density_probe,
)
from amalgam.structures import BINARY, FinStructure, Signature
from oracles import graph, random_graph

GRAPHS = bundled("graphs")


def approx(n: int, edges) -> PointApprox:
    return PointApprox(graph(n, edges), n - 1)


@pytest.fixture(scope="module")
def graph_chain() -> Chain:
    return build_limit(GRAPHS, 60, seed=0)


@pytest.fixture(scope="module")
def edgeless_chain() -> Chain:
    return Chain.from_stages(GRAPHS, [graph(1, []), graph(2, []), graph(3, [])])


# -- approximations --------------------------------------------------------------


def test_approx_must_sit_on_an_initial_segment():
    sparse = FinStructure.make(BINARY, [0, 2], {})
    with pytest.raises(InvalidStructure):
        PointApprox(sparse, 1)
    with pytest.raises(InvalidStructure):
        PointApprox(graph(2, []), -1)


def test_approx_of_chain_and_restrict(graph_chain: Chain):
    point = PointApprox.of_chain(graph_chain, 5)
    assert point.depth == 5
    assert point.structure == graph_chain.top.induced(range(6))
    shallow = point.restrict(2)
    assert shallow.structure.size == 3
    with pytest.raises(InvalidStructure):
        shallow.restrict(4)
    with pytest.raises(InvalidStructure):
        PointApprox.of_chain(graph_chain, graph_chain.top.size)


def test_approx_json_round_trip():
    point = approx(3, [(0, 1), (1, 2)])
    assert PointApprox.from_json_obj(point.to_json_obj()) == point


# -- the metric ------------------------------------------------------------------


def test_identical_approximations_bound_only():
    m = approx(6, [(0, 1), (2, 3)])
    assert distance_at_depth(m, m) == AtMost(Fraction(1, 64))


def test_first_difference_at_the_edge_01():
    m = approx(6, [(0, 1)])
    n = approx(6, [])
    assert distance_at_depth(m, n) == Exact(Fraction(1, 2))


def test_first_difference_at_the_edge_02():
    m = approx(6, [(0, 2)])
    n = approx(6, [])
    assert distance_at_depth(m, n) == Exact(Fraction(1, 4))


def test_distance_requires_shared_signature():
    other = Signature((("R", 2),))
    with pytest.raises(InvalidStructure):
        distance_at_depth(
            approx(2, []), PointApprox(FinStructure.make(other, range(2), {}), 1)
        )


def test_agreement_on_shorter_depth_is_only_a_bound():
    deep = approx(8, [(6, 7)])
    shallow = approx(4, [])
    assert distance_at_depth(deep, shallow) == AtMost(Fraction(1, 16))


def test_symmetry_and_ultrametric_on_random_triples():
    rng = random.Random(42)
    points = [PointApprox(random_graph(rng, 9), 8) for _ in range(30)]
    triples = [(rng.choice(points), rng.choice(points), rng.choice(points)) for _ in range(300)]
    for m, n, p in triples:
        d_mn = distance_at_depth(m, n)
        assert d_mn == distance_at_depth(n, m)
        d_mp, d_pn = distance_at_depth(m, p), distance_at_depth(p, n)
        if all(isinstance(d, Exact) for d in (d_mn, d_mp, d_pn)):
            assert d_mn.value <= max(d_mp.value, d_pn.value)


def test_distance_below_threshold_iff_prefixes_agree():
    rng = random.Random(7)
    for _ in range(40):
        m = PointApprox(random_graph(rng, 7), 6)
        n = PointApprox(random_graph(rng, 7), 6)
        d = distance_at_depth(m, n)
        for k in range(1, 7):
            agree = m.structure.induced(range(k)) == n.structure.induced(range(k))
            if isinstance(d, Exact):
                assert (d.value <= Fraction(1, 2**k)) == agree
            else:
                assert agree  # AtMost only arises from agreement on the common depth


# -- basic open sets -------------------------------------------------------------


def test_open_set_membership_yes_and_no():
    base = graph(2, [(0, 1)])
    assert in_basic_open(base, approx(4, [(0, 1), (2, 3)])) is Containment.YES
    assert in_basic_open(base, approx(4, [(2, 3)])) is Containment.NO


def test_open_set_beyond_depth_is_unknown():
    far = FinStructure.make(BINARY, [0, 12], {"E": [(0, 12), (12, 0)]})
    assert in_basic_open(far, approx(6, [(0, 1)])) is Containment.UNKNOWN


def test_open_set_verdicts_stable_under_deepening():
    rng = random.Random(11)
    for _ in range(25):
        deep = PointApprox(random_graph(rng, 8), 7)
        elems = sorted(rng.sample(range(8), 3))
        base = deep.structure.induced(elems)
        if rng.random() < 0.5:  # sometimes perturb so NO cases occur too
            base = random_graph(rng, 8).induced(elems)
        verdicts = [
            in_basic_open(base, deep.restrict(d)) for d in range(deep.depth + 1)
        ]
        settled = [v for v in verdicts if v is not Containment.UNKNOWN]
        assert all(v is settled[0] for v in settled)
        assert verdicts[-1] is not Containment.UNKNOWN
        # once the universe is covered the verdict may never revert to unknown
        first = next(i for i, v in enumerate(verdicts) if v is not Containment.UNKNOWN)
        assert all(v is not Containment.UNKNOWN for v in verdicts[first:])


# -- orbit density ---------------------------------------------------------------


def test_probe_saturated_chain_is_dense(graph_chain: Chain):
    pivot = graph_chain.top.induced([0])
    report = orbit_density_probe(graph_chain, (0,), pivot, 2)
    assert report.dense_up_to_bound
    assert report.checked >= 3  # pivot itself, isolated add, adjacent add
    assert report.failures == ()


def test_probe_edgeless_chain_lists_the_edge_extension(edgeless_chain: Chain):
    pivot = edgeless_chain.top.induced([0])
    report = orbit_density_probe(edgeless_chain, (0,), pivot, 2)
    assert not report.dense_up_to_bound
    assert len(report.failures) == 1
    (missing,) = report.failures
    assert missing.rel("E")  # the extension joining a fresh point to 0


def test_probe_bound_zero_is_vacuous(edgeless_chain: Chain):
    pivot = edgeless_chain.top.induced([0])
    report = orbit_density_probe(edgeless_chain, (0,), pivot, 0)
    assert report.dense_up_to_bound


def test_probe_preconditions(graph_chain: Chain):
    unrealised = graph(2, [(0, 1)]).relabel({0: 0, 1: graph_chain.top.size + 5})
    with pytest.raises(InvalidStructure):
        orbit_density_probe(graph_chain, (0,), unrealised, 2)
    pivot = graph_chain.top.induced([0])
    with pytest.raises(InvalidStructure):
        orbit_density_probe(graph_chain, (3,), pivot, 2)


def test_probe_report_serializes(graph_chain: Chain):
    pivot = graph_chain.top.induced([0, 1])
    obj = orbit_density_probe(graph_chain, (0,), pivot, 3).to_json_obj()
    assert obj["fixed_core"] == [0]
    assert obj["extension_bound"] == 3
    assert isinstance(obj["dense_up_to_bound"], bool)
