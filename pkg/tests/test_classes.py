"""Tests for the class oracle: membership, type census, JEP/AP/WAP.

Core claims:
    - membership means "no forbidden pattern embeds", and matches a naive
      reimplementation on every bundled class
    - enumerate_types/count_types agree with exhaustive generation plus
      permutation-based isomorphism classification
    - solvers return validated certificates or honestly bounded failures,
      and identical inputs give identical answers
    - the amalgamation solver honours the agreement-on-A-only contract and
      accepts injection legs for instances posed with non-embedding maps
"""

from __future__ import annotations

import itertools

import pytest

from amalgam.classes import (
    ClassSpec,
    NoneUpTo,
    Witnessed,
    audit_hereditarity,
    bundled,
    bundled_names,
    count_types,
    embed_via_extension,
    enumerate_types,
    find_wap_witness,
    marked_extensions,
    membership,
    one_point_extensions,
    solve_ap,
    solve_jep,
)
from amalgam.errors import InvalidStructure
from amalgam.structures import (
    BINARY,
    Embedding,
    FinStructure,
    Injection,
    Signature,
    are_isomorphic,
    canonical_code,
    find_embedding,
)
from oracles import chain_order, graph, naive_member, naive_type_census, random_graph

GRAPHS = bundled("graphs")
ORDERS = bundled("linear-orders")
FORESTS = bundled("linear-forests")
TRIANGLE_FREE = bundled("triangle-free")
SPLIT = bundled("split")

P_SIG = Signature((("P", 1),))


def point(marked: bool) -> FinStructure:
    return FinStructure.make(P_SIG, [0], {"P": [(0,)] if marked else []})


# -- membership ------------------------------------------------------------------


def test_membership_triangle_free():
    k3 = graph(3, [(0, 1), (1, 2), (0, 2)])
    c5 = graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
    assert not membership(TRIANGLE_FREE, k3)
    assert membership(TRIANGLE_FREE, c5)


def test_membership_linear_orders():
    assert membership(ORDERS, chain_order(3))
    two_cycle = FinStructure.make(ORDERS.sig, range(2), {"R": [(0, 1), (1, 0)]})
    incomparable = FinStructure.make(ORDERS.sig, range(2), {"R": []})
    assert not membership(ORDERS, two_cycle)
    assert not membership(ORDERS, incomparable)


def test_membership_matches_naive_on_random_graphs():
    import random

    rng = random.Random(7)
    for _ in range(40):
        g = random_graph(rng, rng.randrange(1, 6))
        for spec in (GRAPHS, TRIANGLE_FREE, FORESTS):
            assert membership(spec, g) == naive_member(spec, g)


def test_membership_rejects_signature_mismatch():
    with pytest.raises(InvalidStructure):
        membership(ORDERS, graph(1, []))


def test_class_spec_rejects_empty_forbidden_pattern():
    empty = FinStructure.make(BINARY, [], {})
    with pytest.raises(InvalidStructure):
        ClassSpec(BINARY, (empty,), "bad")


# -- type census -----------------------------------------------------------------


def test_census_matches_naive_oracle_everywhere():
    for name in bundled_names():
        spec = bundled(name)
        assert count_types(spec, 3) == naive_type_census(spec, 3), name


def test_graph_census_frozen_counts():
    assert count_types(GRAPHS, 4) == {0: 1, 1: 1, 2: 2, 3: 4, 4: 11}


def test_orders_one_type_per_size():
    assert count_types(ORDERS, 5) == {n: 1 for n in range(6)}
    assert len(enumerate_types(ORDERS, 5)) == 6


def test_enumerate_types_is_sorted_deduplicated_and_member():
    types = enumerate_types(FORESTS, 4)
    keys = [(t.size, canonical_code(t)) for t in types]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)
    for t in types:
        assert membership(FORESTS, t)
        assert t.universe == tuple(range(t.size))
    for a, b in itertools.combinations(types, 2):
        assert not are_isomorphic(a, b)


# -- joint embedding -------------------------------------------------------------


def test_jep_graphs_witnessed_and_revalidates():
    k2 = graph(2, [(0, 1)])
    verdict = solve_jep(GRAPHS, k2, k2, 4)
    assert isinstance(verdict, Witnessed)
    w = verdict.witness
    assert membership(GRAPHS, w.amalgam)
    assert w.amalgam.size <= 4
    assert w.left.source == k2 and w.right.source == k2
    assert w.left.target == w.amalgam and w.right.target == w.amalgam


def test_jep_split_mixed_inputs_fail_exhaustively():
    verdict = solve_jep(SPLIT, point(True), point(False), 5)
    assert isinstance(verdict, NoneUpTo)
    assert verdict.bound == 5


def test_jep_orders_short_chains():
    verdict = solve_jep(ORDERS, chain_order(2), chain_order(1), 3)
    assert isinstance(verdict, Witnessed)
    assert membership(ORDERS, verdict.witness.amalgam)


def test_jep_rejects_non_member_input():
    k3 = graph(3, [(0, 1), (1, 2), (0, 2)])
    with pytest.raises(InvalidStructure):
        solve_jep(TRIANGLE_FREE, k3, graph(1, []), 4)


# -- amalgamation ----------------------------------------------------------------


def test_ap_orders_midpoint_instance():
    a = chain_order(1)
    below = FinStructure.make(ORDERS.sig, range(2), {"R": [(0, 1)]})  # b=0 < x=1
    above = FinStructure.make(ORDERS.sig, range(2), {"R": [(0, 1)]})  # y=0 < b=1
    e = Embedding.identity(a)
    h1 = Embedding(a, below, ((0, 0),))
    h2 = Embedding(a, above, ((0, 1),))
    verdict = solve_ap(ORDERS, e, h1, h2, 3)
    assert isinstance(verdict, Witnessed)
    w = verdict.witness
    assert membership(ORDERS, w.amalgam)
    assert w.amalgam.size == 3
    # g1(h1(e(b))) = g2(h2(e(b))), with x strictly above and y strictly below.
    shared = w.left(h1(0))
    assert shared == w.right(h2(0))
    assert (shared, w.left(1)) in w.amalgam.rel("R")
    assert (w.right(0), shared) in w.amalgam.rel("R")


def test_ap_graphs_free_amalgam_over_shared_edge():
    pivot = graph(2, [(0, 1)])
    b1 = graph(3, [(0, 1), (1, 2)])
    b2 = graph(3, [(0, 1), (0, 2)])
    e = Embedding.identity(pivot)
    verdict = solve_ap(
        GRAPHS, e, Embedding(pivot, b1, ((0, 0), (1, 1))), Embedding(pivot, b2, ((0, 0), (1, 1))), 6
    )
    assert isinstance(verdict, Witnessed)
    w = verdict.witness
    assert membership(GRAPHS, w.amalgam)
    for x in pivot.universe:
        assert w.left(x) == w.right(x)


def test_ap_forest_bridge_fails_with_injection_leg():
    # Pivot: two isolated vertices.  One side bridges them at distance two,
    # the other makes them adjacent; every common extension closes a
    # forbidden cycle, so the exhaustive search must come back empty.
    pivot = graph(2, [])
    bridge = graph(3, [(0, 2), (2, 1)])
    edge = graph(2, [(0, 1)])
    e = Embedding.identity(pivot)
    h1 = Embedding(pivot, bridge, ((0, 0), (1, 1)))
    h2 = Injection(pivot, edge, ((0, 0), (1, 1)))
    verdict = solve_ap(FORESTS, e, h1, h2, 4)
    assert isinstance(verdict, NoneUpTo)
    assert verdict.bound == 4


def test_ap_injection_leg_can_still_amalgamate():
    # With e covering only one pivot vertex, the legs need agree on that
    # vertex alone, so the edge added by the injection leg no longer
    # contradicts the reflecting pendant leg.
    a = graph(1, [])
    pivot = graph(2, [])
    pendant = graph(3, [(0, 2)])
    edge = graph(2, [(0, 1)])
    e = Embedding(a, pivot, ((0, 0),))
    h1 = Embedding(pivot, pendant, ((0, 0), (1, 1)))
    h2 = Injection(pivot, edge, ((0, 0), (1, 1)))
    verdict = solve_ap(GRAPHS, e, h1, h2, 6)
    assert isinstance(verdict, Witnessed)
    w = verdict.witness
    shared = w.left(h1(0))
    assert shared == w.right(h2(0))
    assert (w.right(0), w.right(1)) in w.amalgam.rel("E")
    assert (w.left(0), w.left(2)) in w.amalgam.rel("E")
    assert (w.left(0), w.left(1)) not in w.amalgam.rel("E")


def test_ap_agreement_is_only_required_on_the_pivot_image():
    # A weak instance: e maps a single vertex into an edge.  The two legs
    # send the edge different ways; the amalgam must agree on e's image
    # only, so a witness can exist even when the legs disagree elsewhere.
    a = graph(1, [])
    b = graph(2, [(0, 1)])
    b1 = graph(3, [(0, 1), (1, 2)])
    e = Embedding(a, b, ((0, 0),))
    h1 = Embedding(b, b1, ((0, 0), (1, 1)))
    h2 = Embedding(b, b1, ((0, 2), (1, 1)))
    verdict = solve_ap(GRAPHS, e, h1, h2, 6)
    assert isinstance(verdict, Witnessed)
    w = verdict.witness
    assert w.left(h1(e(0))) == w.right(h2(e(0)))


# -- weak amalgamation witnesses -------------------------------------------------


def test_wap_trivial_witnesses():
    cases = [
        (GRAPHS, graph(2, [(0, 1)]), (2, 4, 8)),
        (ORDERS, chain_order(2), (2, 4, 8)),
        (SPLIT, point(True), (3, 4, 8)),
    ]
    for spec, pivot, (wb, eb, ab) in cases:
        verdict = find_wap_witness(spec, pivot, wb, eb, ab)
        assert isinstance(verdict, Witnessed), spec.label
        w = verdict.witness
        assert w.pivot_extension == pivot
        assert w.embed.mapping == tuple((x, x) for x in pivot.universe)
        assert w.certified_extension_bound == eb
        assert w.is_plain_amalgamation


def test_wap_two_isolated_vertices_in_forests_needs_a_larger_witness():
    # Distance-2 and distance-3 bridges over the pivot cannot amalgamate
    # (any gluing closes a 3-, 4-, or 5-cycle), so no witness of size <= 2
    # certifies; the verdict must be an honest bounded failure.
    verdict = find_wap_witness(FORESTS, graph(2, []), 2, 4, 8)
    assert isinstance(verdict, NoneUpTo)
    assert verdict.bound == 2


def test_wap_rejects_non_member_pivot():
    k3 = graph(3, [(0, 1), (1, 2), (0, 2)])
    with pytest.raises(InvalidStructure):
        find_wap_witness(TRIANGLE_FREE, k3, 3, 3, 6)


# -- extension helpers ------------------------------------------------------------


def test_marked_extensions_of_an_edge():
    k2 = graph(2, [(0, 1)])
    exts = marked_extensions(GRAPHS, k2, 1)
    assert exts[0] == k2
    # base, isolated vertex, pendant at 0, pendant at 1, triangle: the two
    # pendants are distinct because the base stays pointwise fixed.
    assert len(exts) == 5
    for ext in exts:
        assert membership(GRAPHS, ext)
        assert ext.induced(k2.universe) == k2


def test_one_point_extensions_of_a_chain():
    exts = list(one_point_extensions(ORDERS, chain_order(2)))
    assert len(exts) == 3  # below, between, above
    for ext in exts:
        assert membership(ORDERS, ext)
        assert ext.size == 3


def test_embed_via_extension_inserts_a_midpoint():
    base = chain_order(2)
    pattern = chain_order(3)
    result = embed_via_extension(ORDERS, base, pattern, pins={0: 0, 2: 1})
    assert result is not None
    grown, emb = result
    assert membership(ORDERS, grown)
    assert grown.size == 3
    mid = emb(1)
    assert (0, mid) in grown.rel("R") and (mid, 1) in grown.rel("R")


def test_embed_via_extension_refuses_a_mixed_pair():
    base = FinStructure.make(P_SIG, [0], {"P": [(0,)]})
    pattern = FinStructure.make(P_SIG, [0, 1], {"P": [(0,)]})
    assert embed_via_extension(SPLIT, base, pattern, pins={0: 0}) is None


# -- global properties -------------------------------------------------------------


def test_hereditarity_spot_check():
    assert audit_hereditarity(GRAPHS, 4) == []
    assert audit_hereditarity(SPLIT, 4) == []


def test_solvers_are_deterministic():
    k2 = graph(2, [(0, 1)])
    first = solve_jep(GRAPHS, k2, graph(2, []), 4)
    second = solve_jep(GRAPHS, k2, graph(2, []), 4)
    assert isinstance(first, Witnessed) and first == second
    assert enumerate_types(FORESTS, 4) == enumerate_types(FORESTS, 4)
    w1 = find_wap_witness(ORDERS, chain_order(2), 2, 4, 8)
    w2 = find_wap_witness(ORDERS, chain_order(2), 2, 4, 8)
    assert w1 == w2


def test_types_embed_into_larger_hosts_sanity():
    # Every type of size <= 2 embeds into some type of size 3 in graphs.
    small = [t for t in enumerate_types(GRAPHS, 2) if t.size == 2]
    hosts = [t for t in enumerate_types(GRAPHS, 3) if t.size == 3]
    for t in small:
        assert any(find_embedding(t, h) for h in hosts)
