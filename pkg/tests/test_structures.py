"""Tests for structures: carriers, maps, embedding search, canonical forms.

Core claims:
    - validation rejects malformed structures and non-embeddings
    - induced substructures keep labels and restrict relations
    - JSON and DOT round-trips are faithful
    - enumerate_embeddings agrees with a brute-force oracle (all injective
      maps checked directly), in lexicographic order, each map once
    - canonical codes are equal exactly for isomorphic structures, and the
      returned relabelling actually achieves the code
    - the graph census on 1..4 vertices gives 1, 2, 4, 11 classes
      (frozen from the brute-force classification below)
"""

from __future__ import annotations

import itertools
import json
import random

import pytest

from amalgam.errors import InvalidMap, InvalidStructure, SignatureMismatch
from amalgam.structures import (
    BINARY,
    Embedding,
    EmbeddingSearch,
    FinStructure,
    PartialIso,
    Signature,
    are_isomorphic,
    canonical_code,
    canonical_form,
    disjoint_union,
    enumerate_embeddings,
    find_embedding,
    find_isomorphism,
)

MIXED = Signature((("P", 1), ("E", 2)))


# -- oracles -------------------------------------------------------------------
# Deliberately naive: independent of the package's search and refinement code.


def oracle_is_embedding(src: FinStructure, tgt: FinStructure, fmap: dict[int, int]) -> bool:
    if len(set(fmap.values())) != len(fmap):
        return False
    for (name, arity), tuples in zip(src.sig.relations, src.interp):
        tgt_tuples = tgt.rel(name)
        for t in itertools.product(src.universe, repeat=arity):
            if (t in tuples) != (tuple(fmap[x] for x in t) in tgt_tuples):
                return False
    return True


def oracle_embeddings(src: FinStructure, tgt: FinStructure) -> list[tuple[int, ...]]:
    """Image tuples of all embeddings, by checking every injective map."""
    out = []
    for images in itertools.permutations(tgt.universe, src.size):
        fmap = dict(zip(src.universe, images))
        if oracle_is_embedding(src, tgt, fmap):
            out.append(images)
    return sorted(out)


def oracle_isomorphic(a: FinStructure, b: FinStructure) -> bool:
    if a.size != b.size:
        return False
    return any(
        oracle_is_embedding(a, b, dict(zip(a.universe, images)))
        for images in itertools.permutations(b.universe)
    )


def rand_struct(rng: random.Random, sig: Signature, n: int, density: float = 0.3) -> FinStructure:
    rels: dict[str, list[tuple[int, ...]]] = {}
    for name, arity in sig.relations:
        rels[name] = [
            t
            for t in itertools.product(range(n), repeat=arity)
            if rng.random() < density
        ]
    return FinStructure.make(sig, range(n), rels)


def graph(n: int, edges: list[tuple[int, int]]) -> FinStructure:
    """Undirected simple graph as a symmetric binary relation."""
    sym = [(a, b) for a, b in edges] + [(b, a) for a, b in edges]
    return FinStructure.make(BINARY, range(n), {"E": sym})


# -- validation ------------------------------------------------------------------


def test_signature_rejects_duplicates_and_bad_arity():
    with pytest.raises(InvalidStructure):
        Signature((("E", 2), ("E", 1)))
    with pytest.raises(InvalidStructure):
        Signature((("E", 0),))


def test_structure_rejects_out_of_universe_tuples():
    with pytest.raises(InvalidStructure):
        FinStructure.make(BINARY, range(2), {"E": [(0, 5)]})
    with pytest.raises(InvalidStructure):
        FinStructure.make(BINARY, range(2), {"R": [(0, 1)]})
    with pytest.raises(InvalidStructure):
        FinStructure(BINARY, (0, 1), (frozenset({(0, 1, 1)}),))


def test_induced_substructure_keeps_labels():
    p3 = graph(3, [(0, 1), (1, 2)])
    sub = p3.induced({0, 2})
    assert sub.universe == (0, 2)
    assert sub.rel("E") == frozenset()
    assert p3.induced({1, 2}).rel("E") == {(1, 2), (2, 1)}
    with pytest.raises(InvalidStructure):
        p3.induced({0, 7})


def test_relabel_is_injective_and_total():
    edge = graph(2, [(0, 1)])
    moved = edge.relabel({0: 10, 1: 3})
    assert moved.universe == (3, 10)
    assert moved.rel("E") == {(10, 3), (3, 10)}
    with pytest.raises(InvalidMap):
        edge.relabel({0: 1, 1: 1})
    with pytest.raises(InvalidMap):
        edge.relabel({0: 1})


# -- serialisation ------------------------------------------------------------------


def test_json_round_trip():
    s = rand_struct(random.Random(7), MIXED, 5)
    again = FinStructure.from_json(s.to_json())
    assert again == s
    with pytest.raises(InvalidStructure):
        FinStructure.from_json(json.dumps({"universe": [0]}))


def test_dot_export_collapses_symmetric_pairs():
    p3 = graph(3, [(0, 1), (1, 2)])
    assert p3.to_dot() == (
        "digraph G {\n"
        "  0;\n"
        "  1;\n"
        "  2;\n"
        "  0 -> 1 [dir=none];\n"
        "  1 -> 2 [dir=none];\n"
        "}\n"
    )
    loopy = FinStructure.make(BINARY, range(2), {"E": [(0, 0), (0, 1)]})
    dot = loopy.to_dot()
    assert "0 -> 0;" in dot and "0 -> 1;" in dot
    with pytest.raises(InvalidStructure):
        rand_struct(random.Random(0), MIXED, 3).to_dot()


# -- verified maps ------------------------------------------------------------------


def test_embedding_must_reflect():
    two_points = FinStructure.make(BINARY, range(2))
    edge = graph(2, [(0, 1)])
    # Preserves everything vacuously, but the image carries an edge.
    with pytest.raises(InvalidMap):
        Embedding(two_points, edge, ((0, 0), (1, 1)))
    # The other direction fails preservation.
    with pytest.raises(InvalidMap):
        Embedding(edge, two_points, ((0, 0), (1, 1)))
    assert Embedding.inclusion(edge.induced({0}), edge)


def test_embedding_composition_and_restriction():
    p2 = graph(2, [(0, 1)])
    p3 = graph(3, [(0, 1), (1, 2)])
    inner = Embedding(p2, p3, ((0, 1), (1, 2)))
    outer = Embedding.identity(p3)
    comp = inner.compose(outer)
    assert comp.image_tuple() == (1, 2)
    part = inner.restrict([0])
    assert part.as_dict() == {0: 1}


def test_partial_iso_requires_induced_match():
    p3 = graph(3, [(0, 1), (1, 2)])
    ok = PartialIso(p3, p3, ((0, 2), (1, 1)))  # edge -> edge, reversed
    assert ok.inverse().as_dict() == {2: 0, 1: 1}
    with pytest.raises(InvalidMap):
        PartialIso(p3, p3, ((0, 0), (1, 2)))  # edge onto a non-edge
    assert len(ok.extend([(2, 0)])) == 3  # full path reversal, still an iso
    with pytest.raises(InvalidMap):
        PartialIso(p3, p3, ((0, 0),)).extend([(1, 2)])  # edge 0-1 onto gap 0-2


# -- embedding search ------------------------------------------------------------------


def test_enumerate_embeddings_matches_oracle_on_random_pairs():
    rng = random.Random(20260814)
    for sig in (BINARY, MIXED):
        for _ in range(40):
            src = rand_struct(rng, sig, rng.randint(1, 3), density=0.4)
            tgt = rand_struct(rng, sig, rng.randint(1, 5), density=0.4)
            got = [e.image_tuple() for e in enumerate_embeddings(src, tgt)]
            assert got == sorted(got), "lexicographic order violated"
            assert len(set(got)) == len(got), "duplicate embedding"
            assert got == oracle_embeddings(src, tgt)


def test_enumerate_embeddings_path_into_cycle():
    p3 = graph(3, [(0, 1), (1, 2)])
    c4 = graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    got = [e.image_tuple() for e in enumerate_embeddings(p3, c4)]
    # Each of the 4 paths of length 2 in C4, in both directions.
    assert len(got) == 8
    assert got[0] == (0, 1, 2)
    triangle = graph(3, [(0, 1), (1, 2), (0, 2)])
    assert list(enumerate_embeddings(triangle, c4)) == []


def test_search_pins_and_restrictions():
    edge = graph(2, [(0, 1)])
    c4 = graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    pinned = [e.image_tuple() for e in EmbeddingSearch(edge, c4, pins={0: 2}).run()]
    assert pinned == [(2, 1), (2, 3)]
    boxed = [
        e.image_tuple()
        for e in EmbeddingSearch(edge, c4, restrict={0: {0, 1}, 1: {0, 1}}).run()
    ]
    assert boxed == [(0, 1), (1, 0)]


def test_search_node_cap_reports_truncation():
    big = graph(7, [(i, j) for i in range(7) for j in range(i + 1, 7)])
    search = EmbeddingSearch(graph(3, [(0, 1), (1, 2), (0, 2)]), big, node_cap=5)
    list(search.run())
    assert search.capped
    uncapped = EmbeddingSearch(graph(2, [(0, 1)]), big)
    assert len(list(uncapped.run())) == 42
    assert not uncapped.capped


def test_find_embedding_returns_first_or_none():
    edge = graph(2, [(0, 1)])
    assert find_embedding(edge, graph(3, [(1, 2)])).image_tuple() == (1, 2)
    assert find_embedding(edge, FinStructure.make(BINARY, range(4))) is None


# -- canonical forms ------------------------------------------------------------------


def test_canonical_code_equal_iff_isomorphic_random():
    rng = random.Random(99)
    pool = [rand_struct(rng, BINARY, rng.randint(1, 4), 0.5) for _ in range(30)]
    pool += [rand_struct(rng, MIXED, rng.randint(1, 4), 0.5) for _ in range(10)]
    for a in pool:
        for b in pool:
            if a.sig != b.sig:
                continue
            assert are_isomorphic(a, b) == oracle_isomorphic(a, b)


def test_canonical_relabelling_achieves_code():
    rng = random.Random(5)
    for _ in range(25):
        s = rand_struct(rng, BINARY, rng.randint(1, 5), 0.4)
        code, relabel = canonical_form(s)
        moved = s.relabel(relabel)
        assert canonical_code(moved) == code
        assert moved.universe == tuple(range(s.size))
        # Invariance under an arbitrary shuffle of labels.
        perm = list(range(s.size))
        rng.shuffle(perm)
        shuffled = s.relabel(dict(zip(s.universe, perm)))
        assert canonical_code(shuffled) == code


def test_find_isomorphism_is_verified():
    a = graph(4, [(0, 1), (1, 2), (2, 3)])
    b = graph(4, [(3, 2), (2, 0), (0, 1)])
    iso = find_isomorphism(a, b)
    assert iso is not None
    # Re-run full verification through the public constructor.
    Embedding(a, b, iso.mapping)
    assert find_isomorphism(a, graph(4, [(0, 1), (1, 2), (2, 0)])) is None


def test_graph_census_counts_are_frozen():
    expected = {1: 1, 2: 2, 3: 4, 4: 11}
    for n, want in expected.items():
        all_edges = list(itertools.combinations(range(n), 2))
        codes = set()
        reps: list[FinStructure] = []
        for bits in range(1 << len(all_edges)):
            g = graph(n, [e for i, e in enumerate(all_edges) if bits >> i & 1])
            codes.add(canonical_code(g))
            if not any(oracle_isomorphic(g, r) for r in reps):
                reps.append(g)
        assert len(codes) == want
        assert len(reps) == want


def test_disjoint_union_shifts_right_operand():
    left = graph(2, [(0, 1)])
    right = graph(2, [(0, 1)])
    union, shift = disjoint_union(left, right)
    assert union.size == 4
    assert shift == {0: 2, 1: 3}
    assert union.rel("E") == {(0, 1), (1, 0), (2, 3), (3, 2)}
    with pytest.raises(SignatureMismatch):
        disjoint_union(left, FinStructure.make(MIXED, range(1)))
