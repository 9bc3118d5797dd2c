"""Tests for map systems: embeddings, bounded JEP/WAP, generic builds.

A map system is a member structure with a partial automorphism given by
its graph of pairs.  System embeddings must carry source pairs onto
target pairs, which is what every test here ultimately exercises: the
solvers produce embeddings we re-validate, the builder grows a chain of
systems each included in the next, and the weave produces a carrier
isomorphism conjugating the two maps.
"""

from __future__ import annotations

import itertools

import pytest

from amalgam.classes import NoneUpTo, Witnessed, bundled
from amalgam.errors import InvalidMap, InvalidStructure, UnsupportedBase
from amalgam.generic import (
    AutChain,
    MapSystem,
    SystemEmbedding,
    build_generic_automorphism,
    conjugacy_violations,
    count_system_types,
    enumerate_system_types,
    find_system_embedding,
    is_system_embedding,
    solve_jep_p,
    solve_wap_p,
    system_back_and_forth,
    validate_system,
)
from amalgam.limits import Chain, verify_universality
from amalgam.structures import BINARY, Embedding, FinStructure
from oracles import chain_order, graph

GRAPHS = bundled("graphs")
ORDERS = bundled("linear-orders")
FORESTS = bundled("linear-forests")
SPLIT = bundled("split")

EMPTY_SYSTEM = MapSystem(FinStructure.make(BINARY, [], {}), ())


@pytest.fixture(scope="module")
def graph_aut() -> AutChain:
    return build_generic_automorphism(GRAPHS, 120)


@pytest.fixture(scope="module")
def order_aut() -> AutChain:
    return build_generic_automorphism(ORDERS, 120)


# -- systems ---------------------------------------------------------------------


def test_system_pairs_must_be_a_function():
    with pytest.raises(InvalidMap):
        MapSystem(graph(2, []), ((0, 0), (0, 1)))


def test_system_pairs_must_live_in_the_carrier():
    with pytest.raises(InvalidStructure):
        MapSystem(graph(2, []), ((0, 5),))


def test_system_map_must_be_an_isomorphism():
    path = graph(3, [(0, 1)])
    with pytest.raises(InvalidMap):
        MapSystem(path, ((0, 0), (1, 2)))  # sends the edge {0,1} to a non-edge


def test_system_accessors_and_induced():
    system = MapSystem(graph(3, [(0, 1), (1, 2)]), ((0, 2), (2, 0)))
    assert system.domain == (0, 2)
    assert system.range == (0, 2)
    assert system.image_of(0) == 2 and system.preimage_of(0) == 2
    assert system.image_of(1) is None
    sub = system.induced([0, 1])
    assert sub.carrier == graph(3, [(0, 1), (1, 2)]).induced([0, 1])
    assert sub.pairs == ()  # both pairs reach element 2, which was dropped


def test_system_json_round_trip():
    system = MapSystem(chain_order(3), ((0, 1), (1, 2)))
    assert MapSystem.from_json_obj(system.to_json_obj()) == system


def test_validate_system_checks_membership():
    triangle = graph(3, [(0, 1), (1, 2), (0, 2)])
    with pytest.raises(InvalidStructure):
        validate_system(bundled("triangle-free"), MapSystem(triangle, ()))


def test_system_type_census_for_graphs():
    assert count_system_types(GRAPHS, 2) == {0: 1, 1: 2, 2: 10}


# -- system embeddings -----------------------------------------------------------


def test_shift_inclusion_is_a_system_embedding():
    source = MapSystem(chain_order(2), ((0, 1),))
    target = MapSystem(chain_order(3), ((0, 1), (1, 2)))
    inclusion = Embedding(chain_order(2), chain_order(3), ((0, 0), (1, 1)))
    assert is_system_embedding(inclusion, source, target)


def test_order_reversing_map_is_not_even_a_system():
    with pytest.raises(InvalidMap):
        MapSystem(chain_order(3), ((0, 2), (1, 1)))


def test_empty_map_embeds_vacuously():
    source = MapSystem(chain_order(2), ())
    target = MapSystem(chain_order(3), ((0, 1), (1, 2)))
    for pairs in itertools.combinations(range(3), 2):
        f = Embedding(chain_order(2), chain_order(3), tuple(zip((0, 1), pairs)))
        assert is_system_embedding(f, source, target)


def test_embedding_must_carry_pairs_onto_pairs():
    source = MapSystem(chain_order(2), ((0, 1),))
    target = MapSystem(chain_order(3), ((0, 1), (1, 2)))
    skip = Embedding(chain_order(2), chain_order(3), ((0, 0), (1, 2)))
    assert not is_system_embedding(skip, source, target)  # (0,2) is not a pair


def test_system_embeddings_compose():
    systems = enumerate_system_types(GRAPHS, 3)
    arrows: dict[tuple[int, int], SystemEmbedding] = {}
    for i, s in enumerate(systems):
        for j, t in enumerate(systems):
            e = find_system_embedding(s, t)
            if e is not None:
                arrows[i, j] = e
    assert arrows, "the enumeration must admit some embeddings"
    composed = 0
    for (i, j), first in arrows.items():
        for (k, l_), second in arrows.items():
            if k != j:
                continue
            glued = first.map.compose(second.map)
            SystemEmbedding(systems[i], systems[l_], glued)  # validates
            composed += 1
    assert composed > len(systems)


# -- joint embedding -------------------------------------------------------------


def test_jep_empty_maps_reduce_to_the_base_class():
    left = MapSystem(graph(1, []), ())
    right = MapSystem(graph(1, []), ())
    verdict = solve_jep_p(GRAPHS, left, right, 4)
    assert isinstance(verdict, Witnessed)
    witness = verdict.witness
    assert witness.system.pairs == ()
    assert witness.left.source == left and witness.right.source == right


def test_jep_two_fixed_vertices():
    fixed = MapSystem(graph(1, []), ((0, 0),))
    verdict = solve_jep_p(GRAPHS, fixed, fixed, 2)
    assert isinstance(verdict, Witnessed)
    witness = verdict.witness
    assert witness.system.size <= 2
    for leg in (witness.left, witness.right):
        image = leg.as_dict()[0]
        assert witness.system.image_of(image) == image  # stays a fixed point


def test_jep_split_classes_cannot_join():
    all_p = MapSystem(FinStructure.make(SPLIT.sig, [0], {"P": [(0,)]}), ())
    no_p = MapSystem(FinStructure.make(SPLIT.sig, [0], {"P": []}), ())
    assert solve_jep_p(SPLIT, all_p, no_p, 5) == NoneUpTo(5)


def test_jep_rejects_foreign_systems():
    triangle = MapSystem(graph(3, [(0, 1), (1, 2), (0, 2)]), ())
    with pytest.raises(InvalidStructure):
        solve_jep_p(bundled("triangle-free"), triangle, triangle, 4)


# -- weak amalgamation -----------------------------------------------------------


def test_wap_order_point_witnessed():
    verdict = solve_wap_p(ORDERS, MapSystem(chain_order(1), ()), 3, 3, 8)
    assert isinstance(verdict, Witnessed)
    assert verdict.witness.certified_extension_bound == 3


def test_wap_fixed_vertex_witnessed():
    pivot = MapSystem(graph(1, []), ((0, 0),))
    verdict = solve_wap_p(GRAPHS, pivot, 2, 3, 8)
    assert isinstance(verdict, Witnessed)
    assert verdict.witness.extension_pairs_checked > 0


def test_wap_empty_system_vacuous():
    verdict = solve_wap_p(GRAPHS, EMPTY_SYSTEM, 0, 0, 0)
    assert isinstance(verdict, Witnessed)
    assert verdict.witness.is_plain_amalgamation


def test_wap_requires_an_amalgamating_base():
    two_points = MapSystem(graph(2, []), ())
    with pytest.raises(UnsupportedBase):
        solve_wap_p(FORESTS, two_points, 2, 4, 8)


# -- building --------------------------------------------------------------------


def test_zero_steps_gives_the_empty_system():
    chain = build_generic_automorphism(GRAPHS, 0)
    assert chain.top == EMPTY_SYSTEM
    assert len(chain) == 1


def test_map_becomes_total_and_surjective_up_front(graph_aut: AutChain):
    dom = set(graph_aut.top.domain)
    ran = set(graph_aut.top.range)
    assert set(range(10)) <= dom
    assert set(range(10)) <= ran


def test_order_map_preserves_the_order(order_aut: AutChain):
    top = order_aut.top
    assert set(range(10)) <= set(top.domain) and set(range(10)) <= set(top.range)
    r = top.carrier.rel("R")
    g = top.as_dict()
    for a, b in itertools.permutations(g, 2):
        assert ((g[a], g[b]) in r) == ((a, b) in r)


def test_stage_maps_grow_monotonically(order_aut: AutChain):
    previous: MapSystem | None = None
    for i in range(len(order_aut)):
        stage = order_aut.stage(i)
        if previous is not None:
            assert set(previous.pairs) <= set(stage.pairs)
            assert previous.size <= stage.size
        previous = stage


def test_carriers_alone_form_a_universal_chain(graph_aut: AutChain):
    carriers: list[FinStructure] = []
    for i in range(len(graph_aut)):
        carrier = graph_aut.stage(i).carrier
        if not carriers or carrier.size > carriers[-1].size:
            carriers.append(carrier)
    chain = Chain.from_stages(GRAPHS, carriers)
    assert verify_universality(chain, 3).complete


def test_build_is_deterministic_and_seed_blind():
    one = build_generic_automorphism(ORDERS, 40, seed=0)
    two = build_generic_automorphism(ORDERS, 40, seed=1)
    assert one.to_jsonl() == two.to_jsonl()


def test_build_rejects_an_empty_class():
    bare = FinStructure.make(BINARY, [0], {})
    looped = FinStructure.make(BINARY, [0], {"E": [(0, 0)]})
    from amalgam.classes import ClassSpec

    with pytest.raises(InvalidStructure):
        build_generic_automorphism(ClassSpec(BINARY, (bare, looped)), 4)


def test_aut_chain_save_load_is_a_fixpoint(order_aut: AutChain, tmp_path):
    path = tmp_path / "aut.jsonl"
    order_aut.save(path)
    loaded = AutChain.load(path)
    assert loaded.to_jsonl() == order_aut.to_jsonl()
    assert loaded.top == order_aut.top
    assert [loaded.stage(i) for i in range(len(loaded))] == [
        order_aut.stage(i) for i in range(len(order_aut))
    ]
    assert loaded.log and type(loaded.log[0]) is type(order_aut.log[0])


# -- conjugacy at finite depth ---------------------------------------------------


def test_self_weave_is_identity(graph_aut: AutChain):
    result = system_back_and_forth(graph_aut, graph_aut, 3)
    assert result.success
    assert all(result.iso.as_dict()[i] == i for i in range(4))


def test_two_generic_builds_conjugate(order_aut: AutChain):
    other = build_generic_automorphism(ORDERS, 120, seed=1)
    result = system_back_and_forth(order_aut, other, 5)
    assert result.success
    mapping = result.iso.as_dict()
    assert set(range(6)) <= set(mapping) and set(range(6)) <= set(mapping.values())
    assert conjugacy_violations(result.left_system, result.right_system, mapping) == ()


def test_generic_is_not_conjugate_to_the_identity(graph_aut: AutChain):
    top = graph_aut.top
    identity_pairs = tuple((i, i) for i in range(top.size))
    identity_top = MapSystem(top.carrier, identity_pairs)
    identity_chain = AutChain(
        GRAPHS, identity_top, [(top.size, top.size)], identity_pairs
    )
    for grow in (False, True):
        result = system_back_and_forth(graph_aut, identity_chain, 2, grow=grow)
        assert not result.success
        assert result.trace.side == "forward"
        assert result.trace.element == 0


def test_weave_against_a_longer_run_of_itself(order_aut: AutChain):
    longer = build_generic_automorphism(ORDERS, 160)
    result = system_back_and_forth(order_aut, longer, 3)
    assert result.success


# -- conjugacy violations --------------------------------------------------------


def test_violations_empty_for_a_true_conjugation():
    fixed = MapSystem(graph(1, []), ((0, 0),))
    assert conjugacy_violations(fixed, fixed, {0: 0}) == ()


def test_violations_name_the_broken_pair():
    mover = MapSystem(graph(2, []), ((0, 1),))
    still = MapSystem(graph(2, []), ())
    out = conjugacy_violations(mover, still, {0: 0, 1: 1})
    assert out == ("left pair (0, 1) maps to a non-pair",)


def test_violations_catch_non_isomorphisms():
    edge = MapSystem(graph(2, [(0, 1)]), ())
    non_edge = MapSystem(graph(2, []), ())
    out = conjugacy_violations(edge, non_edge, {0: 0, 1: 1})
    assert len(out) == 1 and "not a partial isomorphism" in out[0]
