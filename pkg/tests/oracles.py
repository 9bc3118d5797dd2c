"""Deliberately naive reference implementations shared across test modules.

Everything here recomputes from first principles — permutation-based
isomorphism, product-based embedding checks, exhaustive generation over all
labeled structures — so package results can be compared against code that
shares none of the package's search, canonicalization, or membership
machinery.
"""

from __future__ import annotations

import itertools
import random

from amalgam.classes import ClassSpec
from amalgam.structures import BINARY, FinStructure, Signature


def naive_is_embedding(src: FinStructure, tgt: FinStructure, fmap: dict[int, int]) -> bool:
    """Injective, preserves and reflects every relation: checked tuple by tuple."""
    if len(set(fmap.values())) != len(fmap):
        return False
    for (name, arity), tuples in zip(src.sig.relations, src.interp):
        tgt_tuples = tgt.rel(name)
        for t in itertools.product(src.universe, repeat=arity):
            if (t in tuples) != (tuple(fmap[x] for x in t) in tgt_tuples):
                return False
    return True


def naive_embeds(pattern: FinStructure, host: FinStructure) -> bool:
    return any(
        naive_is_embedding(pattern, host, dict(zip(pattern.universe, images)))
        for images in itertools.permutations(host.universe, pattern.size)
    )


def naive_isomorphic(a: FinStructure, b: FinStructure) -> bool:
    if a.size != b.size:
        return False
    return any(
        naive_is_embedding(a, b, dict(zip(a.universe, images)))
        for images in itertools.permutations(b.universe)
    )


def naive_member(spec: ClassSpec, struct: FinStructure) -> bool:
    return not any(naive_embeds(f, struct) for f in spec.forbidden)


def naive_type_census(spec: ClassSpec, max_size: int) -> dict[int, int]:
    """Isomorphism classes of members per size, by sheer enumeration.

    Every subset of every possible tuple assignment is generated, filtered
    by the naive membership test, and deduplicated with the permutation
    isomorphism check.  Exponential in the tuple count, so sizes stay small.
    """
    counts: dict[int, int] = {}
    for n in range(max_size + 1):
        slots = [
            (name, t)
            for name, arity in spec.sig.relations
            for t in itertools.product(range(n), repeat=arity)
        ]
        if len(slots) > 16:
            raise ValueError(f"naive census would sweep 2^{len(slots)} structures")
        reps: list[FinStructure] = []
        for bits in range(1 << len(slots)):
            chosen: dict[str, list[tuple[int, ...]]] = {}
            for i, (name, t) in enumerate(slots):
                if bits >> i & 1:
                    chosen.setdefault(name, []).append(t)
            s = FinStructure.make(spec.sig, range(n), chosen)
            if not naive_member(spec, s):
                continue
            if not any(naive_isomorphic(s, r) for r in reps):
                reps.append(s)
        counts[n] = len(reps)
    return counts


def labeled_graph_classes(n: int) -> int:
    """Isomorphism classes of simple graphs on n vertices, package-free.

    Sweeps all 2^C(n,2) labeled edge sets and quotients by the permutation
    action directly on frozensets of unordered pairs.
    """
    edges = list(itertools.combinations(range(n), 2))
    seen: set[frozenset[tuple[int, int]]] = set()
    classes = 0
    for bits in range(1 << len(edges)):
        eset = frozenset(e for i, e in enumerate(edges) if bits >> i & 1)
        if eset in seen:
            continue
        classes += 1
        for perm in itertools.permutations(range(n)):
            seen.add(
                frozenset(
                    (min(perm[a], perm[b]), max(perm[a], perm[b])) for a, b in eset
                )
            )
    return classes


def graph(n: int, edges: list[tuple[int, int]]) -> FinStructure:
    """Undirected simple graph as a symmetric binary relation."""
    sym = [(a, b) for a, b in edges] + [(b, a) for a, b in edges]
    return FinStructure.make(BINARY, range(n), {"E": sym})


def chain_order(n: int) -> FinStructure:
    """The linear order 0 < 1 < ... < n-1 in the bundled orders signature."""
    sig = Signature((("R", 2),))
    return FinStructure.make(
        sig, range(n), {"R": [(i, j) for i in range(n) for j in range(n) if i < j]}
    )


def random_graph(rng: random.Random, n: int, p: float = 0.5) -> FinStructure:
    edges = [(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < p]
    return graph(n, edges)
