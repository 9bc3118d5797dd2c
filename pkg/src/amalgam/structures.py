"""Finite relational structures and the maps between them.

Everything in this package works with finite structures over a purely
relational signature: a universe of natural-number labels together with one
finite relation per signature symbol.  Substructures are always *induced*:
an embedding must preserve **and** reflect every relation, so the image of
an embedding carries exactly the relations of its source.

The module provides:

* :class:`Signature`, :class:`FinStructure` -- immutable, hashable carriers
  with JSON round-tripping and DOT export for binary signatures;
* :class:`Embedding` and :class:`PartialIso` -- verified maps (construction
  fails loudly if the map is not what it claims to be);
* :func:`enumerate_embeddings` -- backtracking search listing every
  embedding exactly once in lexicographic image order, with optional pins,
  candidate restrictions and node budgets for callers that need them;
* :func:`canonical_form` / :func:`are_isomorphic` -- a canonical byte code
  obtained by colour refinement followed by a minimum-encoding search over
  the residual symmetry classes.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import InitVar, dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import InvalidMap, InvalidStructure, SignatureMismatch

Tuple_ = tuple[int, ...]


# ---------------------------------------------------------------------------
# Signatures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Signature:
    """An ordered list of relation symbols with arities.

    The order is significant: it fixes the layout of
    :attr:`FinStructure.interp` and the canonical encoding.
    """

    relations: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        names = [name for name, _ in self.relations]
        if len(set(names)) != len(names):
            raise InvalidStructure(f"duplicate relation names in signature: {names}")
        for name, arity in self.relations:
            if not name or not isinstance(name, str):
                raise InvalidStructure(f"bad relation name {name!r}")
            if arity < 1:
                raise InvalidStructure(f"relation {name!r} has arity {arity} < 1")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.relations)

    def arity(self, name: str) -> int:
        for rel_name, arity in self.relations:
            if rel_name == name:
                return arity
        raise KeyError(name)

    def index(self, name: str) -> int:
        for i, (rel_name, _) in enumerate(self.relations):
            if rel_name == name:
                return i
        raise KeyError(name)

    def to_json_obj(self) -> list[list[object]]:
        return [[name, arity] for name, arity in self.relations]

    @classmethod
    def from_json_obj(cls, obj: Sequence[Sequence[object]]) -> "Signature":
        rels = []
        for entry in obj:
            if len(entry) != 2:
                raise InvalidStructure(f"signature entry {entry!r} is not a [name, arity] pair")
            name, arity = entry
            rels.append((str(name), int(arity)))  # type: ignore[arg-type]
        return cls(tuple(rels))


#: Graphs, orders, digraphs: a single binary relation.
BINARY = Signature((("E", 2),))


# ---------------------------------------------------------------------------
# Structures
# ---------------------------------------------------------------------------


class _StructureIndex:
    """Lazy per-structure lookup tables used by the embedding search.

    For binary relations we keep out/in neighbour bitmasks over universe
    positions so adjacency tests against a partial assignment are integer
    bit operations.  Every arity gets a tuples-by-element table.
    """

    def __init__(self, struct: "FinStructure") -> None:
        universe = struct.universe
        self.pos: dict[int, int] = {e: i for i, e in enumerate(universe)}
        # by_elem[rel_index][element] -> tuple of tuples containing element
        self.by_elem: list[dict[int, tuple[Tuple_, ...]]] = []
        # out_mask/in_mask[rel_index][element] -> int bitmask (binary rels only)
        self.out_mask: list[dict[int, int]] = []
        self.in_mask: list[dict[int, int]] = []
        # counts[rel_index][element] -> tuple of per-position incidence counts
        self.counts: list[dict[int, tuple[int, ...]]] = []
        for ri, (name, arity) in enumerate(struct.sig.relations):
            tuples = struct.interp[ri]
            acc: dict[int, list[Tuple_]] = {e: [] for e in universe}
            cnt: dict[int, list[int]] = {e: [0] * arity for e in universe}
            for t in tuples:
                for p, x in enumerate(t):
                    cnt[x][p] += 1
                for x in set(t):
                    acc[x].append(t)
            self.by_elem.append({e: tuple(ts) for e, ts in acc.items()})
            self.counts.append({e: tuple(c) for e, c in cnt.items()})
            omask: dict[int, int] = {}
            imask: dict[int, int] = {}
            if arity == 2:
                omask = {e: 0 for e in universe}
                imask = {e: 0 for e in universe}
                for a, b in tuples:
                    omask[a] |= 1 << self.pos[b]
                    imask[b] |= 1 << self.pos[a]
            self.out_mask.append(omask)
            self.in_mask.append(imask)


@dataclass(frozen=True)
class FinStructure:
    """A finite relational structure with natural-number element labels.

    ``universe`` is strictly increasing; labels are arbitrary naturals and
    are *preserved* when taking induced substructures, which is what lets a
    chain stage sit inside a later stage literally.
    """

    sig: Signature
    universe: tuple[int, ...]
    interp: tuple[frozenset[Tuple_], ...]
    _index: _StructureIndex | None = field(
        default=None, compare=False, repr=False, hash=False
    )

    def __post_init__(self) -> None:
        if list(self.universe) != sorted(set(self.universe)):
            raise InvalidStructure(f"universe {self.universe} must be strictly increasing")
        if any(e < 0 for e in self.universe):
            raise InvalidStructure("universe labels must be non-negative")
        if len(self.interp) != len(self.sig.relations):
            raise InvalidStructure(
                f"{len(self.interp)} relation tables for "
                f"{len(self.sig.relations)} signature symbols"
            )
        elems = set(self.universe)
        for (name, arity), tuples in zip(self.sig.relations, self.interp):
            for t in tuples:
                if len(t) != arity:
                    raise InvalidStructure(f"tuple {t} in {name!r} has arity != {arity}")
                if not set(t) <= elems:
                    raise InvalidStructure(f"tuple {t} in {name!r} leaves the universe")

    # -- construction -------------------------------------------------------

    @classmethod
    def make(
        cls,
        sig: Signature,
        universe: Iterable[int],
        relations: Mapping[str, Iterable[Sequence[int]]] | None = None,
    ) -> "FinStructure":
        """Build a structure from a name-keyed relation mapping.

        Unknown relation names are rejected; missing ones are empty.
        """
        relations = dict(relations or {})
        unknown = set(relations) - set(sig.names)
        if unknown:
            raise InvalidStructure(f"relations {sorted(unknown)} not in signature")
        interp = []
        for name, _ in sig.relations:
            interp.append(frozenset(tuple(int(x) for x in t) for t in relations.get(name, ())))
        return cls(sig, tuple(sorted(set(universe))), tuple(interp))

    @classmethod
    def empty(cls, sig: Signature) -> "FinStructure":
        return cls.make(sig, ())

    # -- basic queries -------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.universe)

    def rel(self, name: str) -> frozenset[Tuple_]:
        return self.interp[self.sig.index(name)]

    def relations_dict(self) -> dict[str, frozenset[Tuple_]]:
        return {name: self.interp[i] for i, (name, _) in enumerate(self.sig.relations)}

    def index(self) -> _StructureIndex:
        idx = self._index
        if idx is None:
            idx = _StructureIndex(self)
            object.__setattr__(self, "_index", idx)
        return idx

    def total_tuples(self) -> int:
        return sum(len(t) for t in self.interp)

    # -- derived structures ---------------------------------------------------

    def induced(self, elements: Iterable[int]) -> "FinStructure":
        """The induced substructure on ``elements`` (labels preserved)."""
        keep = set(elements)
        if not keep <= set(self.universe):
            raise InvalidStructure(f"{sorted(keep - set(self.universe))} not in universe")
        if len(keep) * 4 < self.size:
            # Small slice of a big structure: gather through the per-element
            # index instead of scanning every tuple.
            by_elem = self.index().by_elem
            interp = tuple(
                frozenset(
                    t
                    for e in keep
                    for t in by_elem[ri].get(e, ())
                    if set(t) <= keep
                )
                for ri in range(len(self.interp))
            )
        else:
            interp = tuple(
                frozenset(t for t in tuples if set(t) <= keep)
                for tuples in self.interp
            )
        return FinStructure(self.sig, tuple(sorted(keep)), interp)

    def relabel(self, mapping: Mapping[int, int]) -> "FinStructure":
        """Rename elements through an injective map defined on the universe."""
        if set(mapping) != set(self.universe):
            raise InvalidMap("relabelling must be defined on exactly the universe")
        if len(set(mapping.values())) != len(mapping):
            raise InvalidMap("relabelling must be injective")
        interp = tuple(
            frozenset(tuple(mapping[x] for x in t) for t in tuples)
            for tuples in self.interp
        )
        return FinStructure(self.sig, tuple(sorted(mapping.values())), interp)

    # -- serialisation ---------------------------------------------------------

    def to_json_obj(self) -> dict[str, object]:
        return {
            "signature": self.sig.to_json_obj(),
            "universe": list(self.universe),
            "relations": {
                name: sorted(list(t) for t in self.interp[i])
                for i, (name, _) in enumerate(self.sig.relations)
            },
        }

    def to_json(self, **dumps_kwargs: object) -> str:
        return json.dumps(self.to_json_obj(), **dumps_kwargs)  # type: ignore[arg-type]

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, object]) -> "FinStructure":
        try:
            sig = Signature.from_json_obj(obj["signature"])  # type: ignore[index,arg-type]
            universe = [int(x) for x in obj["universe"]]  # type: ignore[index,union-attr]
            relations = obj.get("relations", {})  # type: ignore[union-attr]
        except (KeyError, TypeError) as exc:
            raise InvalidStructure(f"malformed structure object: {exc}") from exc
        return cls.make(sig, universe, relations)  # type: ignore[arg-type]

    @classmethod
    def from_json(cls, text: str) -> "FinStructure":
        return cls.from_json_obj(json.loads(text))

    def to_dot(self, name: str = "G") -> str:
        """Render as Graphviz DOT.  Only single-binary-relation signatures.

        Symmetric pairs collapse to one undirected-looking edge.
        """
        if len(self.sig.relations) != 1 or self.sig.relations[0][1] != 2:
            raise InvalidStructure("DOT export needs exactly one binary relation")
        tuples = self.interp[0]
        lines = [f"digraph {name} {{"]
        for e in self.universe:
            lines.append(f"  {e};")
        for a, b in sorted(tuples):
            if a == b:
                lines.append(f"  {a} -> {b};")
            elif (b, a) in tuples:
                if a < b:
                    lines.append(f"  {a} -> {b} [dir=none];")
            else:
                lines.append(f"  {a} -> {b};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def induced_substructure(struct: FinStructure, elements: Iterable[int]) -> FinStructure:
    """Module-level alias for :meth:`FinStructure.induced`."""
    return struct.induced(elements)


def disjoint_union(left: FinStructure, right: FinStructure) -> tuple[FinStructure, dict[int, int]]:
    """Union of ``left`` with a label-shifted copy of ``right``.

    Returns the union and the injection ``right -> union``; ``left`` keeps
    its labels.
    """
    if left.sig != right.sig:
        raise SignatureMismatch("disjoint union needs a common signature")
    offset = (max(left.universe) + 1) if left.universe else 0
    shift = {e: e + offset for e in right.universe}
    shifted = right.relabel(shift)
    interp = tuple(a | b for a, b in zip(left.interp, shifted.interp))
    return (
        FinStructure(left.sig, tuple(sorted(left.universe + shifted.universe)), interp),
        shift,
    )


# ---------------------------------------------------------------------------
# Verified maps
# ---------------------------------------------------------------------------


def _check_embedding(
    source: FinStructure, target: FinStructure, fmap: Mapping[int, int]
) -> None:
    if source.sig != target.sig:
        raise SignatureMismatch("embedding endpoints must share a signature")
    if set(fmap) != set(source.universe):
        raise InvalidMap("embedding must be total on the source universe")
    image = set(fmap.values())
    if len(image) != len(fmap):
        raise InvalidMap("embedding must be injective")
    if not image <= set(target.universe):
        raise InvalidMap("embedding image leaves the target universe")
    tgt_idx = target.index()
    for ri in range(len(source.sig.relations)):
        src_tuples = source.interp[ri]
        tgt_tuples = target.interp[ri]
        for t in src_tuples:
            if tuple(fmap[x] for x in t) not in tgt_tuples:
                raise InvalidMap(
                    f"{source.sig.relations[ri][0]}{t} is not preserved"
                )
        # Reflection: target tuples inside the image must come from source.
        inv = {v: k for k, v in fmap.items()}
        seen: set[Tuple_] = set()
        for b in image:
            for u in tgt_idx.by_elem[ri].get(b, ()):
                if u in seen or not set(u) <= image:
                    continue
                seen.add(u)
                if tuple(inv[y] for y in u) not in src_tuples:
                    raise InvalidMap(
                        f"{source.sig.relations[ri][0]}{u} in the image is not reflected"
                    )


@dataclass(frozen=True)
class Embedding:
    """A verified embedding between structures (preserves and reflects).

    ``mapping`` is stored as pairs sorted by source element.  Construction
    re-checks the definition unless ``_trusted`` is set by internal search
    code that has already verified it.
    """

    source: FinStructure
    target: FinStructure
    mapping: tuple[tuple[int, int], ...]
    _trusted: InitVar[bool] = False

    def __post_init__(self, _trusted: bool) -> None:
        object.__setattr__(self, "mapping", tuple(sorted(self.mapping)))
        if not _trusted:
            _check_embedding(self.source, self.target, dict(self.mapping))

    @classmethod
    def identity(cls, struct: FinStructure) -> "Embedding":
        return cls(struct, struct, tuple((e, e) for e in struct.universe), _trusted=True)

    @classmethod
    def inclusion(cls, sub: FinStructure, sup: FinStructure) -> "Embedding":
        """The identity-on-labels inclusion of an induced substructure."""
        return cls(sub, sup, tuple((e, e) for e in sub.universe))

    def as_dict(self) -> dict[int, int]:
        return dict(self.mapping)

    def __call__(self, x: int) -> int:
        for a, b in self.mapping:
            if a == x:
                return b
        raise KeyError(x)

    @property
    def image(self) -> frozenset[int]:
        return frozenset(b for _, b in self.mapping)

    def image_tuple(self) -> Tuple_:
        """Images listed in source-universe order (the lex sort key)."""
        return tuple(b for _, b in self.mapping)

    def compose(self, outer: "Embedding") -> "Embedding":
        """``outer`` after ``self`` (so ``self.target`` must be ``outer.source``)."""
        if self.target != outer.source:
            raise InvalidMap("composition endpoints do not match")
        om = outer.as_dict()
        return Embedding(
            self.source,
            outer.target,
            tuple((a, om[b]) for a, b in self.mapping),
            _trusted=True,
        )

    def restrict(self, elements: Iterable[int]) -> "PartialIso":
        keep = set(elements)
        return PartialIso(
            self.source,
            self.target,
            tuple((a, b) for a, b in self.mapping if a in keep),
        )

    def to_json_obj(self) -> dict[str, object]:
        return {"map": [[a, b] for a, b in self.mapping]}


@dataclass(frozen=True)
class Injection:
    """A total injective map between universes, with no relational claims.

    Amalgamation instances are sometimes posed with extension maps that are
    not embeddings (the solver only uses where the maps send elements, and
    such instances can still be meaningfully unamalgamable).  This type
    carries exactly that data, validated for totality and injectivity only.
    """

    source: FinStructure
    target: FinStructure
    mapping: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mapping", tuple(sorted(self.mapping)))
        fmap = dict(self.mapping)
        if set(fmap) != set(self.source.universe):
            raise InvalidMap("injection must be total on the source universe")
        values = [b for _, b in self.mapping]
        if len(set(values)) != len(values):
            raise InvalidMap("injection must be injective")
        if not set(values) <= set(self.target.universe):
            raise InvalidMap("injection image leaves the target universe")

    def as_dict(self) -> dict[int, int]:
        return dict(self.mapping)

    def __call__(self, x: int) -> int:
        return dict(self.mapping)[x]


def _check_partial_iso(
    source: FinStructure, target: FinStructure, fmap: Mapping[int, int]
) -> None:
    if source.sig != target.sig:
        raise SignatureMismatch("partial isomorphism endpoints must share a signature")
    dom = set(fmap)
    if not dom <= set(source.universe):
        raise InvalidMap("domain leaves the source universe")
    image = set(fmap.values())
    if len(image) != len(fmap):
        raise InvalidMap("partial isomorphism must be injective")
    if not image <= set(target.universe):
        raise InvalidMap("range leaves the target universe")
    src_idx = source.index()
    tgt_idx = target.index()
    inv = {v: k for k, v in fmap.items()}
    for ri in range(len(source.sig.relations)):
        seen: set[Tuple_] = set()
        for a in dom:
            for t in src_idx.by_elem[ri].get(a, ()):
                if t in seen or not set(t) <= dom:
                    continue
                seen.add(t)
                if tuple(fmap[x] for x in t) not in target.interp[ri]:
                    raise InvalidMap(f"{source.sig.relations[ri][0]}{t} not preserved")
        seen = set()
        for b in image:
            for u in tgt_idx.by_elem[ri].get(b, ()):
                if u in seen or not set(u) <= image:
                    continue
                seen.add(u)
                if tuple(inv[y] for y in u) not in source.interp[ri]:
                    raise InvalidMap(f"{source.sig.relations[ri][0]}{u} not reflected")


@dataclass(frozen=True)
class PartialIso:
    """A verified partial isomorphism between (possibly equal) structures.

    The map is an isomorphism between the induced substructures on its
    domain and range; that is exactly the "finite approximation to an
    isomorphism" used by back-and-forth arguments and by partial-map
    systems.
    """

    source: FinStructure
    target: FinStructure
    mapping: tuple[tuple[int, int], ...]
    _trusted: InitVar[bool] = False

    def __post_init__(self, _trusted: bool) -> None:
        object.__setattr__(self, "mapping", tuple(sorted(self.mapping)))
        if not _trusted:
            _check_partial_iso(self.source, self.target, dict(self.mapping))

    @classmethod
    def empty(cls, source: FinStructure, target: FinStructure) -> "PartialIso":
        return cls(source, target, ())

    def as_dict(self) -> dict[int, int]:
        return dict(self.mapping)

    @property
    def dom(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.mapping)

    @property
    def ran(self) -> frozenset[int]:
        return frozenset(b for _, b in self.mapping)

    def __call__(self, x: int) -> int:
        for a, b in self.mapping:
            if a == x:
                return b
        raise KeyError(x)

    def __len__(self) -> int:
        return len(self.mapping)

    def extend(self, pairs: Iterable[tuple[int, int]]) -> "PartialIso":
        """A re-verified extension by new (source, target) pairs."""
        merged = dict(self.mapping)
        for a, b in pairs:
            if a in merged and merged[a] != b:
                raise InvalidMap(f"conflicting images for {a}")
            merged[a] = b
        return PartialIso(self.source, self.target, tuple(merged.items()))

    def inverse(self) -> "PartialIso":
        return PartialIso(
            self.target,
            self.source,
            tuple((b, a) for a, b in self.mapping),
            _trusted=True,
        )

    def agrees_with(self, other: Mapping[int, int]) -> bool:
        mine = self.as_dict()
        return all(mine.get(a) == b for a, b in other.items())

    def to_json_obj(self) -> dict[str, object]:
        return {"map": [[a, b] for a, b in self.mapping]}


# ---------------------------------------------------------------------------
# Embedding search
# ---------------------------------------------------------------------------


class EmbeddingSearch:
    """Backtracking search over embeddings ``source -> target``.

    Visits source elements in universe order and target candidates in
    ascending order, so an unconstrained run yields image tuples in strict
    lexicographic order, each embedding exactly once.

    Optional controls:

    ``pins``
        forced images for some source elements;
    ``restrict``
        per-source-element candidate whitelists (used to transport a map:
        restricting a block of elements to a same-size set forces the image
        of the block to equal that set);
    ``node_cap``
        a budget on assignments tried.  When it trips, iteration stops and
        :attr:`capped` is set -- callers that need completeness must check.
    """

    def __init__(
        self,
        source: FinStructure,
        target: FinStructure,
        *,
        pins: Mapping[int, int] | None = None,
        restrict: Mapping[int, Iterable[int]] | None = None,
        node_cap: int | None = None,
    ) -> None:
        if source.sig != target.sig:
            raise SignatureMismatch("embedding search needs a common signature")
        self.source = source
        self.target = target
        self.pins = dict(pins or {})
        self.restrict = {a: frozenset(bs) for a, bs in (restrict or {}).items()}
        self.node_cap = node_cap
        self.nodes = 0
        self.capped = False
        self._sidx = source.index()
        self._tidx = target.index()
        self._arities = [ar for _, ar in source.sig.relations]
        self._static = self._static_compat()

    # -- static candidate filter ---------------------------------------------

    def _static_compat(self) -> dict[int, list[int]]:
        """Per source element: plausible targets by local invariants.

        Unary membership and binary self-loops must match exactly (they are
        reflected); per-position incidence counts can only grow.
        """
        out: dict[int, list[int]] = {}
        src, tgt = self._sidx, self._tidx
        for a in self.source.universe:
            allowed = self.restrict.get(a)
            if a in self.pins:
                allowed = frozenset({self.pins[a]})
            cands = []
            for b in self.target.universe:
                if allowed is not None and b not in allowed:
                    continue
                ok = True
                for ri, arity in enumerate(self._arities):
                    if arity == 1:
                        if ((a,) in self.source.interp[ri]) != ((b,) in self.target.interp[ri]):
                            ok = False
                            break
                        continue
                    if arity == 2:
                        loop_a = (a, a) in self.source.interp[ri]
                        loop_b = (b, b) in self.target.interp[ri]
                        if loop_a != loop_b:
                            ok = False
                            break
                    ca = src.counts[ri][a]
                    cb = tgt.counts[ri][b]
                    if any(x > y for x, y in zip(ca, cb)):
                        ok = False
                        break
                if ok:
                    cands.append(b)
            out[a] = cands
        return out

    # -- incremental consistency ----------------------------------------------

    def _consistent(self, a: int, b: int, assigned: dict[int, int]) -> bool:
        src, tgt = self._sidx, self._tidx
        for ri, arity in enumerate(self._arities):
            if arity == 2:
                a_out = src.out_mask[ri][a]
                a_in = src.in_mask[ri][a]
                b_out = tgt.out_mask[ri][b]
                b_in = tgt.in_mask[ri][b]
                for x, y in assigned.items():
                    px = src.pos[x]
                    py = tgt.pos[y]
                    if bool(a_out >> px & 1) != bool(b_out >> py & 1):
                        return False
                    if bool(a_in >> px & 1) != bool(b_in >> py & 1):
                        return False
            elif arity >= 3:
                known = set(assigned) | {a}
                img = dict(assigned, **{a: b})
                for t in src.by_elem[ri].get(a, ()):
                    if set(t) <= known:
                        if tuple(img[x] for x in t) not in self.target.interp[ri]:
                            return False
                image = set(assigned.values()) | {b}
                inv = {v: k for k, v in img.items()}
                for u in tgt.by_elem[ri].get(b, ()):
                    if set(u) <= image:
                        if tuple(inv[y] for y in u) not in self.source.interp[ri]:
                            return False
        return True

    # -- search -----------------------------------------------------------------

    def run(self) -> Iterator[Embedding]:
        order = list(self.source.universe)
        # Pinned elements first: they fail fastest and are free to branch on.
        # (Pins have a single candidate, so this cannot disturb the
        # lexicographic order of the remaining images.)
        order.sort(key=lambda a: (a not in self.pins, a))
        assigned: dict[int, int] = {}
        used: set[int] = set()

        def walk(depth: int) -> Iterator[Embedding]:
            if depth == len(order):
                yield Embedding(
                    self.source,
                    self.target,
                    tuple(assigned.items()),
                    _trusted=True,
                )
                return
            a = order[depth]
            for b in self._static[a]:
                if b in used:
                    continue
                if self.node_cap is not None and self.nodes >= self.node_cap:
                    self.capped = True
                    return
                self.nodes += 1
                if not self._consistent(a, b, assigned):
                    continue
                assigned[a] = b
                used.add(b)
                yield from walk(depth + 1)
                del assigned[a]
                used.discard(b)
                if self.capped:
                    return

        return walk(0)

    def first(self) -> Embedding | None:
        for emb in self.run():
            return emb
        return None


def enumerate_embeddings(
    source: FinStructure, target: FinStructure
) -> Iterator[Embedding]:
    """All embeddings of ``source`` into ``target``.

    Yields each embedding exactly once, ordered lexicographically by the
    tuple of images of the source universe (in universe order).
    """
    return EmbeddingSearch(source, target).run()


def find_embedding(
    source: FinStructure,
    target: FinStructure,
    *,
    pins: Mapping[int, int] | None = None,
    restrict: Mapping[int, Iterable[int]] | None = None,
    node_cap: int | None = None,
) -> Embedding | None:
    """First embedding under the search order, or None.

    With a ``node_cap`` the answer "None" may mean "budget ran out"; use
    :class:`EmbeddingSearch` directly when that distinction matters.
    """
    return EmbeddingSearch(
        source, target, pins=pins, restrict=restrict, node_cap=node_cap
    ).first()


# ---------------------------------------------------------------------------
# Canonical forms
# ---------------------------------------------------------------------------

_PERM_BUDGET = 500_000


def _colour_refine(struct: FinStructure) -> dict[int, int]:
    """Stable colouring of elements (isomorphism-invariant ranks)."""
    idx = struct.index()
    universe = struct.universe

    def rank(keys: dict[int, object]) -> dict[int, int]:
        order = {k: i for i, k in enumerate(sorted(set(keys.values()), key=repr))}
        return {e: order[keys[e]] for e in universe}

    init: dict[int, object] = {}
    for e in universe:
        parts: list[object] = []
        for ri, (_, arity) in enumerate(struct.sig.relations):
            parts.append(idx.counts[ri][e])
            if arity >= 2:
                parts.append((e,) * arity in struct.interp[ri])
        init[e] = tuple(parts)
    colours = rank(init)

    for _ in range(len(universe)):
        keys: dict[int, object] = {}
        for e in universe:
            contribs = []
            for ri in range(len(struct.sig.relations)):
                for t in idx.by_elem[ri].get(e, ()):
                    for p, x in enumerate(t):
                        if x == e:
                            contribs.append((ri, p, tuple(colours[y] for y in t)))
            contribs.sort()
            keys[e] = (colours[e], tuple(contribs))
        new = rank(keys)
        if len(set(new.values())) == len(set(colours.values())):
            return new
        colours = new
    return colours


def _encode(struct: FinStructure, order: Sequence[int]) -> bytes:
    pos = {e: i for i, e in enumerate(order)}
    payload = [
        len(order),
        struct.sig.to_json_obj(),
        [sorted([pos[x] for x in t] for t in tuples) for tuples in struct.interp],
    ]
    return json.dumps(payload, separators=(",", ":")).encode()


def _canonical_order(struct: FinStructure) -> tuple[int, ...]:
    colours = _colour_refine(struct)
    classes: dict[int, list[int]] = {}
    for e in struct.universe:
        classes.setdefault(colours[e], []).append(e)
    blocks = [sorted(classes[c]) for c in sorted(classes)]
    n_perms = 1
    for block in blocks:
        for k in range(2, len(block) + 1):
            n_perms *= k
        if n_perms > _PERM_BUDGET:
            raise InvalidStructure(
                "structure is too symmetric for the canonical-form search"
            )
    best_code: bytes | None = None
    best_order: tuple[int, ...] | None = None
    for perm_choice in itertools.product(*(itertools.permutations(b) for b in blocks)):
        order = tuple(itertools.chain.from_iterable(perm_choice))
        code = _encode(struct, order)
        if best_code is None or code < best_code:
            best_code, best_order = code, order
    assert best_order is not None
    return best_order


@lru_cache(maxsize=16384)
def _canonical_cached(struct: FinStructure) -> tuple[bytes, tuple[tuple[int, int], ...]]:
    order = _canonical_order(struct)
    code = _encode(struct, order)
    relabel = tuple(sorted((e, i) for i, e in enumerate(order)))
    return code, relabel


def canonical_form(struct: FinStructure) -> tuple[bytes, dict[int, int]]:
    """A canonical byte code plus a relabelling onto ``0..n-1`` achieving it.

    Two structures over the same signature get equal codes exactly when
    they are isomorphic.
    """
    code, relabel = _canonical_cached(struct)
    return code, dict(relabel)


def canonical_code(struct: FinStructure) -> bytes:
    return _canonical_cached(struct)[0]


def are_isomorphic(left: FinStructure, right: FinStructure) -> bool:
    if left.sig != right.sig:
        raise SignatureMismatch("isomorphism needs a common signature")
    if left.size != right.size or tuple(map(len, left.interp)) != tuple(
        map(len, right.interp)
    ):
        return False
    return canonical_code(left) == canonical_code(right)


def find_isomorphism(left: FinStructure, right: FinStructure) -> Embedding | None:
    """An explicit isomorphism assembled from the two canonical relabellings."""
    if not are_isomorphic(left, right):
        return None
    _, rl = canonical_form(left)
    _, rr = canonical_form(right)
    inv_r = {i: e for e, i in rr.items()}
    return Embedding(
        left, right, tuple((e, inv_r[i]) for e, i in rl.items()), _trusted=True
    )
