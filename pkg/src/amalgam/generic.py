"""Structures carrying a partial automorphism, and a generic one.

A *map system* is a finite member structure together with a partial
isomorphism of it into itself.  Joint embedding and weak amalgamation
lift from the plain class to these systems, and the chain builder from
:mod:`amalgam.limits` lifts to a schedule that simultaneously saturates
the carrier and totalises the partial map, so the top of a long build
approximates a structure with a distinguished "generic" automorphism.

The lifted solvers are bounded in the same honest sense as the base
ones: a negative verdict always names the bound it is exhaustive up to.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .classes import (
    ClassSpec,
    NoneUpTo,
    Verdict,
    Witnessed,
    _amalgam_stream,
    _marked_code,
    embed_via_extension,
    enumerate_types,
    find_wap_witness,
    membership,
    membership_added,
    one_point_extensions,
    one_point_extensions_by_class,
)
from .errors import InvalidMap, InvalidStructure, UnsupportedBase
from .limits import Budget, FailureTrace, LogNote
from .structures import (
    Embedding,
    EmbeddingSearch,
    FinStructure,
    PartialIso,
    Signature,
    canonical_form,
    find_embedding,
)

_ABSORB_NODE_CAP = 50_000
_WEAVE_NODE_CAP = 400_000
_AMALGAM_STREAM_CAP = 4096
_BATCH_CAP = 512


# ---------------------------------------------------------------------------
# Map systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MapSystem:
    """A member structure with a partial automorphism, given by its graph.

    ``pairs`` lists (element, image) pairs; the map must be injective and
    an isomorphism between the induced substructures on its domain and
    range.  Construction re-verifies all of this, so a ``MapSystem`` in
    hand is always well-formed (membership of the carrier in a class is a
    separate, class-relative question -- see :func:`validate_system`).
    """

    carrier: FinStructure
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        pairs = tuple(sorted({(int(a), int(b)) for a, b in self.pairs}))
        object.__setattr__(self, "pairs", pairs)
        elems = set(self.carrier.universe)
        for a, b in pairs:
            if a not in elems or b not in elems:
                raise InvalidStructure("map pairs must connect carrier elements")
        if len({a for a, _ in pairs}) != len(pairs):
            raise InvalidMap("the partial map must be a function")
        # Injectivity plus the isomorphism condition in one verified object.
        PartialIso(self.carrier, self.carrier, pairs)

    @property
    def domain(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.pairs)

    @property
    def range(self) -> tuple[int, ...]:
        return tuple(sorted(b for _, b in self.pairs))

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)

    @property
    def size(self) -> int:
        return self.carrier.size

    def image_of(self, x: int) -> int | None:
        return self.as_dict().get(x)

    def preimage_of(self, y: int) -> int | None:
        for a, b in self.pairs:
            if b == y:
                return a
        return None

    def induced(self, keep: Sequence[int]) -> "MapSystem":
        """The subsystem on ``keep``: induced carrier, pairs inside it."""
        keepset = set(keep)
        sub = self.carrier.induced(keepset)
        pairs = tuple(
            (a, b) for a, b in self.pairs if a in keepset and b in keepset
        )
        return MapSystem(sub, pairs)

    def to_json_obj(self) -> dict[str, object]:
        return {
            "carrier": self.carrier.to_json_obj(),
            "pairs": [list(p) for p in self.pairs],
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, object]) -> "MapSystem":
        carrier = FinStructure.from_json_obj(obj["carrier"])
        pairs = tuple((int(a), int(b)) for a, b in obj["pairs"])
        return cls(carrier, pairs)


def validate_system(spec: ClassSpec, system: MapSystem) -> None:
    """Raise unless the system's carrier belongs to the class."""
    if not membership(spec, system.carrier):
        raise InvalidStructure(
            f"system carrier is not a member of class {spec.label!r}"
        )


def _augment(system: MapSystem) -> FinStructure:
    """The carrier with the map's graph adjoined as one extra binary relation.

    Canonical codes of augmented structures classify systems up to
    isomorphisms that respect the map, which is exactly the equivalence
    used for type enumeration and extension cataloguing.
    """
    names = {name for name, _ in system.carrier.sig.relations}
    extra = "_map"
    while extra in names:
        extra = "_" + extra
    sig = Signature(system.carrier.sig.relations + ((extra, 2),))
    rels: dict[str, Sequence[tuple[int, ...]]] = {
        name: tuple(system.carrier.rel(name)) for name in names
    }
    rels[extra] = system.pairs
    return FinStructure.make(sig, system.carrier.universe, rels)


def system_canonical_code(system: MapSystem) -> bytes:
    """An isomorphism-invariant fingerprint of (carrier, map)."""
    code, _ = canonical_form(_augment(system))
    return code


# ---------------------------------------------------------------------------
# System embeddings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemEmbedding:
    """A carrier embedding that carries the source's map into the target's.

    Every pair (a, b) of the source map must land on a pair of the target
    map, which forces domain into domain, range into range, and the two
    maps to commute with the embedding.  The target map may be defined on
    elements outside the image -- systems embed like structures, not like
    graphs of equal size.
    """

    source: MapSystem
    target: MapSystem
    map: Embedding

    def __post_init__(self) -> None:
        if self.map.source != self.source.carrier:
            raise InvalidMap("embedding does not start at the source carrier")
        if self.map.target != self.target.carrier:
            raise InvalidMap("embedding does not end at the target carrier")
        fd = self.map.as_dict()
        tpairs = set(self.target.pairs)
        for a, b in self.source.pairs:
            if (fd[a], fd[b]) not in tpairs:
                raise InvalidMap(
                    f"map pair ({a}, {b}) is not carried onto a target pair"
                )

    def as_dict(self) -> dict[int, int]:
        return self.map.as_dict()

    def to_json_obj(self) -> dict[str, object]:
        return {
            "source": self.source.to_json_obj(),
            "target": self.target.to_json_obj(),
            "map": self.map.to_json_obj(),
        }


def system_identity(system: MapSystem) -> SystemEmbedding:
    return SystemEmbedding(system, system, Embedding.identity(system.carrier))


def find_system_embedding(
    source: MapSystem,
    target: MapSystem,
    *,
    pins: Mapping[int, int] | None = None,
    node_cap: int | None = None,
) -> SystemEmbedding | None:
    """First system embedding found, or None.

    Carrier embeddings are searched with the map used for pruning: source
    domain elements may only land on target domain elements (likewise for
    ranges), and when the source map is nonempty the search is anchored on
    one of its pairs, trying each target pair in order.  With a
    ``node_cap`` the answer None may only mean the budget ran out.
    """
    pins = dict(pins or {})
    tgt_pairs = set(target.pairs)

    restrict: dict[int, frozenset[int]] = {}
    src_dom = set(source.domain)
    src_ran = set(source.range)
    if src_dom or src_ran:
        tgt_dom = frozenset(target.domain)
        tgt_ran = frozenset(target.range)
        for x in source.carrier.universe:
            allowed: frozenset[int] | None = None
            if x in src_dom:
                allowed = tgt_dom
            if x in src_ran:
                allowed = tgt_ran if allowed is None else allowed & tgt_ran
            if allowed is not None and x not in pins:
                restrict[x] = allowed

    def run(extra_pins: Mapping[int, int]) -> SystemEmbedding | None:
        merged = dict(pins)
        merged.update(extra_pins)
        search = EmbeddingSearch(
            source.carrier,
            target.carrier,
            pins=merged,
            restrict=restrict,
            node_cap=node_cap,
        )
        for f in search.run():
            fd = f.as_dict()
            if all((fd[a], fd[b]) in tgt_pairs for a, b in source.pairs):
                return SystemEmbedding(source, target, f)
        return None

    if not source.pairs:
        return run({})
    a, b = source.pairs[0]
    for u, v in target.pairs:
        if a == b and u != v:
            continue
        if a in pins and pins[a] != u:
            continue
        if b in pins and pins[b] != v:
            continue
        found = run({a: u, b: v})
        if found is not None:
            return found
    return None


def is_system_embedding(
    f: Embedding, source: MapSystem, target: MapSystem
) -> bool:
    """Whether a carrier embedding respects the two partial maps."""
    try:
        SystemEmbedding(source, target, f)
    except InvalidMap:
        return False
    return True


# ---------------------------------------------------------------------------
# Enumeration of system types and of system extensions
# ---------------------------------------------------------------------------


def _partial_self_maps(
    carrier: FinStructure,
) -> Iterator[tuple[tuple[int, int], ...]]:
    """All injective partial maps of the universe, validity not yet checked."""
    universe = carrier.universe
    for k in range(len(universe) + 1):
        for dom in itertools.combinations(universe, k):
            for ran in itertools.permutations(universe, k):
                yield tuple(zip(dom, ran))


def enumerate_system_types(spec: ClassSpec, max_size: int) -> list[MapSystem]:
    """Member systems with carrier size <= max_size, up to isomorphism.

    Ordered by (carrier size, number of map pairs, canonical code), so the
    empty system comes first and the order is reproducible.
    """
    keyed: list[tuple[tuple[int, int, bytes], MapSystem]] = []
    seen: set[bytes] = set()
    for carrier in enumerate_types(spec, max_size):
        for pairs in _partial_self_maps(carrier):
            try:
                system = MapSystem(carrier, pairs)
            except (InvalidMap, InvalidStructure):
                continue
            code = system_canonical_code(system)
            if code in seen:
                continue
            seen.add(code)
            keyed.append(((carrier.size, len(system.pairs), code), system))
    keyed.sort(key=lambda item: item[0])
    return [system for _, system in keyed]


def count_system_types(spec: ClassSpec, max_size: int) -> dict[int, int]:
    """Number of system types per carrier size, 0..max_size."""
    out = {n: 0 for n in range(max_size + 1)}
    for system in enumerate_system_types(spec, max_size):
        out[system.size] += 1
    return out


def _one_step_system_extensions(
    spec: ClassSpec, system: MapSystem
) -> Iterator[MapSystem]:
    """Systems one growth move away: a carrier point, or a map pair."""
    for bigger in one_point_extensions(spec, system.carrier):
        yield MapSystem(bigger, system.pairs)
    dom = set(system.domain)
    ran = set(system.range)
    for x in system.carrier.universe:
        if x in dom:
            continue
        for y in system.carrier.universe:
            if y in ran:
                continue
            try:
                yield MapSystem(system.carrier, system.pairs + ((x, y),))
            except InvalidMap:
                continue


def system_extensions(
    spec: ClassSpec, base: MapSystem, growth_steps: int
) -> tuple[MapSystem, ...]:
    """Extensions of ``base`` reachable in at most ``growth_steps`` moves.

    A move adds one carrier element (a member one-point extension) or one
    new map pair; extensions are collected up to isomorphism fixing the
    base's carrier pointwise, with ``base`` itself first.  Counting map
    pairs as moves keeps the catalogue finite and small; it also means the
    certification that consumes this list is bounded by moves, not by
    carrier size alone.
    """
    anchors = tuple(base.carrier.universe)
    seen = {_marked_code(_augment(base), anchors)}
    collected = [base]
    frontier = [base]
    for _ in range(growth_steps):
        nxt = []
        for system in frontier:
            for cand in _one_step_system_extensions(spec, system):
                code = _marked_code(_augment(cand), anchors)
                if code in seen:
                    continue
                seen.add(code)
                collected.append(cand)
                nxt.append(cand)
        frontier = nxt
    return tuple(collected)


# ---------------------------------------------------------------------------
# Joint embedding and weak amalgamation for systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemJepWitness:
    """A system into which two given systems both embed."""

    system: MapSystem
    left: SystemEmbedding
    right: SystemEmbedding

    def to_json_obj(self) -> dict[str, object]:
        return {
            "system": self.system.to_json_obj(),
            "left": self.left.to_json_obj(),
            "right": self.right.to_json_obj(),
        }


@dataclass(frozen=True)
class SystemWapWitness:
    """A weak-amalgamation witness over a pivot system.

    All pairs of extensions of ``pivot_extension`` within the certified
    number of growth moves amalgamate over the pivot's image, carrier and
    map together.
    """

    pivot_extension: MapSystem
    embed: SystemEmbedding
    certified_extension_bound: int
    extension_pairs_checked: int = 0

    @property
    def is_plain_amalgamation(self) -> bool:
        return self.embed.source == self.pivot_extension and all(
            a == b for a, b in self.embed.map.mapping
        )

    def to_json_obj(self) -> dict[str, object]:
        return {
            "pivot_extension": self.pivot_extension.to_json_obj(),
            "embed": self.embed.to_json_obj(),
            "certified_extension_bound": self.certified_extension_bound,
            "extension_pairs_checked": self.extension_pairs_checked,
            "plain_amalgamation": self.is_plain_amalgamation,
        }


def _disjoint_shift(system: MapSystem, offset: int) -> MapSystem:
    relab = {x: x + offset for x in system.carrier.universe}
    return MapSystem(
        system.carrier.relabel(relab),
        tuple((a + offset, b + offset) for a, b in system.pairs),
    )


def _free_join(left: MapSystem, right: MapSystem) -> tuple[MapSystem, int]:
    """Disjoint union of carriers and maps; the union map is always valid.

    No relation crosses the two parts, so the isomorphism condition for a
    pair from one side against a pair from the other compares two absent
    tuples.  Membership of the joined carrier is the caller's question.
    """
    offset = (max(left.carrier.universe) + 1) if left.carrier.universe else 0
    shifted = _disjoint_shift(right, offset)
    sig = left.carrier.sig
    rels = {
        name: tuple(left.carrier.rel(name)) + tuple(shifted.carrier.rel(name))
        for name, _ in sig.relations
    }
    carrier = FinStructure.make(
        sig,
        left.carrier.universe + shifted.carrier.universe,
        rels,
    )
    return MapSystem(carrier, left.pairs + shifted.pairs), offset


def solve_jep_p(
    spec: ClassSpec, left: MapSystem, right: MapSystem, bound: int
) -> Verdict:
    """Joint embedding for systems: carrier and map embed together.

    Fast paths: one system embeds into the other, or the free join of the
    two is a member.  Otherwise system types up to carrier size ``bound``
    are searched exhaustively, so ``NoneUpTo(bound)`` rules out all
    amalgams of carrier size <= bound.
    """
    validate_system(spec, left)
    validate_system(spec, right)
    into_right = find_system_embedding(left, right)
    if into_right is not None:
        return Witnessed(
            SystemJepWitness(right, into_right, system_identity(right))
        )
    into_left = find_system_embedding(right, left)
    if into_left is not None:
        return Witnessed(
            SystemJepWitness(left, system_identity(left), into_left)
        )
    joined, offset = _free_join(left, right)
    if membership(spec, joined.carrier):
        e1 = SystemEmbedding(
            left,
            joined,
            Embedding(
                left.carrier,
                joined.carrier,
                tuple((x, x) for x in left.carrier.universe),
            ),
        )
        e2 = SystemEmbedding(
            right,
            joined,
            Embedding(
                right.carrier,
                joined.carrier,
                tuple((x, x + offset) for x in right.carrier.universe),
            ),
        )
        return Witnessed(SystemJepWitness(joined, e1, e2))
    floor = max(left.size, right.size)
    for system in enumerate_system_types(spec, bound):
        if system.size < floor:
            continue
        f = find_system_embedding(left, system)
        if f is None:
            continue
        g = find_system_embedding(right, system)
        if g is not None:
            return Witnessed(SystemJepWitness(system, f, g))
    return NoneUpTo(bound)


def _pair_amalgamates(
    spec: ClassSpec,
    d1: MapSystem,
    d2: MapSystem,
    shared: Sequence[tuple[int, int]],
    amalgam_bound: int,
) -> bool:
    """Can two system extensions be amalgamated over the shared elements?

    Carrier amalgams are streamed from the base engine and each is kept
    only if the two pushed-forward maps unite into a valid partial
    automorphism of it.  The stream is capped, so a negative answer means
    "not within the cap", which the callers' verdicts already express.
    """
    stream = _amalgam_stream(
        spec, d1.carrier, d2.carrier, shared, amalgam_bound
    )
    for cand, g1, g2 in itertools.islice(stream, _AMALGAM_STREAM_CAP):
        m1 = g1.as_dict()
        m2 = g2.as_dict()
        united = {(m1[a], m1[b]) for a, b in d1.pairs}
        united.update((m2[a], m2[b]) for a, b in d2.pairs)
        if len({a for a, _ in united}) != len(united):
            continue
        try:
            MapSystem(cand, tuple(united))
        except (InvalidMap, InvalidStructure):
            continue
        return True
    return False


def solve_wap_p(
    spec: ClassSpec,
    pivot: MapSystem,
    witness_bound: int,
    extension_bound: int,
    amalgam_bound: int,
) -> Verdict:
    """Weak amalgamation over a pivot system.

    Requires the plain class to amalgamate outright at the pivot's carrier
    (checked first; :class:`UnsupportedBase` names the carrier otherwise),
    which is the regime in which lifting to systems is meaningful.
    Candidate systems up to carrier size ``witness_bound`` are certified
    against all pairs of their extensions within
    ``extension_bound - size`` growth moves, amalgams searched up to
    carrier size ``amalgam_bound``.
    """
    validate_system(spec, pivot)
    base = find_wap_witness(
        spec, pivot.carrier, pivot.size, extension_bound, amalgam_bound
    )
    if not isinstance(base, Witnessed):
        raise UnsupportedBase(
            "the class does not amalgamate outright at this system's carrier "
            f"(carrier {pivot.carrier.to_json_obj()!r}, extension bound "
            f"{extension_bound}, amalgam bound {amalgam_bound}); weak "
            "amalgamation of map systems over it is not supported"
        )

    def candidates() -> Iterator[tuple[MapSystem, SystemEmbedding]]:
        yield pivot, system_identity(pivot)
        for system in enumerate_system_types(spec, witness_bound):
            if system.size < pivot.size:
                continue
            e = find_system_embedding(pivot, system)
            if e is None:
                continue
            if system == pivot and all(a == b for a, b in e.map.mapping):
                continue
            yield system, e

    for system, e in candidates():
        moves = max(0, extension_bound - system.size)
        exts = system_extensions(spec, system, moves)
        image = [e.as_dict()[x] for x in pivot.carrier.universe]
        shared = [(i, i) for i in image]
        checked = 0
        certified = True
        for d1, d2 in itertools.combinations_with_replacement(exts, 2):
            checked += 1
            if not _pair_amalgamates(spec, d1, d2, shared, amalgam_bound):
                certified = False
                break
        if certified:
            return Witnessed(
                SystemWapWitness(system, e, extension_bound, checked)
            )
    return NoneUpTo(witness_bound)


# ---------------------------------------------------------------------------
# Build log entries for the generic-automorphism chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemTypeStep:
    """An even step: one enumerated system type absorbed (or not)."""

    step: int
    type_index: int
    system: MapSystem
    grew: tuple[int, ...]
    status: str  # realized | grown | deferred

    def to_json_obj(self) -> dict[str, object]:
        return {
            "kind": "system-type",
            "step": self.step,
            "type_index": self.type_index,
            "system": self.system.to_json_obj(),
            "grew": list(self.grew),
            "status": self.status,
        }


@dataclass(frozen=True)
class MapTaskStep:
    """An odd-step move on the partial map itself.

    ``kind`` is "extend-domain" (give an element an image) or
    "extend-range" (give an element a preimage); ``partner`` is the chosen
    image / preimage when the task resolved.
    """

    step: int
    kind: str
    element: int
    partner: int | None
    grew: tuple[int, ...]
    status: str  # already | resolved | requeued | stalled

    def to_json_obj(self) -> dict[str, object]:
        return {
            "kind": self.kind,
            "step": self.step,
            "element": self.element,
            "partner": self.partner,
            "grew": list(self.grew),
            "status": self.status,
        }


@dataclass(frozen=True)
class CarrierTaskStep:
    """An odd-step saturation move on the carrier (map untouched)."""

    step: int
    pivot_elements: tuple[int, ...]
    extension: FinStructure
    target: int | None
    grew: tuple[int, ...]
    status: str  # already | resolved | requeued | stalled

    def to_json_obj(self) -> dict[str, object]:
        return {
            "kind": "carrier-task",
            "step": self.step,
            "pivot_elements": list(self.pivot_elements),
            "extension": self.extension.to_json_obj(),
            "target": self.target,
            "grew": list(self.grew),
            "status": self.status,
        }


AutLogEntry = SystemTypeStep | MapTaskStep | CarrierTaskStep | LogNote


def _aut_entry_from_json_obj(obj: Mapping[str, object]) -> AutLogEntry:
    """Rebuild one typed log entry from its JSON form.

    Every entry kind serializes self-contained systems and structures, so
    reconstruction needs no re-anchoring and saving a loaded chain
    reproduces the file.
    """
    kind = obj.get("kind")
    step = int(obj["step"])
    if kind == "system-type":
        return SystemTypeStep(
            step,
            int(obj["type_index"]),
            MapSystem.from_json_obj(obj["system"]),
            tuple(int(x) for x in obj["grew"]),
            str(obj["status"]),
        )
    if kind in ("extend-domain", "extend-range"):
        partner = obj.get("partner")
        return MapTaskStep(
            step,
            str(kind),
            int(obj["element"]),
            None if partner is None else int(partner),
            tuple(int(x) for x in obj["grew"]),
            str(obj["status"]),
        )
    if kind == "carrier-task":
        target = obj.get("target")
        return CarrierTaskStep(
            step,
            tuple(int(x) for x in obj["pivot_elements"]),
            FinStructure.from_json_obj(obj["extension"]),
            None if target is None else int(target),
            tuple(int(x) for x in obj["grew"]),
            str(obj["status"]),
        )
    if kind == "note":
        return LogNote(step, str(obj["note"]), dict(obj.get("detail", {})))
    raise InvalidStructure(f"unknown log entry kind {kind!r}")


# ---------------------------------------------------------------------------
# The automorphism chain
# ---------------------------------------------------------------------------


class AutChain:
    """An ascending chain of map systems with its build log.

    Stored as the top system plus stage marks: mark ``i`` is a pair
    (carrier size, number of map pairs), and stage ``i`` is the subsystem
    on ``{0..size-1}`` with the first ``count`` pairs in addition order.
    That reconstruction is sound because the builder only ever appends
    carrier elements and map pairs.
    """

    def __init__(
        self,
        spec: ClassSpec,
        top: MapSystem,
        stage_marks: Sequence[tuple[int, int]],
        pair_order: Sequence[tuple[int, int]] = (),
        log: Sequence[AutLogEntry] | None = None,
    ) -> None:
        if top.carrier.universe != tuple(range(top.size)):
            raise InvalidStructure("chain tops live on initial segments 0..n-1")
        pair_order = tuple((int(a), int(b)) for a, b in pair_order)
        if sorted(pair_order) != list(top.pairs):
            raise InvalidStructure("pair order must enumerate the top's map")
        marks = [(int(s), int(c)) for s, c in stage_marks]
        if marks != sorted(marks) or (
            marks and (marks[-1][0] > top.size or marks[-1][1] > len(pair_order))
        ):
            raise InvalidStructure("stage marks must ascend and end at the top")
        for size, count in marks:
            for a, b in pair_order[:count]:
                if a >= size or b >= size:
                    raise InvalidStructure(
                        "a stage's map pairs must lie inside its carrier"
                    )
        self.spec = spec
        self.top = top
        self.stage_marks = marks
        self.pair_order = pair_order
        self.log: list[AutLogEntry] = list(log or [])

    def __len__(self) -> int:
        return len(self.stage_marks)

    def stage(self, i: int) -> MapSystem:
        size, count = self.stage_marks[i]
        carrier = self.top.carrier.induced(range(size))
        return MapSystem(carrier, self.pair_order[:count])

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"kind": "header", "spec": self.spec.to_json_obj()},
                separators=(",", ":"),
            )
        ]
        for entry in self.log:
            lines.append(json.dumps(entry.to_json_obj(), separators=(",", ":")))
        lines.append(
            json.dumps(
                {
                    "kind": "final",
                    "top": self.top.to_json_obj(),
                    "stage_marks": [list(m) for m in self.stage_marks],
                    "pair_order": [list(p) for p in self.pair_order],
                },
                separators=(",", ":"),
            )
        )
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path: str | Path) -> "AutChain":
        """Reload a saved chain with its typed log, re-validating as it goes.

        Saving a loaded chain reproduces the file.
        """
        spec = None
        top = None
        marks: list[tuple[int, int]] = []
        order: list[tuple[int, int]] = []
        raw_log: list[dict[str, object]] = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("kind") == "header":
                spec = ClassSpec.from_json_obj(obj["spec"])
            elif obj.get("kind") == "final":
                top = MapSystem.from_json_obj(obj["top"])
                marks = [(int(s), int(c)) for s, c in obj["stage_marks"]]
                order = [(int(a), int(b)) for a, b in obj["pair_order"]]
            else:
                raw_log.append(obj)
        if spec is None or top is None:
            raise InvalidStructure("chain log is missing its header or final entry")
        return cls(
            spec, top, marks, order, [_aut_entry_from_json_obj(o) for o in raw_log]
        )


# ---------------------------------------------------------------------------
# The builder
# ---------------------------------------------------------------------------


def _system_type_cap(budget: Budget) -> int:
    # System types multiply quickly (every carrier type times every valid
    # partial self-map), so the enumerated stream is capped lower than the
    # plain builder's.
    return max(3, min(budget.jep_bound, 4))


def _pair_admissible(
    carrier: FinStructure, pairs: Sequence[tuple[int, int]], x: int, y: int
) -> bool:
    """Would adding the pair (x, y) keep the map a partial isomorphism?

    Only the new pair's conditions are checked (against itself and each
    existing pair); the existing map is assumed valid.  Functionality and
    injectivity are the caller's concern.
    """
    if any(arity > 2 for _, arity in carrier.sig.relations):
        try:
            PartialIso(carrier, carrier, tuple(pairs) + ((x, y),))
        except InvalidMap:
            return False
        return True
    for name, arity in carrier.sig.relations:
        rel = carrier.rel(name)
        if arity == 1:
            if ((x,) in rel) != ((y,) in rel):
                return False
            continue
        if ((x, x) in rel) != ((y, y) in rel):
            return False
        for d, r in pairs:
            if ((x, d) in rel) != ((y, r) in rel):
                return False
            if ((d, x) in rel) != ((r, y) in rel):
                return False
    return True


def _transport_pattern(
    system: MapSystem, x: int, *, forward: bool
) -> tuple[FinStructure, dict[int, int], int]:
    """The pattern forcing a fresh partner for ``x`` to mirror its relations.

    For a forward move (x gets an image) the pattern is the induced
    structure on {x} plus the map's range, together with one fresh vertex
    whose relations to the range transport x's relations to the domain.
    Any element realising the fresh vertex can extend the map by (x, it):
    the isomorphism conditions of the new pair against every existing pair
    are literally the pattern's tuples.  Backward moves (x gets a
    preimage) transport through the inverse.  Returns the pattern, the
    identity pins on the old part, and the fresh vertex's label.
    """
    carrier = system.carrier
    if forward:
        transport = dict(system.pairs)
        anchor_side = set(transport)  # tuples inside domain + x get mirrored
    else:
        transport = {b: a for a, b in system.pairs}
        anchor_side = set(transport)
    keep = sorted(set(transport.values()) | {x})
    fresh = max(carrier.universe) + 1
    transport[x] = fresh
    scope = anchor_side | {x}
    rels: dict[str, list[tuple[int, ...]]] = {}
    keepset = set(keep)
    for name, _ in carrier.sig.relations:
        tuples = [t for t in carrier.rel(name) if set(t) <= keepset]
        for t in carrier.rel(name):
            if x in t and set(t) <= scope:
                tuples.append(tuple(transport[c] for c in t))
        rels[name] = tuples
    pattern = FinStructure.make(carrier.sig, keep + [fresh], rels)
    return pattern, {k: k for k in keep}, fresh


def _uniform_profiles(sig: Signature) -> list[tuple[tuple[str, bool], ...]]:
    """Ways to relate every (new, old) element pair the same way.

    A profile is a set of directed binary slots: (name, True) adds the
    tuple (new, old), (name, False) adds (old, new).  Profiles are ordered
    by size then lexicographically, so the relation-free join comes first.
    Relations of arity >= 3 never cross (matching the completion search's
    behaviour for single-element growth).
    """
    slots: list[tuple[str, bool]] = []
    for name, arity in sig.relations:
        if arity == 2:
            slots.append((name, True))
            slots.append((name, False))
    profiles: list[tuple[tuple[str, bool], ...]] = []
    for k in range(len(slots) + 1):
        for combo in itertools.combinations(slots, k):
            profiles.append(combo)
    return profiles


class _AutTaskQueue:
    """Graded tasks: saturate the carrier, totalise the map, onto-ise it.

    Grade ``l`` carries the two map tasks for element ``l`` plus every
    carrier task whose pivot has maximum element ``l`` (pivot sizes come
    from the budget's extension bound, as in the plain builder).  Grades
    load lazily, one at a time, when the queue runs dry.
    """

    def __init__(self, spec: ClassSpec, budget: Budget) -> None:
        self.spec = spec
        self.max_pivot = max(1, budget.extension_bound - 1)
        self.loaded_upto = -2
        self.pending: deque[tuple[tuple, int]] = deque()
        self.seen: set[tuple] = set()

    def _pivots_at_grade(self, grade: int) -> Iterator[tuple[int, ...]]:
        if grade == -1:
            yield ()
            return
        rest = range(grade)
        for k in range(min(self.max_pivot, grade + 1)):
            for extra in itertools.combinations(rest, k):
                yield tuple(sorted(extra + (grade,)))

    def ensure_loaded(self, top: MapSystem) -> None:
        while not self.pending and self.loaded_upto < top.size - 1:
            grade = self.loaded_upto + 1 if self.loaded_upto >= -1 else -1
            if grade >= 0:
                for kind in ("extend-domain", "extend-range"):
                    key = (kind, grade)
                    if key not in self.seen:
                        self.seen.add(key)
                        self.pending.append(((kind, grade), 0))
            for pivot_elems in self._pivots_at_grade(grade):
                pivot = top.carrier.induced(pivot_elems)
                for ext in one_point_extensions_by_class(self.spec, pivot):
                    key = (
                        "carrier",
                        pivot_elems,
                        _marked_code(ext, pivot.universe),
                    )
                    if key not in self.seen:
                        self.seen.add(key)
                        self.pending.append((("carrier", pivot_elems, ext), 0))
            self.loaded_upto = grade

    def push_back(self, task: tuple, attempts: int) -> None:
        self.pending.append((task, attempts))

    def pop(self) -> tuple[tuple, int] | None:
        return self.pending.popleft() if self.pending else None


class _AutBuilder:
    """Alternates system-type absorption with map/carrier saturation.

    Every resolution is canonical (least admissible choice, candidate
    profiles in a fixed order), so the chain does not depend on the seed;
    the parameter is accepted for interface parity with the plain builder.
    """

    def __init__(self, spec: ClassSpec, budget: Budget, seed: int) -> None:
        self.spec = spec
        self.budget = budget
        self.seed = seed
        self.top = MapSystem(FinStructure.empty(spec.sig), ())
        self.types = enumerate_system_types(spec, _system_type_cap(budget))
        self.cursor = 0
        self.type_retries: deque[tuple[int, MapSystem, int]] = deque()
        self.queue = _AutTaskQueue(spec, budget)
        self.log: list[AutLogEntry] = []
        self.marks: list[tuple[int, int]] = []
        self.pair_order: list[tuple[int, int]] = []
        self.stream_noted = False

    # -- shared bookkeeping ---------------------------------------------------

    def _mark(self) -> None:
        self.marks.append((self.top.size, len(self.pair_order)))

    def _set_top(self, new_top: MapSystem) -> tuple[int, ...]:
        grew = tuple(range(self.top.size, new_top.size))
        added = set(new_top.pairs) - set(self.top.pairs)
        self.top = new_top
        self.pair_order.extend(sorted(added))
        self._mark()
        return grew

    # -- even steps: absorb system types ---------------------------------------

    def _next_type(self) -> tuple[int, MapSystem, int] | None:
        if self.type_retries:
            return self.type_retries.popleft()
        if self.cursor < len(self.types):
            item = (self.cursor, self.types[self.cursor], 0)
            self.cursor += 1
            return item
        return None

    def _grow_system_copy(self, pattern: MapSystem) -> MapSystem | None:
        """Adjoin a fresh copy of ``pattern``, all new-old pairs uniform.

        A uniform cross profile relates every new element to every old one
        identically, so the isomorphism conditions between transplanted
        map pairs and existing ones hold automatically; it remains to find
        a profile whose join is a member.
        """
        joined, offset = _free_join(self.top, pattern)
        fresh = [x + offset for x in pattern.carrier.universe]
        old = list(self.top.carrier.universe)
        base_rels = {
            name: set(joined.carrier.rel(name))
            for name, _ in self.spec.sig.relations
        }
        for profile in _uniform_profiles(self.spec.sig):
            rels = {name: set(tuples) for name, tuples in base_rels.items()}
            for name, outward in profile:
                for f in fresh:
                    for o in old:
                        rels[name].add((f, o) if outward else (o, f))
            carrier = FinStructure.make(
                self.spec.sig, joined.carrier.universe, rels
            )
            if not membership_added(self.spec, carrier, fresh):
                continue
            return MapSystem(carrier, joined.pairs)
        return None

    def even_step(self, step: int) -> None:
        item = self._next_type()
        if item is None:
            if not self.stream_noted:
                self.log.append(
                    LogNote(step, "type-stream-exhausted", {"types": len(self.types)})
                )
                self.stream_noted = True
            self.odd_step(step)
            return
        type_index, pattern, attempts = item
        found = find_system_embedding(pattern, self.top, node_cap=_ABSORB_NODE_CAP)
        if found is not None:
            self._mark()
            self.log.append(
                SystemTypeStep(step, type_index, pattern, (), "realized")
            )
            return
        grown = self._grow_system_copy(pattern)
        if grown is None:
            if attempts < 2:
                self.type_retries.append((type_index, pattern, attempts + 1))
                self.log.append(
                    SystemTypeStep(step, type_index, pattern, (), "deferred")
                )
            else:
                self.log.append(
                    LogNote(step, "type-stalled", {"type_index": type_index})
                )
            return
        grew = self._set_top(grown)
        self.log.append(SystemTypeStep(step, type_index, pattern, grew, "grown"))

    # -- odd steps: map and carrier tasks ---------------------------------------

    def _map_task(self, step: int, kind: str, x: int) -> tuple[bool, bool]:
        """Resolve one map task; returns (resolved, grew)."""
        forward = kind == "extend-domain"
        taken = (
            set(self.top.domain) if forward else set(self.top.range)
        )
        if x in taken:
            partner = (
                self.top.image_of(x) if forward else self.top.preimage_of(x)
            )
            self.log.append(MapTaskStep(step, kind, x, partner, (), "already"))
            return True, False
        # The least admissible image of x is usually x itself, and taking
        # it collapses the map to the identity -- the least generic
        # extension there is.  Task-driven pairs therefore avoid fixed
        # points; systems that need them still enter whole through the
        # even steps' type absorption.
        blocked = set(self.top.range) if forward else set(self.top.domain)
        for y in self.top.carrier.universe:
            if y in blocked or y == x:
                continue
            a, b = (x, y) if forward else (y, x)
            if not _pair_admissible(self.top.carrier, self.top.pairs, a, b):
                continue
            new_top = MapSystem(self.top.carrier, self.top.pairs + ((a, b),))
            self._set_top(new_top)
            self.log.append(MapTaskStep(step, kind, x, y, (), "resolved"))
            return True, False
        pattern, pins, fresh = _transport_pattern(self.top, x, forward=forward)
        grown = embed_via_extension(
            self.spec, self.top.carrier, pattern, pins=pins
        )
        if grown is None:
            return False, False
        new_carrier, emb = grown
        y = emb.as_dict()[fresh]
        a, b = (x, y) if forward else (y, x)
        new_top = MapSystem(new_carrier, self.top.pairs + ((a, b),))
        grew = self._set_top(new_top)
        self.log.append(MapTaskStep(step, kind, x, y, grew, "resolved"))
        return True, bool(grew)

    def _carrier_task(
        self, step: int, pivot_elems: tuple[int, ...], ext: FinStructure
    ) -> tuple[bool, bool]:
        pins = {p: p for p in pivot_elems}
        new_elem = next(e for e in ext.universe if e not in pivot_elems)
        found = find_embedding(ext, self.top.carrier, pins=pins)
        if found is not None:
            self.log.append(
                CarrierTaskStep(
                    step, pivot_elems, ext, found.as_dict()[new_elem], (), "already"
                )
            )
            return True, False
        grown = embed_via_extension(self.spec, self.top.carrier, ext, pins=pins)
        if grown is None:
            return False, False
        new_carrier, emb = grown
        new_top = MapSystem(new_carrier, self.top.pairs)
        grew = self._set_top(new_top)
        self.log.append(
            CarrierTaskStep(
                step, pivot_elems, ext, emb.as_dict()[new_elem], grew, "resolved"
            )
        )
        return True, bool(grew)

    def odd_step(self, step: int) -> None:
        processed = 0
        while processed < _BATCH_CAP:
            self.queue.ensure_loaded(self.top)
            item = self.queue.pop()
            if item is None:
                self._mark()
                self.log.append(LogNote(step, "queue-empty", {}))
                return
            task, attempts = item
            processed += 1
            if task[0] == "carrier":
                resolved, grew = self._carrier_task(step, task[1], task[2])
            else:
                resolved, grew = self._map_task(step, task[0], task[1])
            if resolved:
                if grew:
                    return  # growth consumes the step
                continue
            if attempts < 2:
                self.queue.push_back(task, attempts + 1)
            else:
                self.log.append(
                    LogNote(step, "task-stalled", {"task": str(task[:2])})
                )
        self._mark()
        self.log.append(LogNote(step, "batch-limit", {"processed": processed}))

    def run(self, steps: int) -> AutChain:
        self._mark()  # stage 0: the empty system, so even a 0-step run has a stage
        for step in range(steps):
            before = len(self.marks)
            if step % 2 == 0:
                self.even_step(step)
            else:
                self.odd_step(step)
            if len(self.marks) == before:
                self._mark()  # every step leaves at least one mark
        return AutChain(
            self.spec, self.top, self.marks, self.pair_order, self.log
        )


def build_generic_automorphism(
    spec: ClassSpec,
    steps: int,
    budget: Budget | None = None,
    seed: int = 0,
) -> AutChain:
    """Run the even/odd schedule on map systems for ``steps`` steps.

    Even steps absorb enumerated system types (joint embedding of
    systems); odd steps work through graded tasks that saturate the
    carrier and, for each element in label order, extend the partial map
    to be defined at it and to hit it.  On a long enough build the top's
    map is total and surjective on any fixed initial segment, so the chain
    approximates a structure with a distinguished automorphism.

    Deterministic given (spec, steps, budget); resolutions are canonical,
    so the seed does not affect the result and is accepted for interface
    parity with :func:`amalgam.limits.build_limit`.
    """
    if budget is None:
        budget = Budget()
    if len(enumerate_types(spec, 1)) <= 1:
        raise InvalidStructure("class has no members of size 1")
    return _AutBuilder(spec, budget, seed).run(steps)


# ---------------------------------------------------------------------------
# Conjugacy at finite depth: back-and-forth on systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemWeaveResult:
    """Outcome of a system back-and-forth run.

    On success ``iso`` is a partial isomorphism of the carriers that
    respects the two maps in both directions on its domain and range, i.e.
    a finite approximation to a conjugating isomorphism.  ``left_system``
    and ``right_system`` are the sides as the weave left them: growing a
    side may extend its carrier (tracked in ``grown_*``) and may also
    extend its map on existing elements, so the iso conjugates these, not
    necessarily the inputs.
    """

    iso: PartialIso | None
    trace: FailureTrace | None
    left_system: MapSystem
    right_system: MapSystem
    grown_left: tuple[int, ...] = ()
    grown_right: tuple[int, ...] = ()

    @property
    def success(self) -> bool:
        return self.iso is not None


def conjugacy_violations(
    left: MapSystem, right: MapSystem, mapping: Mapping[int, int]
) -> tuple[str, ...]:
    """Why ``mapping`` fails to conjugate the two maps (empty = it does).

    Checks that the mapping is a partial isomorphism of the carriers, that
    left map pairs inside its domain go to right map pairs, and that right
    map pairs inside its range pull back to left map pairs.
    """
    out: list[str] = []
    try:
        PartialIso(left.carrier, right.carrier, tuple(mapping.items()))
    except (InvalidMap, InvalidStructure) as err:
        return (f"not a partial isomorphism of the carriers: {err}",)
    m = dict(mapping)
    inv = {v: k for k, v in m.items()}
    rpairs = set(right.pairs)
    lpairs = set(left.pairs)
    for a, b in left.pairs:
        if a in m and b in m and (m[a], m[b]) not in rpairs:
            out.append(f"left pair ({a}, {b}) maps to a non-pair")
    for u, v in right.pairs:
        if u in inv and v in inv and (inv[u], inv[v]) not in lpairs:
            out.append(f"right pair ({u}, {v}) pulls back to a non-pair")
    return tuple(out)


class _SystemWeaver:
    def __init__(
        self, spec: ClassSpec, left: MapSystem, right: MapSystem, grow: bool
    ) -> None:
        self.spec = spec
        self.left = left
        self.right = right
        self.grow = grow
        self.pairs: dict[int, int] = {}
        self.grown_left: list[int] = []
        self.grown_right: list[int] = []

    def _sides(self, forward: bool) -> tuple[MapSystem, MapSystem, dict[int, int]]:
        if forward:
            return self.left, self.right, dict(self.pairs)
        return self.right, self.left, {v: k for k, v in self.pairs.items()}

    def _find(
        self, piece: MapSystem, tgt: MapSystem, pins: dict[int, int]
    ) -> dict[int, int] | None:
        """A carrier embedding of the piece matching map pairs both ways."""
        ppairs = set(piece.pairs)
        tpairs = set(tgt.pairs)
        search = EmbeddingSearch(
            piece.carrier, tgt.carrier, pins=pins, node_cap=_WEAVE_NODE_CAP
        )
        for f in search.run():
            fd = f.as_dict()
            if not all((fd[a], fd[b]) in tpairs for a, b in ppairs):
                continue
            image = {v: k for k, v in fd.items()}
            if all(
                (image[u], image[v]) in ppairs
                for u, v in tpairs
                if u in image and v in image
            ):
                return fd
        return None

    def absorb(self, element: int, forward: bool) -> FailureTrace | None:
        src, tgt, m = self._sides(forward)
        if element in m:
            return None
        if element not in set(src.carrier.universe):
            return FailureTrace(
                side="forward" if forward else "backward",
                element=element,
                reason="element is beyond this side's top",
                partial=tuple(sorted(self.pairs.items())),
            )
        keep = sorted(set(m) | {element})
        piece = src.induced(keep)
        found = self._find(piece, tgt, dict(m))
        if found is None and self.grow:
            grown = self._grow_target(piece, tgt, dict(m), forward)
            if grown is not None:
                tgt = grown
                found = self._find(piece, tgt, dict(m))
        if found is None:
            return FailureTrace(
                side="forward" if forward else "backward",
                element=element,
                reason="no matching extension of the partial conjugacy",
                partial=tuple(sorted(self.pairs.items())),
            )
        if forward:
            self.pairs[element] = found[element]
        else:
            self.pairs[found[element]] = element
        return None

    def _grow_target(
        self,
        piece: MapSystem,
        tgt: MapSystem,
        pins: dict[int, int],
        forward: bool,
    ) -> MapSystem | None:
        """Extend the target side's system so the piece embeds.

        The piece has exactly one element outside the pins (the one being
        absorbed).  Its realisation must mirror the piece's carrier
        relations -- and, when the piece pairs it with pinned elements,
        the isomorphism conditions of those new map pairs against every
        existing pair of the target's map.  All of that is encoded into
        one growth pattern, so the completion search only ever produces
        realisations whose transplanted pairs join the map validly.
        Corners remain: when a new pair is ruled out by the target's map
        alone (its pinned endpoint is already taken, or disagrees with a
        pair reaching outside the weave), no growth can help and the weave
        fails honestly.
        """
        free = [v for v in piece.carrier.universe if v not in pins]
        if len(free) != 1:
            return None
        u = free[0]
        tdom = {a for a, _ in tgt.pairs}
        tran = {b for _, b in tgt.pairs}
        # New map pairs the fresh element must enter, in target labels.
        wants_image: int | None = None
        wants_preimage: int | None = None
        for a, b in piece.pairs:
            if a == u and b != u:
                wants_image = pins[b]
            elif b == u and a != u:
                wants_preimage = pins[a]
            elif a == u and b == u:
                wants_image = wants_preimage = -1  # fresh fixed point
        if wants_image is not None and wants_image != -1 and wants_image in tran:
            return None  # endpoint already hit; the zero-growth search was complete
        if (
            wants_preimage is not None
            and wants_preimage != -1
            and wants_preimage in tdom
        ):
            return None
        has_new_pair = wants_image is not None or wants_preimage is not None
        if has_new_pair and any(
            arity > 2 for _, arity in self.spec.sig.relations
        ):
            return None  # mirror constraints are only encoded for arity <= 2

        fresh = max(tgt.carrier.universe) + 1 if tgt.carrier.universe else 0
        old: set[int] = set(pins.values())
        if wants_image is not None:
            old |= tdom
            if wants_image != -1:
                old.add(wants_image)
        if wants_preimage is not None:
            old |= tran
            if wants_preimage != -1:
                old.add(wants_preimage)
        old_sorted = sorted(old)
        rels: dict[str, set[tuple[int, ...]]] = {
            name: {
                t
                for t in tgt.carrier.rel(name)
                if set(t) <= old
            }
            for name, _ in self.spec.sig.relations
        }
        # Piece relations involving the absorbed element, in target labels.
        relab = dict(pins)
        relab[u] = fresh
        for name, _ in self.spec.sig.relations:
            for t in piece.carrier.rel(name):
                if u in t:
                    rels[name].add(tuple(relab[c] for c in t))
        tmap = dict(tgt.pairs)

        def mirror(anchor: int, through: Mapping[int, int]) -> None:
            """Tie the fresh element to ``through``'s keys as ``anchor`` is
            to its values (and match unary/loop relations)."""
            for name, arity in self.spec.sig.relations:
                rel = tgt.carrier.rel(name)
                if arity == 1:
                    if (anchor,) in rel:
                        rels[name].add((fresh,))
                    continue
                if (anchor, anchor) in rel:
                    rels[name].add((fresh, fresh))
                for p, q in through.items():
                    if (anchor, q) in rel:
                        rels[name].add((fresh, p))
                    if (q, anchor) in rel:
                        rels[name].add((p, fresh))

        if wants_image is not None and wants_image != -1:
            mirror(wants_image, tmap)
        if wants_preimage is not None and wants_preimage != -1:
            mirror(wants_preimage, {b: a for a, b in tgt.pairs})
        # A fresh fixed point (wants_image == -1) mirrors itself: the
        # conditions against existing pairs tie its relations to domain
        # and range elements together without fixing either side, which a
        # presence pattern cannot express.  The completion search runs
        # unconstrained and the final validation below rejects bad luck.
        pattern = FinStructure.make(
            self.spec.sig, old_sorted + [fresh], rels
        )
        grown = embed_via_extension(
            self.spec,
            tgt.carrier,
            pattern,
            pins={x: x for x in old_sorted},
        )
        if grown is None:
            return None
        new_carrier, emb = grown
        y = emb.as_dict()[fresh]
        united = set(tgt.pairs)
        if wants_image == -1:
            united.add((y, y))
        else:
            if wants_image is not None:
                united.add((y, wants_image))
            if wants_preimage is not None:
                united.add((wants_preimage, y))
        try:
            new_tgt = MapSystem(new_carrier, tuple(united))
        except (InvalidMap, InvalidStructure):
            return None
        added = [x for x in new_carrier.universe if x >= tgt.carrier.size]
        if forward:
            self.right = new_tgt
            self.grown_right.extend(added)
        else:
            self.left = new_tgt
            self.grown_left.extend(added)
        return new_tgt

    def result(self) -> SystemWeaveResult:
        iso = PartialIso(
            self.left.carrier, self.right.carrier, tuple(self.pairs.items())
        )
        return SystemWeaveResult(
            iso,
            None,
            self.left,
            self.right,
            tuple(self.grown_left),
            tuple(self.grown_right),
        )


def system_back_and_forth(
    chain_left: AutChain,
    chain_right: AutChain,
    depth: int,
    budget: Budget | None = None,
    *,
    grow: bool = True,
) -> SystemWeaveResult:
    """Weave a finite conjugacy between two generic-automorphism chains.

    Alternately absorbs carrier elements 0..depth of each side into a
    partial isomorphism that matches map pairs in both directions, so a
    successful result conjugates the two partial maps on its domain.
    With ``grow`` (the default) a side may be extended through the class's
    completion search when a transport is missing; the growth is rejected
    -- and the weave fails -- if the transplanted map pairs cannot join
    the target's map validly.
    """
    if chain_left.spec != chain_right.spec:
        raise InvalidStructure("chains weave only within one class")
    del budget  # node caps are module-level; the parameter is reserved
    weaver = _SystemWeaver(
        chain_left.spec, chain_left.top, chain_right.top, grow
    )
    for element in range(depth + 1):
        for forward in (True, False):
            trace = weaver.absorb(element, forward=forward)
            if trace is not None:
                return SystemWeaveResult(
                    None,
                    trace,
                    weaver.left,
                    weaver.right,
                    tuple(weaver.grown_left),
                    tuple(weaver.grown_right),
                )
    return weaver.result()
