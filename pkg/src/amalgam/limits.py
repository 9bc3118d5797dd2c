"""Ascending-chain construction of generic limits, and its verifiers.

The builder grows a single finite structure ("the top") through a
deterministic schedule:

* even steps joint-embed the next enumerated member type into the top and
  record a weak-amalgamation witness for the new stage;
* odd steps work through a graded queue of saturation tasks -- one-point
  member extensions of small induced pivots -- resolving each either by
  finding the extension already realised (zero growth) or by growing the
  top by one element.  Tasks that exceed the budget are re-queued and
  eventually marked stalled; nothing raises.

Universes are always initial segments ``0..n-1`` and every stage is the
induced substructure of every later stage, so the chain doubles as a
point approximation at any depth.

Verification routines (universality, weak saturation) read a chain without
mutating it.  ``back_and_forth`` weaves a partial isomorphism between two
chains; by default it may extend *private copies* of the tops through the
same extension machinery the builder uses -- a finite chain only
approximates its limit, and the weave is allowed to keep approximating.
Pass ``grow=False`` to probe the chains exactly as given.
"""

from __future__ import annotations

import json
import os
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .classes import (
    ClassSpec,
    WapWitness,
    _certify_wap,
    _marked_code,
    embed_via_extension,
    enumerate_types,
    marked_extensions,
    membership,
    one_point_extensions_by_class,
)
from .errors import InvalidStructure
from .structures import (
    Embedding,
    EmbeddingSearch,
    FinStructure,
    PartialIso,
    find_embedding,
)

# Node budgets for the internal searches; generous, and only reachable on
# pathological instances.  Budget exhaustion means "requeue", never "wrong".
_SEARCH_NODE_CAP = 400_000
_GROW_NODE_CAP = 400_000
_BATCH_CAP = 512
_TIE_BREAK_WIDTH = 4


# ---------------------------------------------------------------------------
# Budgets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Budget:
    """Search bounds threaded through a build.

    ``jep_bound`` caps amalgam/type sizes during joint embedding,
    ``amalgam_bound`` caps amalgam searches during certification, and
    ``extension_bound`` is the absolute size cap on extension structures in
    witness certification and saturation tasks.
    """

    jep_bound: int = 8
    amalgam_bound: int = 8
    extension_bound: int = 3

    def __post_init__(self) -> None:
        if min(self.jep_bound, self.amalgam_bound, self.extension_bound) < 0:
            raise InvalidStructure("budget bounds must be non-negative")

    @classmethod
    def from_string(cls, text: str) -> "Budget":
        """Parse ``"8,8,3"`` or ``"jep=8,amalgam=8,extension=3"``."""
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if all("=" in p for p in parts) and parts:
            kwargs = {}
            for p in parts:
                key, _, value = p.partition("=")
                kwargs[f"{key.strip()}_bound"] = int(value)
            return cls(**kwargs)
        if len(parts) != 3:
            raise ValueError(f"cannot parse budget {text!r}")
        return cls(int(parts[0]), int(parts[1]), int(parts[2]))

    @classmethod
    def from_env(cls, var: str = "AMALGAM_BUDGET") -> "Budget":
        text = os.environ.get(var)
        return cls.from_string(text) if text else cls()

    def to_json_obj(self) -> dict[str, int]:
        return {
            "jep_bound": self.jep_bound,
            "amalgam_bound": self.amalgam_bound,
            "extension_bound": self.extension_bound,
        }


# ---------------------------------------------------------------------------
# Schedule entries
# ---------------------------------------------------------------------------


def _embedding_ref(emb: Embedding, stage_size: int) -> dict[str, object]:
    return {"stage_size": stage_size, "map": [[a, b] for a, b in emb.mapping]}


@dataclass(frozen=True)
class JepStep:
    """Even step: the next enumerated type was realised in the top."""

    step: int
    type_index: int
    type_structure: FinStructure
    embedding: Embedding | None
    grew: tuple[int, ...]
    status: str  # realized | grown | deferred

    def to_json_obj(self) -> dict[str, object]:
        obj: dict[str, object] = {
            "kind": "jep",
            "step": self.step,
            "type_index": self.type_index,
            "type": self.type_structure.to_json_obj(),
            "status": self.status,
            "grew": list(self.grew),
        }
        if self.embedding is not None:
            obj["embedding"] = _embedding_ref(self.embedding, self.embedding.target.size)
        return obj


@dataclass(frozen=True)
class SaturationTask:
    """One saturation obligation: realise ``extension`` over a pivot.

    ``witness`` carries the pivot structure (as an uncertified
    weak-amalgamation witness with the identity embedding), ``into_chain``
    locates the pivot inside the stage it was drawn from, ``extension`` is
    a one-point member extension and ``into_ext`` includes the pivot in it.
    """

    witness: WapWitness
    into_chain: Embedding
    extension: FinStructure
    into_ext: Embedding

    @property
    def pivot(self) -> FinStructure:
        return self.witness.pivot_extension

    @property
    def pins(self) -> dict[int, int]:
        return self.into_chain.as_dict()

    @property
    def grade(self) -> int:
        return max((b for _, b in self.into_chain.mapping), default=-1)

    def key(self) -> tuple[object, ...]:
        return (
            tuple(sorted(self.pins.values())),
            _marked_code(self.extension, tuple(self.pivot.universe)),
        )

    def to_json_obj(self) -> dict[str, object]:
        return {
            "pivot": self.pivot.to_json_obj(),
            "into_chain": [[a, b] for a, b in self.into_chain.mapping],
            "extension": self.extension.to_json_obj(),
            "into_ext": [[a, b] for a, b in self.into_ext.mapping],
        }


@dataclass(frozen=True)
class SaturationStep:
    """Odd-step log entry for one task."""

    step: int
    task: SaturationTask
    status: str  # already | resolved | requeued | stalled
    resolution: Embedding | None
    grew: tuple[int, ...]

    def to_json_obj(self) -> dict[str, object]:
        obj: dict[str, object] = {
            "kind": "saturation",
            "step": self.step,
            "task": self.task.to_json_obj(),
            "status": self.status,
            "grew": list(self.grew),
        }
        if self.resolution is not None:
            obj["resolution"] = _embedding_ref(self.resolution, self.resolution.target.size)
        return obj


@dataclass(frozen=True)
class WapWitnessStep:
    """Even-step record: the new stage is witness-topped."""

    step: int
    witness: WapWitness

    def to_json_obj(self) -> dict[str, object]:
        return {"kind": "wap", "step": self.step, "witness": self.witness.to_json_obj()}


@dataclass(frozen=True)
class LogNote:
    step: int
    note: str
    detail: dict[str, object] = field(default_factory=dict)

    def to_json_obj(self) -> dict[str, object]:
        return {"kind": "note", "step": self.step, "note": self.note, "detail": self.detail}


ScheduleEntry = JepStep | SaturationStep | WapWitnessStep | LogNote


def _pairs(obj: object) -> tuple[tuple[int, int], ...]:
    return tuple((int(a), int(b)) for a, b in obj)  # type: ignore[union-attr]


def _entry_from_json_obj(obj: Mapping[str, object], top: FinStructure) -> ScheduleEntry:
    """Rebuild one typed log entry from its JSON form.

    Embeddings that recorded a stage size are re-anchored on that stage
    (recoverable as an induced prefix of the top) and re-checked, making
    save/load/save a fixpoint.  Saturation tasks come back with their
    original placeholder (uncertified) witnesses; their pivot inclusions,
    recorded as bare pairs, are re-anchored on the top, which is sound
    because every stage is an induced substructure of it.
    """
    kind = obj.get("kind")
    step = int(obj["step"])  # type: ignore[call-overload]

    def stage_embedding(source: FinStructure, ref: Mapping[str, object]) -> Embedding:
        stage = top.induced(range(int(ref["stage_size"])))  # type: ignore[call-overload]
        return Embedding(source, stage, _pairs(ref["map"]))

    if kind == "jep":
        type_structure = FinStructure.from_json_obj(obj["type"])  # type: ignore[arg-type]
        embedding = None
        if "embedding" in obj:
            embedding = stage_embedding(type_structure, obj["embedding"])  # type: ignore[arg-type]
        return JepStep(
            step=step,
            type_index=int(obj["type_index"]),  # type: ignore[call-overload]
            type_structure=type_structure,
            embedding=embedding,
            grew=tuple(int(x) for x in obj["grew"]),  # type: ignore[union-attr]
            status=str(obj["status"]),
        )
    if kind == "saturation":
        task_obj: Mapping[str, object] = obj["task"]  # type: ignore[assignment]
        pivot = FinStructure.from_json_obj(task_obj["pivot"])  # type: ignore[arg-type]
        extension = FinStructure.from_json_obj(task_obj["extension"])  # type: ignore[arg-type]
        task = SaturationTask(
            witness=WapWitness(pivot, Embedding.identity(pivot), 0),
            into_chain=Embedding(pivot, top, _pairs(task_obj["into_chain"])),
            extension=extension,
            into_ext=Embedding(pivot, extension, _pairs(task_obj["into_ext"])),
        )
        resolution = None
        if "resolution" in obj:
            resolution = stage_embedding(extension, obj["resolution"])  # type: ignore[arg-type]
        return SaturationStep(
            step=step,
            task=task,
            status=str(obj["status"]),
            resolution=resolution,
            grew=tuple(int(x) for x in obj["grew"]),  # type: ignore[union-attr]
        )
    if kind == "wap":
        wobj: Mapping[str, object] = obj["witness"]  # type: ignore[assignment]
        pivot_extension = FinStructure.from_json_obj(wobj["pivot_extension"])  # type: ignore[arg-type]
        pairs = _pairs(wobj["embed"]["map"])  # type: ignore[index,call-overload]
        source = pivot_extension.induced(b for _, b in pairs).relabel(
            {b: a for a, b in pairs}
        )
        witness = WapWitness(
            pivot_extension,
            Embedding(source, pivot_extension, pairs),
            int(wobj["certified_extension_bound"]),  # type: ignore[call-overload]
            int(wobj["extension_pairs_checked"]),  # type: ignore[call-overload]
        )
        return WapWitnessStep(step, witness)
    if kind == "note":
        return LogNote(step, str(obj["note"]), dict(obj.get("detail", {})))  # type: ignore[call-overload]
    raise InvalidStructure(f"unknown log entry kind {kind!r}")


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------


class Chain:
    """An ascending chain of member structures with its build log.

    Stored as the top structure plus stage sizes: stage ``i`` is literally
    the induced substructure of the top on ``{0..sizes[i]-1}``, which is
    sound because the builder only ever adds relations touching fresh
    elements.
    """

    def __init__(
        self,
        spec: ClassSpec,
        top: FinStructure,
        stage_sizes: Sequence[int],
        log: Sequence[ScheduleEntry] | None = None,
    ) -> None:
        if top.universe != tuple(range(top.size)):
            raise InvalidStructure("chain tops live on initial segments 0..n-1")
        if list(stage_sizes) != sorted(stage_sizes) or (
            stage_sizes and stage_sizes[-1] > top.size
        ):
            raise InvalidStructure("stage sizes must ascend and end at the top")
        self.spec = spec
        self.top = top
        self.stage_sizes = list(stage_sizes)
        self.log: list[ScheduleEntry] = list(log or [])

    @classmethod
    def from_stages(cls, spec: ClassSpec, stages: Sequence[FinStructure]) -> "Chain":
        """Build a chain from explicit stages, verifying coherence."""
        if not stages:
            raise InvalidStructure("a chain needs at least one stage")
        top = stages[-1]
        for earlier, later in zip(stages, stages[1:]):
            if later.induced(earlier.universe) != earlier:
                raise InvalidStructure("stages must be induced substructures")
        for stage in stages:
            if not membership(spec, stage):
                raise InvalidStructure("every stage must be a member")
        return cls(spec, top, [s.size for s in stages])

    @property
    def stage_count(self) -> int:
        return len(self.stage_sizes)

    def stage(self, i: int) -> FinStructure:
        return self.top.induced(range(self.stage_sizes[i]))

    def stages(self) -> Iterator[FinStructure]:
        for i in range(self.stage_count):
            yield self.stage(i)

    def saturation_entries(self) -> Iterator[SaturationStep]:
        for entry in self.log:
            if isinstance(entry, SaturationStep):
                yield entry

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
                    "stage_sizes": self.stage_sizes,
                },
                separators=(",", ":"),
            )
        )
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path: str | Path) -> "Chain":
        """Reload a saved chain, re-validating as it goes.

        Structures, stage sizes, and typed log entries are all
        reconstructed and re-checked, so the audits and verifiers work on
        loaded chains exactly as on freshly built ones, and saving a loaded
        chain reproduces the file.
        """
        spec = None
        top = None
        sizes: list[int] = []
        raw_log: list[dict[str, object]] = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("kind") == "header":
                spec = ClassSpec.from_json_obj(obj["spec"])
            elif obj.get("kind") == "final":
                top = FinStructure.from_json_obj(obj["top"])
                sizes = [int(x) for x in obj["stage_sizes"]]
            else:
                raw_log.append(obj)
        if spec is None or top is None:
            raise InvalidStructure("chain log is missing its header or final entry")
        return cls(spec, top, sizes, [_entry_from_json_obj(o, top) for o in raw_log])


# ---------------------------------------------------------------------------
# The builder
# ---------------------------------------------------------------------------


def _type_size_cap(budget: Budget) -> int:
    # Absorbing the full type census explodes combinatorially well before
    # the schedule runs out of steps; new types beyond this size are
    # deferred (logged), which no verification at desk scale can observe.
    return max(4, min(budget.jep_bound, 6))


class _TaskQueue:
    """Graded FIFO of saturation tasks.

    Grade g holds every one-point extension task whose pivot is a subset of
    ``{0..g}`` containing g (so each pivot loads exactly once), with pivot
    size < the budget's extension bound.  Pivots are induced substructures
    of the top, which later growth never changes, so loading is stable no
    matter when a grade materialises.
    """

    def __init__(self, spec: ClassSpec, extension_bound: int) -> None:
        self.spec = spec
        self.max_pivot = max(extension_bound - 1, 0)
        self.pending: deque[tuple[SaturationTask, int]] = deque()
        self.seen: set[tuple[object, ...]] = set()
        self.loaded_upto = -2  # grade -1 (empty pivot) not yet loaded

    def _pivots_at_grade(self, grade: int, top_size: int) -> Iterator[tuple[int, ...]]:
        if grade == -1:
            yield ()
            return
        import itertools as _it

        rest = range(grade)
        for k in range(min(self.max_pivot, grade + 1)):
            for extra in _it.combinations(rest, k):
                yield tuple(sorted(extra + (grade,)))

    def ensure_loaded(self, top: FinStructure) -> None:
        """Load the next grade, but only when the queue has run dry.

        Loading eagerly to the top's current size would materialise (and
        canonicalise) hundreds of thousands of tasks on a long build; the
        schedule can only ever visit a bounded prefix, so grades appear one
        at a time, in order, exactly when needed.
        """
        while not self.pending and self.loaded_upto < top.size - 1:
            grade = self.loaded_upto + 1 if self.loaded_upto >= -1 else -1
            for pivot_elems in self._pivots_at_grade(grade, top.size):
                pivot = top.induced(pivot_elems)
                witness = WapWitness(
                    pivot_extension=pivot,
                    embed=Embedding.identity(pivot),
                    certified_extension_bound=0,
                )
                # An induced substructure includes literally.
                into_chain = Embedding(
                    pivot, top, tuple((e, e) for e in pivot.universe), _trusted=True
                )
                for ext in one_point_extensions_by_class(self.spec, pivot):
                    task = SaturationTask(
                        witness=witness,
                        into_chain=into_chain,
                        extension=ext,
                        into_ext=Embedding.inclusion(pivot, ext),
                    )
                    key = task.key()
                    if key not in self.seen:
                        self.seen.add(key)
                        self.pending.append((task, 0))
            self.loaded_upto = grade

    def push_back(self, task: SaturationTask, attempts: int) -> None:
        self.pending.append((task, attempts))

    def pop(self) -> tuple[SaturationTask, int] | None:
        return self.pending.popleft() if self.pending else None

    def __len__(self) -> int:
        return len(self.pending)


class _Builder:
    def __init__(self, spec: ClassSpec, budget: Budget, seed: int) -> None:
        self.spec = spec
        self.budget = budget
        self.rng = random.Random(seed)
        self.top = FinStructure.empty(spec.sig)
        self.sizes = [0]
        self.log: list[ScheduleEntry] = []
        self.queue = _TaskQueue(spec, budget.extension_bound)
        self.types = enumerate_types(spec, _type_size_cap(budget))
        self.type_cursor = 0
        self.type_retries: deque[tuple[int, FinStructure, int]] = deque()
        self.stream_noted = False

    # -- helpers ---------------------------------------------------------------

    def _pick_embedding(
        self, pattern: FinStructure, pins: Mapping[int, int] | None = None
    ) -> Embedding | None:
        """First few embeddings of the pattern into the top; seeded choice.

        The seed only breaks ties between zero-growth witnesses, so it
        never changes what the chain's structures look like -- only which
        witness the log records.
        """
        search = EmbeddingSearch(
            pattern, self.top, pins=pins, node_cap=_SEARCH_NODE_CAP
        )
        found = []
        for emb in search.run():
            found.append(emb)
            if len(found) >= _TIE_BREAK_WIDTH:
                break
        if not found:
            return None
        return self.rng.choice(found)

    def _task_witness(self, task: SaturationTask) -> Embedding | None:
        """Zero-growth check for a one-point extension task.

        The extension has exactly one element beyond the (pointwise pinned)
        pivot, so instead of a general embedding search we scan the top
        once, testing each element's relation profile against the pivot
        through the index bitmasks.
        """
        ext = task.extension
        pins = task.pins
        if any(arity > 2 for _, arity in ext.sig.relations):
            return self._pick_embedding(ext, pins=pins)
        (new,) = [u for u in ext.universe if u not in pins]
        top = self.top
        idx = top.index()
        taken = set(pins.values())
        found: list[int] = []
        for y in top.universe:
            if y in taken:
                continue
            ok = True
            for ri, (name, arity) in enumerate(ext.sig.relations):
                etuples = ext.interp[ri]
                if arity == 1:
                    if ((new,) in etuples) != ((y,) in top.interp[ri]):
                        ok = False
                        break
                else:
                    if ((new, new) in etuples) != ((y, y) in top.interp[ri]):
                        ok = False
                        break
                    om, im = idx.out_mask[ri], idx.in_mask[ri]
                    pos = idx.pos
                    for p, q in pins.items():
                        if ((new, p) in etuples) != bool(om[y] >> pos[q] & 1):
                            ok = False
                            break
                        if ((p, new) in etuples) != bool(im[y] >> pos[q] & 1):
                            ok = False
                            break
                    if not ok:
                        break
            if ok:
                found.append(y)
                if len(found) >= _TIE_BREAK_WIDTH:
                    break
        if not found:
            return None
        y = self.rng.choice(found)
        # The scan checked the full iff-profile against the pinned pivot,
        # and the pivot part is the pinned induced substructure verbatim,
        # so the embedding is valid by construction.
        return Embedding(
            ext, top, tuple(sorted(pins.items())) + ((new, y),), _trusted=True
        )

    def _grow(
        self, pattern: FinStructure, pins: Mapping[int, int] | None = None
    ) -> tuple[FinStructure, Embedding] | None:
        result = embed_via_extension(
            self.spec, self.top, pattern, pins=pins, node_cap=_GROW_NODE_CAP
        )
        if result is None:
            return None
        new_top, emb = result
        if new_top.universe != tuple(range(new_top.size)):
            raise InvalidStructure("growth must append consecutive labels")
        return new_top, emb

    def _append_stage(self, new_top: FinStructure) -> tuple[int, ...]:
        grew = tuple(range(self.top.size, new_top.size))
        self.top = new_top
        self.sizes.append(new_top.size)
        return grew

    def _witness_step(self, step: int) -> None:
        """Record that the current stage is topped by a witness.

        Extension structures are capped at the budget's absolute extension
        bound, so once the top outgrows that bound the extension catalogue
        is empty and the certificate is vacuous -- which the recorded pair
        count makes visible.  While the top is still small the pairs are
        genuinely amalgamated.
        """
        ext_bound = self.budget.extension_bound
        if self.top.size >= ext_bound:
            witness = WapWitness(
                pivot_extension=self.top,
                embed=Embedding.identity(self.top),
                certified_extension_bound=ext_bound,
                extension_pairs_checked=1 if self.top.size == ext_bound else 0,
            )
        else:
            pairs = _certify_wap(
                self.spec,
                tuple(self.top.universe),
                self.top,
                ext_bound,
                self.budget.amalgam_bound,
            )
            witness = WapWitness(
                pivot_extension=self.top,
                embed=Embedding.identity(self.top),
                certified_extension_bound=ext_bound if pairs is not None else 0,
                extension_pairs_checked=pairs or 0,
            )
        self.log.append(WapWitnessStep(step, witness))

    # -- steps -----------------------------------------------------------------

    def _next_type(self) -> tuple[int, FinStructure, int] | None:
        if self.type_retries:
            return self.type_retries.popleft()
        if self.type_cursor < len(self.types):
            i = self.type_cursor
            self.type_cursor += 1
            return (i, self.types[i], 0)
        return None

    def even_step(self, step: int) -> None:
        item = self._next_type()
        if item is None:
            if not self.stream_noted:
                self.log.append(
                    LogNote(step, "type-stream-exhausted", {"types": len(self.types)})
                )
                self.stream_noted = True
            self.odd_step(step)  # reuse the step for saturation work
            return
        type_index, pattern, attempts = item
        emb = self._pick_embedding(pattern)
        if emb is not None:
            self.log.append(JepStep(step, type_index, pattern, emb, (), "realized"))
        else:
            grown = self._grow(pattern)
            if grown is None:
                if attempts < 2:
                    self.type_retries.append((type_index, pattern, attempts + 1))
                    self.log.append(
                        JepStep(step, type_index, pattern, None, (), "deferred")
                    )
                else:
                    self.log.append(
                        LogNote(step, "type-stalled", {"type_index": type_index})
                    )
                return
            new_top, emb = grown
            grew = self._append_stage(new_top)
            self.log.append(JepStep(step, type_index, pattern, emb, grew, "grown"))
        self._witness_step(step)

    def odd_step(self, step: int) -> None:
        processed = 0
        while processed < _BATCH_CAP:
            self.queue.ensure_loaded(self.top)
            item = self.queue.pop()
            if item is None:
                self.log.append(LogNote(step, "queue-empty", {}))
                return
            task, attempts = item
            processed += 1
            emb = self._task_witness(task)
            if emb is not None:
                self.log.append(SaturationStep(step, task, "already", emb, ()))
                continue
            grown = self._grow(task.extension, pins=task.pins)
            if grown is not None:
                new_top, emb = grown
                grew = self._append_stage(new_top)
                self.log.append(SaturationStep(step, task, "resolved", emb, grew))
                return  # growth consumes the step
            if attempts < 2:
                self.queue.push_back(task, attempts + 1)
                self.log.append(SaturationStep(step, task, "requeued", None, ()))
            else:
                self.log.append(SaturationStep(step, task, "stalled", None, ()))
        self.log.append(LogNote(step, "batch-limit", {"processed": processed}))

    def run(self, steps: int) -> Chain:
        for step in range(steps):
            if step % 2 == 0:
                self.even_step(step)
            else:
                self.odd_step(step)
        return Chain(self.spec, self.top, self.sizes, self.log)


def build_limit(
    spec: ClassSpec, steps: int, budget: Budget | None = None, seed: int = 0
) -> Chain:
    """Run the even/odd schedule for ``steps`` steps.

    Even steps realise the next enumerated member type (joint embedding
    with the current stage) and top the stage with a weak-amalgamation
    witness; odd steps resolve saturation tasks in graded order, growing by
    at most one element per step.  Deterministic given (spec, steps,
    budget, seed); the seed only picks between interchangeable zero-growth
    witnesses.
    """
    if budget is None:
        budget = Budget()
    if len(enumerate_types(spec, 1)) <= 1:
        raise InvalidStructure("class has no members of size 1")
    return _Builder(spec, budget, seed).run(steps)


# ---------------------------------------------------------------------------
# Verification: universality and weak saturation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniversalityReport:
    size_bound: int
    missing_types: tuple[FinStructure, ...]
    age_ok: bool

    @property
    def complete(self) -> bool:
        return not self.missing_types and self.age_ok

    def to_json_obj(self) -> dict[str, object]:
        return {
            "size_bound": self.size_bound,
            "missing_types": [t.to_json_obj() for t in self.missing_types],
            "age_ok": self.age_ok,
            "complete": self.complete,
        }


def verify_universality(chain: Chain, size_bound: int) -> UniversalityReport:
    """Check both directions of "the age of the top is the class".

    Every enumerated type up to the bound must embed into the top; the top
    itself must be a member (with a hereditary class that already covers
    all its induced substructures).
    """
    missing = tuple(
        t
        for t in enumerate_types(chain.spec, size_bound)
        if find_embedding(t, chain.top) is None
    )
    return UniversalityReport(size_bound, missing, membership(chain.spec, chain.top))


@dataclass(frozen=True)
class StarWitness:
    """Condition-(*) data: extensions of ``inner_extension`` embed over ``pivot``."""

    pivot: FinStructure
    inner_extension: FinStructure
    certified_bound: int

    def to_json_obj(self) -> dict[str, object]:
        return {
            "pivot": self.pivot.to_json_obj(),
            "inner_extension": self.inner_extension.to_json_obj(),
            "certified_bound": self.certified_bound,
        }


@dataclass(frozen=True)
class SaturationVerdict:
    witness: StarWitness | None
    candidate_cap: int

    @property
    def witnessed(self) -> bool:
        return self.witness is not None

    def to_json_obj(self) -> dict[str, object]:
        if self.witness is None:
            return {"verdict": "none_up_to", "candidate_cap": self.candidate_cap}
        return {"verdict": "witnessed", "witness": self.witness.to_json_obj()}


def verify_weak_saturation(
    chain: Chain,
    pivot_elements: Sequence[int],
    extension_bound: int,
    *,
    size_cap: int | None = None,
    max_candidates: int = 64,
) -> SaturationVerdict:
    """Search for a star witness above the pivot inside the chain's top.

    Candidates B range over induced substructures of the top containing
    the pivot (the pivot itself first, then growing subsets in
    lexicographic order, up to ``size_cap`` and ``max_candidates``).  B is
    certified when every member extension of B adding at most
    ``extension_bound`` fresh points embeds into the top fixing the pivot
    pointwise -- counting added points rather than total size keeps large
    candidates from certifying vacuously.  A negative answer is relative
    to the candidate caps.
    """
    import itertools as _it

    top = chain.top
    pivot_set = tuple(sorted(pivot_elements))
    if not set(pivot_set) <= set(top.universe):
        raise InvalidStructure("pivot must live inside the top")
    pivot = top.induced(pivot_set)
    if size_cap is None:
        size_cap = len(pivot_set) + 2
    pins = {a: a for a in pivot_set}

    def candidates() -> Iterator[tuple[int, ...]]:
        yield pivot_set
        others = [e for e in top.universe if e not in set(pivot_set)]
        for extra_size in range(1, max(0, size_cap - len(pivot_set)) + 1):
            for extra in _it.combinations(others, extra_size):
                yield tuple(sorted(pivot_set + extra))

    tried = 0
    for cand_elems in candidates():
        if tried >= max_candidates:
            break
        tried += 1
        cand = top.induced(cand_elems)
        ok = True
        for ext in marked_extensions(chain.spec, cand, extension_bound):
            if find_embedding(ext, top, pins=pins) is None:
                ok = False
                break
        if ok:
            return SaturationVerdict(
                StarWitness(pivot, cand, extension_bound), tried
            )
    return SaturationVerdict(None, tried)


# ---------------------------------------------------------------------------
# Back-and-forth weaving
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FailureTrace:
    side: str  # "forward" | "backward"
    element: int
    reason: str
    partial: tuple[tuple[int, int], ...]

    def to_json_obj(self) -> dict[str, object]:
        return {
            "result": "failure",
            "side": self.side,
            "element": self.element,
            "reason": self.reason,
            "partial": [[a, b] for a, b in self.partial],
        }


@dataclass
class WeaveResult:
    iso: PartialIso | None
    trace: FailureTrace | None
    grown_left: int = 0
    grown_right: int = 0

    @property
    def success(self) -> bool:
        return self.iso is not None

    def to_json_obj(self) -> dict[str, object]:
        if self.iso is not None:
            return {
                "result": "success",
                "map": [[a, b] for a, b in self.iso.mapping],
                "grown_left": self.grown_left,
                "grown_right": self.grown_right,
            }
        assert self.trace is not None
        return self.trace.to_json_obj()


class _Weaver:
    """Shared engine for back-and-forth style constructions.

    Maintains a partial isomorphism between two member structures and
    absorbs one element at a time from either side: the induced pattern on
    the current domain plus the new element is transported by a pinned
    embedding search, or -- when allowed -- realised by growing the target
    side through the class's own extension machinery.
    """

    def __init__(
        self, spec: ClassSpec, left: FinStructure, right: FinStructure, grow: bool
    ) -> None:
        self.spec = spec
        self.left = left
        self.right = right
        self.grow = grow
        self.pairs: dict[int, int] = {}
        self.grown = {"left": 0, "right": 0}

    def absorb(self, element: int, side: str) -> str | None:
        """Bring ``element`` (of the given side) into the weave.

        Returns None on success, otherwise a reason string.
        """
        forward = side == "forward"
        src = self.left if forward else self.right
        tgt = self.right if forward else self.left
        fmap = self.pairs if forward else {b: a for a, b in self.pairs.items()}
        if element in fmap:
            return None
        if element not in src.universe:
            return "element outside the source top"
        pattern = src.induced(sorted(set(fmap) | {element}))
        pins = {a: fmap[a] for a in pattern.universe if a in fmap}
        emb = find_embedding(pattern, tgt, pins=pins, node_cap=_SEARCH_NODE_CAP)
        if emb is None and self.grow:
            grown = embed_via_extension(
                self.spec, tgt, pattern, pins=pins, node_cap=_GROW_NODE_CAP
            )
            if grown is not None:
                tgt, emb = grown
                if forward:
                    self.right = tgt
                    self.grown["right"] += 1
                else:
                    self.left = tgt
                    self.grown["left"] += 1
        if emb is None:
            return "no transport embedding (and growth failed or disabled)"
        image = emb(element)
        if forward:
            self.pairs[element] = image
        else:
            self.pairs[image] = element
        return None

    def result(self) -> PartialIso:
        return PartialIso(self.left, self.right, tuple(self.pairs.items()))


def back_and_forth(
    chain_left: Chain,
    chain_right: Chain,
    depth: int,
    budget: Budget | None = None,
    *,
    grow: bool = True,
) -> WeaveResult:
    """Weave a partial isomorphism covering ``{0..depth}`` on both sides.

    Elements 0..depth of each top are absorbed alternately; transports pin
    the current map pointwise and search the other side.  With ``grow``
    (the default) a missing transport extends a private copy of the other
    side's top -- the finite-depth reading of "the limits are isomorphic".
    With ``grow=False`` the tops are probed exactly as given, so a chain
    that never realised some extension produces a failure trace.
    """
    if chain_left.spec != chain_right.spec:
        raise InvalidStructure("chains must share a class")
    del budget  # reserved: node caps are currently module-level
    weaver = _Weaver(chain_left.spec, chain_left.top, chain_right.top, grow)
    for i in range(depth + 1):
        for side in ("forward", "backward"):
            reason = weaver.absorb(i, side)
            if reason is not None:
                return WeaveResult(
                    None,
                    FailureTrace(side, i, reason, tuple(weaver.pairs.items())),
                )
    return WeaveResult(
        weaver.result(),
        None,
        grown_left=weaver.grown["left"],
        grown_right=weaver.grown["right"],
    )


def verify_weak_homogeneity(
    chain: Chain,
    witness: WapWitness,
    pair1: tuple[Sequence[int], Sequence[int]],
    pair2: tuple[Sequence[int], Sequence[int]],
    iso: PartialIso,
    depth: int,
    *,
    grow: bool = True,
) -> WeaveResult:
    """Extend a pivot isomorphism to a finite-depth partial automorphism.

    ``pair1`` and ``pair2`` are (pivot elements, witness elements) inside
    the top, each of the shape recorded by ``witness``; ``iso`` maps the
    first onto the second.  The result agrees with ``iso`` on the pivot
    elements only (the weak form) and covers elements ``0..depth-1`` of the
    top on both sides.
    """
    top = chain.top
    a1, b1 = (tuple(sorted(pair1[0])), tuple(sorted(pair1[1])))
    a2, b2 = (tuple(sorted(pair2[0])), tuple(sorted(pair2[1])))
    for a_loc, b_loc in ((a1, b1), (a2, b2)):
        if not set(a_loc) <= set(b_loc):
            raise InvalidStructure("pivot elements must lie inside the witness part")
        got = _marked_code(top.induced(b_loc), a_loc)
        want = _marked_code(
            witness.pivot_extension, tuple(witness.embed.image_tuple())
        )
        if got != want:
            raise InvalidStructure("pair does not match the witnessed shape")
    imap = iso.as_dict()
    if sorted(imap.get(a, -1) for a in a1) != sorted(a2):
        raise InvalidStructure("iso must map the first pivot onto the second")
    weaver = _Weaver(chain.spec, top, top, grow)
    weaver.pairs = {a: imap[a] for a in a1}
    for i in range(depth):
        for side in ("forward", "backward"):
            reason = weaver.absorb(i, side)
            if reason is not None:
                return WeaveResult(
                    None, FailureTrace(side, i, reason, tuple(weaver.pairs.items()))
                )
    return WeaveResult(
        weaver.result(), None, weaver.grown["left"], weaver.grown["right"]
    )


# ---------------------------------------------------------------------------
# Log audits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskAudit:
    """Summary of saturation-task outcomes over a label window."""

    element_cap: int
    total: int
    resolved: int
    already: int
    stalled: int
    unresolved_keys: tuple[str, ...]

    @property
    def all_resolved(self) -> bool:
        return self.stalled == 0 and not self.unresolved_keys

    def to_json_obj(self) -> dict[str, object]:
        return {
            "element_cap": self.element_cap,
            "total": self.total,
            "resolved": self.resolved,
            "already": self.already,
            "stalled": self.stalled,
            "unresolved": list(self.unresolved_keys),
            "all_resolved": self.all_resolved,
        }


def audit_tasks(
    chain: Chain, element_cap: int, extension_bound: int | None = None
) -> TaskAudit:
    """Audit saturation tasks whose pivots sit inside ``{0..element_cap-1}``.

    A task counts as settled when some log entry resolved it (with or
    without growth); it is unresolved when its last mention requeued or
    stalled it, or when it was enqueued by grade but never mentioned.
    ``extension_bound`` defaults to the default budget's.
    """
    if extension_bound is None:
        extension_bound = Budget().extension_bound
    window = set(range(element_cap))
    last_status: dict[tuple[object, ...], str] = {}
    for entry in chain.saturation_entries():
        pins = set(entry.task.pins.values())
        if not pins <= window:
            continue
        key = entry.task.key()
        prev = last_status.get(key)
        if prev in ("already", "resolved"):
            continue
        last_status[key] = entry.status
    # Tasks the queue should have loaded for this window:
    expected: set[tuple[object, ...]] = set()
    queue = _TaskQueue(chain.spec, extension_bound)
    for grade in range(-1, element_cap):
        for pivot_elems in queue._pivots_at_grade(grade, element_cap):
            pivot = chain.top.induced(pivot_elems)
            witness = WapWitness(pivot, Embedding.identity(pivot), 0)
            into_chain = Embedding.inclusion(pivot, chain.top)
            for ext in one_point_extensions_by_class(chain.spec, pivot):
                task = SaturationTask(
                    witness, into_chain, ext, Embedding.inclusion(pivot, ext)
                )
                expected.add(task.key())
    settled = {k for k, s in last_status.items() if s in ("already", "resolved")}
    stalled = sum(1 for s in last_status.values() if s == "stalled")
    unresolved = sorted(repr(k) for k in expected - settled)
    return TaskAudit(
        element_cap=element_cap,
        total=len(expected),
        resolved=sum(1 for s in last_status.values() if s == "resolved"),
        already=sum(1 for s in last_status.values() if s == "already"),
        stalled=stalled,
        unresolved_keys=tuple(unresolved),
    )
