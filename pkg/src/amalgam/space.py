"""The space of labelled approximations and its dyadic metric.

A point of the space is an increasing chain of finite structures on
initial segments of the naturals; at any finite stage we only ever hold a
:class:`PointApprox` -- the structure induced on ``{0..depth}``.  Two
approximations are compared by the least depth at which their labelled
restrictions differ, giving the usual ``2^-k`` ultrametric, except that
agreement up to the shorter depth only bounds the distance from above.

``orbit_density_probe`` asks the finite-stage version of "does the orbit
of this pivot come back arbitrarily close": every small member extension
of the pivot must re-embed into the chain's top while fixing the chosen
core pointwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .classes import marked_extensions, membership
from .errors import InvalidStructure
from .limits import Chain
from .structures import FinStructure, find_embedding


@dataclass(frozen=True)
class PointApprox:
    """A depth-``depth`` approximation: a structure on ``{0..depth}``."""

    structure: FinStructure
    depth: int

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise InvalidStructure("depth must be non-negative")
        if self.structure.universe != tuple(range(self.depth + 1)):
            raise InvalidStructure(
                "a depth-d approximation lives exactly on {0..d}"
            )

    @classmethod
    def of_chain(cls, chain: Chain, depth: int) -> "PointApprox":
        """The chain's top cut down to ``{0..depth}``."""
        if chain.top.size <= depth:
            raise InvalidStructure(
                f"chain top has {chain.top.size} elements, need depth {depth}"
            )
        return cls(chain.top.induced(range(depth + 1)), depth)

    def restrict(self, depth: int) -> "PointApprox":
        if depth > self.depth:
            raise InvalidStructure("cannot deepen an approximation by restriction")
        return PointApprox(self.structure.induced(range(depth + 1)), depth)

    def to_json_obj(self) -> dict[str, object]:
        return {"structure": self.structure.to_json_obj(), "depth": self.depth}

    @classmethod
    def from_json_obj(cls, obj: dict[str, object]) -> "PointApprox":
        return cls(
            FinStructure.from_json_obj(obj["structure"]), int(obj["depth"])
        )


@dataclass(frozen=True)
class Exact:
    """The distance is known: restrictions first differ at a finite depth."""

    value: Fraction

    def to_json_obj(self) -> dict[str, object]:
        return {"kind": "exact", "value": str(self.value)}


@dataclass(frozen=True)
class AtMost:
    """Only an upper bound: the approximations agree as far as both reach."""

    value: Fraction

    def to_json_obj(self) -> dict[str, object]:
        return {"kind": "at_most", "value": str(self.value)}


Distance = Exact | AtMost


def distance_at_depth(left: PointApprox, right: PointApprox) -> Distance:
    """Dyadic distance between two approximations.

    ``Exact(2^-k)`` for the least ``k`` (up to the shorter depth) at which
    the labelled restrictions to ``{0..k}`` differ; if they agree
    everywhere both are defined, the true distance of the underlying
    points is only bounded: ``AtMost(2^-(min_depth+1))``.
    """
    if left.structure.sig != right.structure.sig:
        raise InvalidStructure("approximations must share a signature")
    horizon = min(left.depth, right.depth)
    for k in range(horizon + 1):
        if left.structure.induced(range(k + 1)) != right.structure.induced(
            range(k + 1)
        ):
            return Exact(Fraction(1, 2**k))
    return AtMost(Fraction(1, 2 ** (horizon + 1)))


class Containment(enum.Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


def in_basic_open(base: FinStructure, point: PointApprox) -> Containment:
    """Is ``point`` in the basic open set determined by ``base``?

    The set consists of all points whose restriction to ``base``'s universe
    equals ``base``.  The universe may be any finite set of naturals (not
    necessarily an initial segment); when it reaches past the
    approximation's depth the honest answer is "unknown".  Yes/no verdicts
    are stable under deepening the approximation.
    """
    if base.sig != point.structure.sig:
        raise InvalidStructure("approximations must share a signature")
    if not set(base.universe) <= set(point.structure.universe):
        return Containment.UNKNOWN
    matches = point.structure.induced(base.universe) == base
    return Containment.YES if matches else Containment.NO


@dataclass(frozen=True)
class ProbeReport:
    """Outcome of an orbit-density probe over a chain's top."""

    pivot: FinStructure
    fixed_core: tuple[int, ...]
    extension_bound: int
    checked: int
    failures: tuple[FinStructure, ...]

    @property
    def dense_up_to_bound(self) -> bool:
        return not self.failures

    def to_json_obj(self) -> dict[str, object]:
        return {
            "pivot": self.pivot.to_json_obj(),
            "fixed_core": list(self.fixed_core),
            "extension_bound": self.extension_bound,
            "checked": self.checked,
            "failures": [f.to_json_obj() for f in self.failures],
            "dense_up_to_bound": self.dense_up_to_bound,
        }


def orbit_density_probe(
    chain: Chain,
    core: Sequence[int],
    pivot: FinStructure,
    extension_bound: int,
) -> ProbeReport:
    """Check every small extension of the pivot re-embeds over the core.

    ``pivot`` must be the chain top's induced substructure on its own
    universe (i.e. realised verbatim), and ``core`` a subset of it, fixed
    pointwise by every re-embedding; the rest of each extension may land
    anywhere in the top.  Extensions range over members containing the
    pivot, up to ``extension_bound`` elements in total.
    """
    top = chain.top
    core_t = tuple(sorted(core))
    if not set(core_t) <= set(pivot.universe):
        raise InvalidStructure("the fixed core must be part of the pivot")
    if not set(pivot.universe) <= set(top.universe) or top.induced(
        pivot.universe
    ) != pivot:
        raise InvalidStructure("pivot is not realised in the chain's top")
    if not membership(chain.spec, pivot):
        raise InvalidStructure("pivot must be a member of the class")
    pins = {a: a for a in core_t}
    checked = 0
    failures: list[FinStructure] = []
    for ext in marked_extensions(
        chain.spec, pivot, max(0, extension_bound - pivot.size)
    ):
        checked += 1
        if find_embedding(ext, top, pins=pins) is None:
            failures.append(ext)
    return ProbeReport(pivot, core_t, extension_bound, checked, tuple(failures))
