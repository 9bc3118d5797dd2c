"""Bounded weak-amalgamation machinery for hereditary classes.

Finite relational structures and embedding search (:mod:`.structures`);
hereditary classes with JEP/AP/WAP solvers under explicit bounds
(:mod:`.classes`); ascending-chain limit approximations with back-and-forth
comparison (:mod:`.limits`); the dyadic metric on labelled approximations
(:mod:`.space`); partial-automorphism systems and a generic automorphism
builder (:mod:`.generic`); and a JSON-report CLI (:mod:`.cli`).
"""

from .classes import (
    AmalgamWitness,
    ClassSpec,
    NoneUpTo,
    WapWitness,
    Witnessed,
    audit_hereditarity,
    bundled,
    bundled_names,
    count_types,
    embed_via_extension,
    enumerate_types,
    find_wap_witness,
    load_spec,
    marked_extensions,
    membership,
    one_point_extensions,
    solve_ap,
    solve_jep,
)
from .errors import (
    AmalgamError,
    BudgetExceeded,
    InvalidMap,
    InvalidStructure,
    UnsupportedBase,
)
from .generic import (
    AutChain,
    MapSystem,
    SystemEmbedding,
    SystemWeaveResult,
    build_generic_automorphism,
    conjugacy_violations,
    count_system_types,
    enumerate_system_types,
    find_system_embedding,
    solve_jep_p,
    solve_wap_p,
    system_back_and_forth,
    system_extensions,
    validate_system,
)
from .limits import (
    Budget,
    Chain,
    FailureTrace,
    WeaveResult,
    audit_tasks,
    back_and_forth,
    build_limit,
    verify_universality,
    verify_weak_saturation,
)
from .space import (
    AtMost,
    Containment,
    Exact,
    PointApprox,
    distance_at_depth,
    in_basic_open,
    orbit_density_probe,
)
from .structures import (
    Embedding,
    EmbeddingSearch,
    FinStructure,
    Injection,
    PartialIso,
    Signature,
    are_isomorphic,
    canonical_form,
    disjoint_union,
    find_embedding,
    find_isomorphism,
)

__version__ = "0.1.0"

__all__ = [
    "AmalgamError",
    "AmalgamWitness",
    "AtMost",
    "AutChain",
    "Budget",
    "BudgetExceeded",
    "Chain",
    "ClassSpec",
    "Containment",
    "Embedding",
    "EmbeddingSearch",
    "Exact",
    "FailureTrace",
    "FinStructure",
    "Injection",
    "InvalidMap",
    "InvalidStructure",
    "MapSystem",
    "NoneUpTo",
    "PartialIso",
    "PointApprox",
    "Signature",
    "SystemEmbedding",
    "SystemWeaveResult",
    "UnsupportedBase",
    "WapWitness",
    "WeaveResult",
    "Witnessed",
    "audit_hereditarity",
    "audit_tasks",
    "are_isomorphic",
    "back_and_forth",
    "build_generic_automorphism",
    "build_limit",
    "bundled",
    "bundled_names",
    "canonical_form",
    "conjugacy_violations",
    "count_system_types",
    "count_types",
    "disjoint_union",
    "distance_at_depth",
    "embed_via_extension",
    "enumerate_system_types",
    "enumerate_types",
    "find_embedding",
    "find_isomorphism",
    "find_system_embedding",
    "find_wap_witness",
    "in_basic_open",
    "load_spec",
    "marked_extensions",
    "membership",
    "one_point_extensions",
    "orbit_density_probe",
    "solve_ap",
    "solve_jep",
    "solve_jep_p",
    "solve_wap_p",
    "system_back_and_forth",
    "system_extensions",
    "validate_system",
    "verify_universality",
    "verify_weak_saturation",
]
