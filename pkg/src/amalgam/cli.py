"""Command-line front end: class specs in, JSON reports out.

Commands orbit around three kinds of artifact: class-spec documents (a
signature plus forbidden patterns, JSON), chain logs (JSON-lines replays
of limit or automorphism builds), and reports (one JSON object per
invocation).  Every report embeds the exact bounds used, so no verdict can
be quoted without its certification level.

Exit status: 0 for Witnessed/success verdicts, 1 for NoneUpTo/failure,
2 for usage errors (including malformed or invalid input files).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .classes import (
    ClassSpec,
    Witnessed,
    audit_hereditarity,
    bundled,
    bundled_names,
    count_types,
    enumerate_types,
    find_wap_witness,
    solve_jep,
)
from .errors import AmalgamError, InvalidStructure
from .generic import build_generic_automorphism
from .limits import Budget, Chain, audit_tasks, back_and_forth, build_limit, verify_universality
from .space import PointApprox, distance_at_depth, orbit_density_probe
from .structures import FinStructure

# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """One resolved invocation: command, bounds, and file plumbing.

    Command-specific flags (input paths, sizes, seeds for both sides of a
    comparison, ...) live in ``options``; the fields named here are common
    to every command and are echoed in the report header.
    """

    command: str
    spec_path: str | None = None
    bounds: Budget = Budget()
    seed: int = 0
    output_path: str | None = None
    options: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.command not in _HANDLERS:
            raise InvalidStructure(
                f"unknown command {self.command!r}; "
                f"expected one of {', '.join(sorted(_HANDLERS))}"
            )
        if self.seed < 0:
            raise InvalidStructure("seed must be a natural number")


def parse_class_spec(path: str | Path) -> ClassSpec:
    """Load and validate a class-spec document from an explicit file path."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidStructure(f"cannot read class spec {path}: {exc}") from exc
    try:
        return ClassSpec.from_json(text)
    except json.JSONDecodeError as exc:
        raise InvalidStructure(f"malformed class spec {path}: {exc}") from exc


def _resolve_spec(name_or_path: str | None) -> ClassSpec:
    """Accept either a file path or the name of a bundled class.

    Bundled names may be written with or without a ``.spec``/``.json``
    suffix, so ``--spec graphs.spec`` works even when no such file exists.
    """
    if not name_or_path:
        raise InvalidStructure("this command needs --spec (a file path or a bundled name)")
    if Path(name_or_path).exists():
        return parse_class_spec(name_or_path)
    stem = name_or_path
    for suffix in (".spec", ".json"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    try:
        return bundled(stem)
    except KeyError as exc:
        raise InvalidStructure(
            f"{name_or_path!r} is neither a file nor a bundled class"
            f" (bundled: {', '.join(bundled_names())})"
        ) from exc


def _load_structure(path: object) -> FinStructure:
    try:
        text = Path(str(path)).read_text()
    except OSError as exc:
        raise InvalidStructure(f"cannot read structure {path}: {exc}") from exc
    try:
        return FinStructure.from_json(text)
    except json.JSONDecodeError as exc:
        raise InvalidStructure(f"malformed structure {path}: {exc}") from exc


def _load_approx(path: object) -> PointApprox:
    """Read an approximation: ``{"structure": ..., "depth": ...}`` or a bare structure."""
    try:
        obj = json.loads(Path(str(path)).read_text())
    except OSError as exc:
        raise InvalidStructure(f"cannot read approximation {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidStructure(f"malformed approximation {path}: {exc}") from exc
    if isinstance(obj, Mapping) and "structure" in obj:
        struct = FinStructure.from_json_obj(obj["structure"])  # type: ignore[arg-type]
        depth = int(obj.get("depth", struct.size - 1))  # type: ignore[call-overload]
    else:
        struct = FinStructure.from_json_obj(obj)
        depth = struct.size - 1
    return PointApprox(struct, depth)


def _load_chain(config: RunConfig) -> Chain:
    path = config.options.get("chain")
    if not path:
        raise InvalidStructure("this command needs --chain (a saved build log)")
    chain = Chain.load(path)
    if config.spec_path is not None and _resolve_spec(config.spec_path) != chain.spec:
        raise InvalidStructure("--spec does not match the class embedded in the chain log")
    return chain


def _int_tuple(text: object) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in str(text).split(",") if part.strip())
    except ValueError as exc:
        raise InvalidStructure(f"expected comma-separated integers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# Command handlers: each returns (payload | None, exit status)
# ---------------------------------------------------------------------------


def _cmd_check(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    spec = _resolve_spec(config.spec_path)
    max_size = int(config.options["max_size"])  # type: ignore[call-overload]
    violations = audit_hereditarity(spec, max_size)
    payload: dict[str, object] = {
        "label": spec.label or str(config.spec_path),
        "signature": spec.sig.to_json_obj(),
        "forbidden_patterns": len(spec.forbidden),
        "type_counts": count_types(spec, max_size),
        "hereditarity_violations": [
            {"type": t.to_json_obj(), "deleted_element": e} for t, e in violations
        ],
    }
    return payload, 0 if not violations else 1


def _cmd_jep(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    spec = _resolve_spec(config.spec_path)
    a = _load_structure(config.options["a"])
    b = _load_structure(config.options["b"])
    bound = config.options.get("bound")
    bound = config.bounds.jep_bound if bound is None else int(bound)  # type: ignore[call-overload]
    verdict = solve_jep(spec, a, b, bound)
    payload = {"bound": bound, "verdict": verdict.to_json_obj()}
    return payload, 0 if isinstance(verdict, Witnessed) else 1


def _cmd_wap(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    spec = _resolve_spec(config.spec_path)
    triple = config.options.get("wap_bounds")
    if triple:
        parts = _int_tuple(triple)
        if len(parts) != 3:
            raise InvalidStructure("--bounds takes three integers: witness,extension,amalgam")
        witness_bound, extension_bound, amalgam_bound = parts
    else:
        witness_bound = config.bounds.jep_bound
        extension_bound = config.bounds.extension_bound
        amalgam_bound = config.bounds.amalgam_bound
    if config.options.get("pivot"):
        pivots = [_load_structure(config.options["pivot"])]
    else:
        size = int(config.options["size"])  # type: ignore[call-overload]
        pivots = [t for t in enumerate_types(spec, size) if t.size == size]
    results = []
    all_witnessed = True
    for pivot in pivots:
        verdict = find_wap_witness(spec, pivot, witness_bound, extension_bound, amalgam_bound)
        all_witnessed = all_witnessed and isinstance(verdict, Witnessed)
        results.append({"pivot": pivot.to_json_obj(), "verdict": verdict.to_json_obj()})
    payload: dict[str, object] = {
        "witness_bound": witness_bound,
        "extension_bound": extension_bound,
        "amalgam_bound": amalgam_bound,
        "pivots": results,
    }
    return payload, 0 if all_witnessed else 1


def _log_lines(jsonl: str) -> list[object]:
    return [json.loads(line) for line in jsonl.splitlines()]


def _cmd_build_limit(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    spec = _resolve_spec(config.spec_path)
    steps = int(config.options["steps"])  # type: ignore[call-overload]
    chain = build_limit(spec, steps, config.bounds, config.seed)
    chain_path = config.options.get("chain")
    if chain_path:
        chain.save(str(chain_path))
    payload: dict[str, object] = {
        "steps": steps,
        "stage_count": chain.stage_count,
        "top_size": chain.top.size,
        "chain_path": str(chain_path) if chain_path else None,
        "schedule_log": _log_lines(chain.to_jsonl()),
    }
    return payload, 0


def _cmd_verify(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    chain = _load_chain(config)
    size_bound = int(config.options["universality"])  # type: ignore[call-overload]
    element_cap = int(config.options["element_cap"])  # type: ignore[call-overload]
    universality = verify_universality(chain, size_bound)
    audit = audit_tasks(chain, element_cap, config.bounds.extension_bound)
    payload: dict[str, object] = {
        "universality": universality.to_json_obj(),
        "task_audit": audit.to_json_obj(),
    }
    ok = universality.complete and audit.all_resolved
    return payload, 0 if ok else 1


def _cmd_compare(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    spec = _resolve_spec(config.spec_path)
    steps = int(config.options["steps"])  # type: ignore[call-overload]
    depth = int(config.options["depth"])  # type: ignore[call-overload]
    seed_a = int(config.options["seed_a"])  # type: ignore[call-overload]
    seed_b = int(config.options["seed_b"])  # type: ignore[call-overload]
    left = build_limit(spec, steps, config.bounds, seed_a)
    right = build_limit(spec, steps, config.bounds, seed_b)
    result = back_and_forth(left, right, depth, config.bounds)
    payload: dict[str, object] = {
        "steps": steps,
        "depth": depth,
        "seed_a": seed_a,
        "seed_b": seed_b,
        "left_top_size": left.top.size,
        "right_top_size": right.top.size,
        "weave": result.to_json_obj(),
    }
    return payload, 0 if result.success else 1


def _cmd_generic_aut(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    spec = _resolve_spec(config.spec_path)
    steps = int(config.options["steps"])  # type: ignore[call-overload]
    chain = build_generic_automorphism(spec, steps, config.bounds, config.seed)
    chain_path = config.options.get("chain")
    if chain_path:
        chain.save(str(chain_path))
    payload: dict[str, object] = {
        "steps": steps,
        "carrier_size": chain.top.size,
        "partial_map": [[a, b] for a, b in chain.top.pairs],
        "stage_count": len(chain.stage_marks),
        "chain_path": str(chain_path) if chain_path else None,
        "schedule_log": _log_lines(chain.to_jsonl()),
    }
    return payload, 0


def _cmd_distance(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    left = _load_approx(config.options["a"])
    right = _load_approx(config.options["b"])
    verdict = distance_at_depth(left, right)
    payload: dict[str, object] = {
        "left_depth": left.depth,
        "right_depth": right.depth,
        "distance": verdict.to_json_obj(),
    }
    return payload, 0


def _cmd_probe(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    chain = _load_chain(config)
    core = _int_tuple(config.options["core"])
    pivot_spec = config.options.get("pivot")
    pivot_elements = _int_tuple(pivot_spec) if pivot_spec else core
    pivot = chain.top.induced(pivot_elements)
    extension_bound = config.options.get("extension_bound")
    if extension_bound is None:
        extension_bound = config.bounds.extension_bound
    report = orbit_density_probe(chain, core, pivot, int(extension_bound))  # type: ignore[call-overload]
    return {"probe": report.to_json_obj()}, 0 if report.dense_up_to_bound else 1


def _cmd_export(config: RunConfig) -> tuple[dict[str, object] | None, int]:
    chain = _load_chain(config)
    stage_option = config.options.get("stage")
    index = chain.stage_count - 1 if stage_option is None else int(stage_option)  # type: ignore[call-overload]
    if not 0 <= index < chain.stage_count:
        raise InvalidStructure(
            f"stage {index} out of range (chain has {chain.stage_count} stages)"
        )
    dot = chain.stage(index).to_dot(f"stage_{index}")
    if config.output_path:
        Path(config.output_path).write_text(dot)
    else:
        sys.stdout.write(dot)
    return None, 0


_HANDLERS: dict[str, Callable[[RunConfig], tuple[dict[str, object] | None, int]]] = {
    "check": _cmd_check,
    "jep": _cmd_jep,
    "wap": _cmd_wap,
    "build-limit": _cmd_build_limit,
    "verify": _cmd_verify,
    "compare": _cmd_compare,
    "generic-aut": _cmd_generic_aut,
    "distance": _cmd_distance,
    "probe": _cmd_probe,
    "export": _cmd_export,
}


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def run(config: RunConfig) -> int:
    """Execute one command and write its report; returns the exit status."""
    handler = _HANDLERS[config.command]
    started = time.perf_counter()
    payload, status = handler(config)
    if payload is not None:
        report: dict[str, object] = {
            "command": config.command,
            "spec": config.spec_path,
            "bounds": config.bounds.to_json_obj(),
            "seed": config.seed,
            "elapsed_seconds": round(time.perf_counter() - started, 3),
        }
        report.update(payload)
        text = json.dumps(report, indent=2) + "\n"
        if config.output_path:
            Path(config.output_path).write_text(text)
        else:
            sys.stdout.write(text)
    return status


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

_COMMON_KEYS = frozenset({"command", "spec", "budget", "seed", "output"})


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--budget",
        help="search bounds as 'jep,amalgam,extension' or 'jep=8,amalgam=8,extension=3' "
        "(default: AMALGAM_BUDGET env var, then built-in defaults)",
    )
    common.add_argument("-o", "--output", help="write the report here instead of stdout")

    with_spec = argparse.ArgumentParser(add_help=False)
    with_spec.add_argument("--spec", required=True, help="class-spec file or bundled name")
    maybe_spec = argparse.ArgumentParser(add_help=False)
    maybe_spec.add_argument("--spec", help="cross-check against the class embedded in the log")

    parser = argparse.ArgumentParser(
        prog="amalgam",
        description="Bounded joint-embedding, amalgamation, and weak-amalgamation "
        "solvers for hereditary classes of finite relational structures, with "
        "chain builders for limit and generic-automorphism approximations.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser(
        "check", parents=[common, with_spec], help="validate a class spec and audit hereditarity"
    )
    p.add_argument("--max-size", type=int, default=4, help="audit and count types up to this size")

    p = sub.add_parser(
        "jep", parents=[common, with_spec], help="joint embedding of two member structures"
    )
    p.add_argument("--a", required=True, help="first structure (JSON file)")
    p.add_argument("--b", required=True, help="second structure (JSON file)")
    p.add_argument("--bound", type=int, help="search bound (default: budget's jep bound)")

    p = sub.add_parser(
        "wap",
        parents=[common, with_spec],
        help="weak-amalgamation witnesses for one pivot or all types of a size",
    )
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--size", type=int, help="run every member type of exactly this size")
    group.add_argument("--pivot", help="run a single pivot (JSON file)")
    p.add_argument(
        "--bounds",
        dest="wap_bounds",
        help="witness,extension,amalgam bounds, e.g. '2,4,8' (default: from budget)",
    )

    p = sub.add_parser(
        "build-limit", parents=[common, with_spec], help="build a limit approximation chain"
    )
    p.add_argument("--steps", type=int, required=True, help="number of schedule steps")
    p.add_argument("--seed", type=int, default=0, help="tie-break seed")
    p.add_argument("--chain", help="save the replayable chain log here (JSON lines)")

    p = sub.add_parser(
        "verify", parents=[common, maybe_spec], help="re-verify a saved chain log"
    )
    p.add_argument("--chain", required=True, help="chain log to load")
    p.add_argument(
        "--universality", type=int, default=3, help="check every type up to this size embeds"
    )
    p.add_argument(
        "--element-cap", type=int, default=6, help="audit tasks over the first K elements"
    )

    p = sub.add_parser(
        "compare",
        parents=[common, with_spec],
        help="build two chains and weave a partial isomorphism between their tops",
    )
    p.add_argument("--seed-a", type=int, required=True)
    p.add_argument("--seed-b", type=int, required=True)
    p.add_argument("--steps", type=int, required=True, help="schedule steps for each build")
    p.add_argument("--depth", type=int, required=True, help="elements 0..depth must be covered")

    p = sub.add_parser(
        "generic-aut",
        parents=[common, with_spec],
        help="build a generic partial-automorphism approximation",
    )
    p.add_argument("--steps", type=int, required=True, help="number of schedule steps")
    p.add_argument("--seed", type=int, default=0, help="tie-break seed")
    p.add_argument("--chain", help="save the replayable log here (JSON lines)")

    p = sub.add_parser(
        "distance", parents=[common], help="dyadic distance between two approximations"
    )
    p.add_argument("--a", required=True, help="first approximation (JSON file)")
    p.add_argument("--b", required=True, help="second approximation (JSON file)")

    p = sub.add_parser(
        "probe",
        parents=[common, maybe_spec],
        help="orbit-density probe over a saved chain's top",
    )
    p.add_argument("--chain", required=True, help="chain log to load")
    p.add_argument("--core", required=True, help="comma-separated elements fixed pointwise")
    p.add_argument("--pivot", help="comma-separated pivot elements (default: the core)")
    p.add_argument("--extension-bound", type=int, help="default: budget's extension bound")

    p = sub.add_parser(
        "export", parents=[common, maybe_spec], help="export a chain stage as DOT"
    )
    p.add_argument("--chain", required=True, help="chain log to load")
    p.add_argument("--stage", type=int, help="stage index (default: the final stage)")

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    budget_text = getattr(args, "budget", None)
    try:
        bounds = Budget.from_string(budget_text) if budget_text else Budget.from_env()
    except ValueError as exc:
        raise InvalidStructure(f"--budget: {exc}") from exc
    options = {k: v for k, v in vars(args).items() if k not in _COMMON_KEYS}
    return RunConfig(
        command=args.command,
        spec_path=getattr(args, "spec", None),
        bounds=bounds,
        seed=getattr(args, "seed", 0),
        output_path=getattr(args, "output", None),
        options=options,
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return run(_config_from_args(args))
    except AmalgamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
