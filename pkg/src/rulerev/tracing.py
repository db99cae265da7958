"""Exploration runs over problem samples, and trace persistence as JSONL.

A trace file holds one header line followed by one line per node in
evaluation order, so large traces can be streamed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .engine import (
    MINIMAL_PRUNING,
    ExplorationTrace,
    ProblemDomain,
    SearchLimits,
    TraceNode,
    run,
)

TRACE_VERSION = 1
TRACE_SUFFIX = ".trace.jsonl"


class TraceError(Exception):
    """Unreadable, corrupted, or mismatched trace file."""


@dataclass(frozen=True)
class ProblemSample:
    """Problem instances selected for one run, with the seed that chose them."""

    seed: int
    problems: tuple[tuple[str, Any], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "problems", tuple((str(p), x) for p, x in self.problems))
        ids = [p for p, _ in self.problems]
        if len(set(ids)) != len(ids):
            raise TraceError("problem ids in a sample must be unique")

    def ids(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self.problems)


def choose_problems(pool: ProblemSample, size: int, seed: int) -> ProblemSample:
    """Seeded uniform selection without replacement, preserving pool order."""
    if size < 1 or size > len(pool.problems):
        raise TraceError(f"cannot select {size} problems from a pool of {len(pool.problems)}")
    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(pool.problems)), size))
    return ProblemSample(seed=seed, problems=tuple(pool.problems[i] for i in picked))


def explore_sample(
    domain: ProblemDomain,
    sample: ProblemSample,
    limits: SearchLimits,
    out_dir: str | Path | None = None,
) -> tuple[list[ExplorationTrace], list[tuple[str, str]]]:
    """Run every problem of the sample with minimal pruning.

    Returns the traces plus a list of (problem id, error) pairs for
    problems whose domain calls failed; failures do not stop the others.
    Traces are written to ``out_dir`` when given, one file per problem.
    """
    if not sample.problems:
        raise TraceError("empty problem sample")
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    traces: list[ExplorationTrace] = []
    failures: list[tuple[str, str]] = []
    for problem_id, problem in sample.problems:
        try:
            state0 = domain.start(problem)
            outcome = run(domain, state0, None, limits, MINIMAL_PRUNING, problem_id=problem_id)
        except Exception as exc:
            failures.append((problem_id, str(exc)))
            continue
        assert outcome.trace is not None
        traces.append(outcome.trace)
        if out is not None:
            save_trace(outcome.trace, out / f"{problem_id}{TRACE_SUFFIX}")
    return traces, failures


def save_trace(trace: ExplorationTrace, path: str | Path) -> None:
    header = {
        "version": TRACE_VERSION,
        "problem": trace.problem_id,
        "domain": trace.domain_id,
        "max_states": trace.limits.max_states,
        "max_depth": trace.limits.max_depth,
        "complete": trace.complete,
        "best_node": trace.best_node_id,
        "nodes": len(trace.nodes),
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for n in trace.nodes:
        lines.append(
            json.dumps(
                {
                    "id": n.node_id,
                    "parent": n.parent_id,
                    "action": n.action_id,
                    "depth": n.depth,
                    "key": n.key,
                    "sat": n.satisfaction,
                    "valid": n.valid,
                    "dup": n.duplicate_of,
                    "measures": {ms: list(vec) for ms, vec in n.measures.items()},
                },
                separators=(",", ":"),
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _records(path: Path) -> list[tuple[int, Any]]:
    data = path.read_bytes()
    records: list[tuple[int, Any]] = []
    offset = 0
    for raw in data.split(b"\n"):
        if raw.strip():
            try:
                records.append((offset, json.loads(raw)))
            except json.JSONDecodeError as exc:
                raise TraceError(
                    f"{path}: corrupt record at byte {offset + exc.pos}: {exc.msg}"
                ) from exc
        offset += len(raw) + 1
    if not records:
        raise TraceError(f"{path}: empty trace file")
    return records


def load_trace(path: str | Path) -> ExplorationTrace:
    path = Path(path)
    records = _records(path)
    offset, header = records[0]
    if not isinstance(header, dict) or "version" not in header:
        raise TraceError(f"{path}: missing header at byte {offset}")
    if header["version"] != TRACE_VERSION:
        raise TraceError(
            f"{path}: trace version {header['version']} unsupported (expected {TRACE_VERSION})"
        )
    required = ("problem", "domain", "max_states", "max_depth", "complete", "best_node", "nodes")
    missing = [k for k in required if k not in header]
    if missing:
        raise TraceError(f"{path}: header lacks fields {missing}")
    expected = header.get("nodes")
    body = records[1:]
    if len(body) != expected:
        end = path.stat().st_size
        raise TraceError(
            f"{path}: truncated at byte {end}: header announces {expected} nodes, found {len(body)}"
        )
    nodes: list[TraceNode] = []
    for pos, (offset, doc) in enumerate(body):
        try:
            if doc["id"] != pos:
                raise TraceError(
                    f"{path}: node record at byte {offset} has id {doc['id']}, expected {pos}"
                )
            nodes.append(
                TraceNode(
                    node_id=doc["id"],
                    parent_id=doc["parent"],
                    action_id=doc["action"],
                    depth=doc["depth"],
                    key=doc["key"],
                    satisfaction=float(doc["sat"]),
                    valid=bool(doc["valid"]),
                    duplicate_of=doc["dup"],
                    measures={ms: tuple(vec) for ms, vec in doc["measures"].items()},
                )
            )
        except (KeyError, TypeError) as exc:
            raise TraceError(f"{path}: malformed node record at byte {offset}: {exc}") from exc
    return ExplorationTrace(
        problem_id=header["problem"],
        domain_id=header["domain"],
        limits=SearchLimits(header["max_states"], header["max_depth"]),
        complete=bool(header["complete"]),
        best_node_id=header["best_node"],
        nodes=nodes,
    )


def save_traces(traces: Sequence[ExplorationTrace], dir_path: str | Path) -> list[Path]:
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    ids = [t.problem_id for t in traces]
    if len(set(ids)) != len(ids):
        raise TraceError("traces carry duplicate problem ids")
    paths = []
    for trace in traces:
        path = out / f"{trace.problem_id}{TRACE_SUFFIX}"
        save_trace(trace, path)
        paths.append(path)
    return paths


def load_traces(dir_path: str | Path) -> list[ExplorationTrace]:
    root = Path(dir_path)
    if not root.is_dir():
        raise TraceError(f"no trace directory at {root}")
    return [load_trace(p) for p in sorted(root.glob(f"*{TRACE_SUFFIX}"))]
