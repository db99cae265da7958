"""Depth-first action-cycle search over pluggable problem domains.

One run walks a state tree: evaluate the current state, stop on a perfect
state or exhausted limits, backtrack from invalid states, otherwise apply
the proposed actions depth first.  In normal mode the knowledge base
proposes and orders actions; in minimal-pruning mode every action is
applied at every expandable state so the resulting trace is independent of
any knowledge base and can later be replayed under arbitrary weights.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Mapping

if TYPE_CHECKING:
    from .knowledge import KnowledgeBase

PERFECT_EPSILON = 1e-9

NORMAL = "normal"
MINIMAL_PRUNING = "minimal-pruning"


class EngineError(Exception):
    """Domain failure or contract breach during a search run."""


@dataclass(frozen=True)
class ActionSpec:
    """One catalog entry: an action and the measure set its rules condition on."""

    action_id: str
    measure_set: str


@dataclass(frozen=True)
class SearchLimits:
    max_states: int = 200_000
    max_depth: int = 512

    def __post_init__(self) -> None:
        if self.max_states < 1 or self.max_depth < 1:
            raise EngineError("search limits must both be >= 1")


class ProblemDomain(abc.ABC):
    """Rules of one family of state-optimisation problems.

    Implementations must be immutable after construction and shareable
    read-only across runs.  Action application must be deterministic and
    total; satisfaction values lie in [1, 10] with 10 meaning perfect.
    """

    domain_id: str = "domain"
    perfect_satisfaction: float = 10.0

    @property
    @abc.abstractmethod
    def actions(self) -> tuple[ActionSpec, ...]:
        """Ordered action catalog; the order breaks weight ties."""

    @property
    @abc.abstractmethod
    def measure_sets(self) -> Mapping[str, tuple[str, ...]]:
        """Measure set id to ordered measure names."""

    @abc.abstractmethod
    def start(self, problem: Any) -> Any:
        """Initial state for one problem instance."""

    @abc.abstractmethod
    def satisfaction(self, state: Any) -> float:
        ...

    @abc.abstractmethod
    def measures(self, state: Any, measure_set_id: str) -> tuple[float, ...]:
        ...

    @abc.abstractmethod
    def apply(self, state: Any, action_id: str) -> Any:
        ...

    @abc.abstractmethod
    def state_key(self, state: Any) -> str:
        """Canonical identity of a state within one run, used to reject duplicates."""

    def is_valid(self, state: Any, parent_state: Any | None, visited: Mapping[str, int]) -> bool:
        """Domain validity hook; duplicate rejection is handled by the engine.

        Must depend only on the state and its parent, not on visit order,
        or logged traces cannot be replayed faithfully.
        """
        return True


@dataclass(frozen=True)
class TraceNode:
    """One evaluated state of a minimal-pruning run, in evaluation order."""

    node_id: int
    parent_id: int | None
    action_id: str | None
    depth: int
    key: str
    satisfaction: float
    valid: bool
    duplicate_of: int | None
    measures: Mapping[str, tuple[float, ...]]


@dataclass
class ExplorationTrace:
    """Full state tree of one minimal-pruning run."""

    problem_id: str
    domain_id: str
    limits: SearchLimits
    complete: bool
    best_node_id: int
    nodes: list[TraceNode]

    def node(self, node_id: int) -> TraceNode:
        return self.nodes[node_id]

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for n in self.nodes[1:]:
            out[n.parent_id].append(n.node_id)
        return out

    def children_by_action(self) -> list[dict[str, int]]:
        out: list[dict[str, int]] = [{} for _ in self.nodes]
        for n in self.nodes[1:]:
            out[n.parent_id][n.action_id] = n.node_id
        return out


@dataclass(frozen=True)
class SearchOutcome:
    best_key: str
    best_satisfaction: float
    states_evaluated: int
    visit_sequence: tuple[str, ...]
    truncated: bool
    trace: ExplorationTrace | None = None


class _Frame:
    __slots__ = ("node_id", "state", "key", "depth", "actions", "cursor")

    def __init__(self, node_id: int, state: Any, key: str, depth: int, actions: tuple[str, ...]):
        self.node_id = node_id
        self.state = state
        self.key = key
        self.depth = depth
        self.actions = actions
        self.cursor = 0


def run(
    domain: ProblemDomain,
    initial_state: Any,
    kb: "KnowledgeBase | None",
    limits: SearchLimits,
    mode: str = NORMAL,
    *,
    problem_id: str = "",
) -> SearchOutcome:
    """Execute the action cycle from ``initial_state``.

    Normal mode proposes actions with weight >= 1 from ``kb``, highest
    weight first with catalog order breaking ties, and stops at the first
    perfect state.  Minimal-pruning mode ignores ``kb``, applies every
    action at every expandable state (perfect states, duplicates and
    invalid states become leaves) and returns a full trace.
    """
    if mode not in (NORMAL, MINIMAL_PRUNING):
        raise EngineError(f"unknown mode {mode!r}")
    minimal = mode == MINIMAL_PRUNING
    catalog = tuple(domain.actions)
    ms_ids = tuple(domain.measure_sets)
    proposers = None
    if not minimal:
        if kb is None:
            raise EngineError("normal mode requires a knowledge base")
        missing = [s.action_id for s in catalog if s.action_id not in kb.rule_bases]
        if missing:
            raise EngineError(f"knowledge base lacks rule bases for actions {missing}")
        proposers = tuple((idx, s, kb.rule_bases[s.action_id]) for idx, s in enumerate(catalog))
    all_actions = tuple(s.action_id for s in catalog)
    threshold = domain.perfect_satisfaction - PERFECT_EPSILON

    nodes: list[TraceNode] = []
    visit_seq: list[str] = []
    visited: dict[str, int] = {}
    truncated = False
    depth_capped = False

    def evaluate(state: Any) -> tuple[str, float, dict[str, tuple[float, ...]]]:
        try:
            key = str(domain.state_key(state))
        except Exception as exc:
            raise EngineError(f"state_key failed: {exc}") from exc
        try:
            sat = float(domain.satisfaction(state))
            measures = {
                ms: tuple(float(v) for v in domain.measures(state, ms)) for ms in ms_ids
            }
        except Exception as exc:
            raise EngineError(f"domain evaluation failed at state {key!r}: {exc}") from exc
        if not math.isfinite(sat) or any(
            not math.isfinite(v) for vec in measures.values() for v in vec
        ):
            raise EngineError(f"non-finite evaluation at state {key!r}")
        return key, sat, measures

    def expansion_actions(measures: Mapping[str, tuple[float, ...]], depth: int) -> tuple[str, ...]:
        nonlocal depth_capped
        if depth >= limits.max_depth:
            if catalog:
                depth_capped = True
            return ()
        if minimal:
            return all_actions
        ranked = []
        for idx, spec, rb in proposers:
            w = rb.propose(measures[spec.measure_set])
            if w >= 1:
                ranked.append((-w, idx))
        ranked.sort()
        return tuple(catalog[idx].action_id for _, idx in ranked)

    key, sat, measures = evaluate(initial_state)
    visit_seq.append(key)
    visited[key] = 0
    best_id, best_key, best_sat = 0, key, sat
    perfect = sat >= threshold
    valid = True
    if not perfect:
        valid = bool(domain.is_valid(initial_state, None, visited))
    if minimal:
        nodes.append(TraceNode(0, None, None, 0, key, sat, valid, None, measures))

    stack: list[_Frame] = []
    if not perfect and len(visit_seq) >= limits.max_states:
        truncated = True
    elif not perfect and valid:
        acts = expansion_actions(measures, 0)
        if acts:
            stack.append(_Frame(0, initial_state, key, 0, acts))

    while stack:
        frame = stack[-1]
        if frame.cursor >= len(frame.actions):
            # list exhausted: backtrack, the parent's untried actions resume
            stack.pop()
            continue
        action = frame.actions[frame.cursor]
        frame.cursor += 1
        try:
            child_state = domain.apply(frame.state, action)
        except Exception as exc:
            raise EngineError(
                f"action {action!r} failed below state {frame.key!r}: {exc}"
            ) from exc
        key, sat, measures = evaluate(child_state)
        node_id = len(visit_seq)
        visit_seq.append(key)
        dup_of = visited.get(key)
        if dup_of is None:
            visited[key] = node_id
        perfect = sat >= threshold
        valid = True
        if not perfect and (minimal or dup_of is None):
            valid = bool(domain.is_valid(child_state, frame.state, visited))
        if minimal:
            nodes.append(
                TraceNode(node_id, frame.node_id, action, frame.depth + 1, key, sat, valid, dup_of, measures)
            )
        if sat > best_sat:
            best_id, best_key, best_sat = node_id, key, sat
        if perfect and not minimal:
            break
        if len(visit_seq) >= limits.max_states:
            truncated = True
            break
        if perfect or dup_of is not None or not valid:
            continue  # leaf: never expanded
        acts = expansion_actions(measures, frame.depth + 1)
        if acts:
            stack.append(_Frame(node_id, child_state, key, frame.depth + 1, acts))

    trace = None
    if minimal:
        trace = ExplorationTrace(
            problem_id=problem_id,
            domain_id=domain.domain_id,
            limits=limits,
            complete=not truncated and not depth_capped,
            best_node_id=best_id,
            nodes=nodes,
        )
    return SearchOutcome(best_key, best_sat, len(visit_seq), tuple(visit_seq), truncated, trace)
