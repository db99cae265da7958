"""Offline knowledge revision: replay logged traces under candidate weight
assignments, score them with the composite performance function, and search
the weight space with a reactive tabu-style local search.

Replay never calls back into the domain: every action application is
resolved by looking up the child recorded in the minimal-pruning trace, so
any knowledge base can be scored by rearranging the logged states.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .engine import PERFECT_EPSILON, ExplorationTrace, ProblemDomain, SearchLimits
from .knowledge import KnowledgeBase, Rule, RuleBase, aggregate, validate_rule_base
from .learning import (
    AreaIndex,
    ExampleSet,
    build_example_sets,
    mdl_discretize,
)

DEFAULT_THRESHOLD = 10.0 - PERFECT_EPSILON


class RevisionError(Exception):
    """Unusable inputs to replay or revision."""


@dataclass(frozen=True)
class ReplayStats:
    best_satisfaction: float
    states_evaluated: int
    visit_keys: tuple[str, ...] | None = None


@dataclass(frozen=True)
class PerfReport:
    """Per-problem replay results and the aggregate performance value."""

    per_problem: tuple[tuple[str, float, int], ...]
    mean_satisfaction: float
    mean_states: float
    perf: float


def perf(stats: Sequence[ReplayStats], problem_ids: Sequence[str] | None = None) -> PerfReport:
    """Perf = (1/4) * (3 * mean satisfaction / 10 + 1 / sqrt(mean state count))."""
    if not stats:
        raise RevisionError("perf needs at least one replay result")
    if problem_ids is None:
        problem_ids = [f"p{i}" for i in range(len(stats))]
    mean_sat = sum(s.best_satisfaction for s in stats) / len(stats)
    mean_states = sum(s.states_evaluated for s in stats) / len(stats)
    value = 0.25 * (3.0 * mean_sat / 10.0 + 1.0 / math.sqrt(mean_states))
    per_problem = tuple(
        (pid, s.best_satisfaction, s.states_evaluated) for pid, s in zip(problem_ids, stats)
    )
    return PerfReport(per_problem, mean_sat, mean_states, value)


@dataclass(frozen=True)
class SearchSchedule:
    """Reactive local search knobs; all deterministic given the seed."""

    max_iterations: int = 5000
    tenure: float = 4.0
    tenure_increase: float = 1.3
    tenure_decrease: float = 0.9
    non_repeat_window: int = 50
    repetition_horizon: int = 2000
    stagnation_limit: int = 200
    seed: int = 17
    restart_strength: int = 3

    def __post_init__(self) -> None:
        if self.max_iterations < 0:
            raise RevisionError("max_iterations must be >= 0")
        if self.tenure < 1 or self.non_repeat_window < 1 or self.repetition_horizon < 1:
            raise RevisionError("tenure, non_repeat_window and repetition_horizon must be >= 1")
        if self.stagnation_limit < 1 or self.restart_strength < 1:
            raise RevisionError("stagnation_limit and restart_strength must be >= 1")
        if self.tenure_increase <= 1.0 or not 0.0 < self.tenure_decrease < 1.0:
            raise RevisionError("tenure factors must satisfy increase > 1 and 0 < decrease < 1")


@dataclass(frozen=True)
class SolutionSpace:
    """Weight-assignment search space: one ordered area list per action."""

    indexes: Mapping[str, AreaIndex]  # in action catalog order
    weight_max: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "indexes", dict(self.indexes))
        offsets = {}
        total = 0
        for action_id, index in self.indexes.items():
            offsets[action_id] = total
            total += len(index.areas)
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_total", total)

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(self.indexes)

    def size(self) -> int:
        return self._total  # type: ignore[attr-defined]

    def offset(self, action_id: str) -> int:
        return self._offsets[action_id]  # type: ignore[attr-defined]

    def describe(self, flat_index: int) -> tuple[str, int]:
        """(action id, area index within the action) of a flat coordinate."""
        for action_id, index in self.indexes.items():
            off = self.offset(action_id)
            if off <= flat_index < off + len(index.areas):
                return action_id, flat_index - off
        raise IndexError(flat_index)


@dataclass(frozen=True)
class Solution:
    """A complete weight assignment: one integer per area per action."""

    space: SolutionSpace
    weights: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))
        if len(self.weights) != self.space.size():
            raise RevisionError(
                f"solution has {len(self.weights)} weights for a space of {self.space.size()}"
            )
        for w in self.weights:
            if w < 0 or w > self.space.weight_max:
                raise RevisionError(f"weight {w} outside [0, {self.space.weight_max}]")

    def weight_for(self, action_id: str, values: Sequence[float]) -> int:
        index = self.space.indexes[action_id]
        return self.weights[self.space.offset(action_id) + index.locate(values)]

    def with_move(self, flat_index: int, delta: int) -> "Solution":
        weights = list(self.weights)
        weights[flat_index] += delta
        return Solution(self.space, tuple(weights))


def build_solution_space(
    domain: ProblemDomain,
    kb: KnowledgeBase,
    cuts: Mapping[str, Mapping[str, Sequence[float]]],
) -> SolutionSpace:
    indexes = {}
    for spec in domain.actions:
        rb = kb.rule_bases.get(spec.action_id)
        if rb is None:
            raise RevisionError(f"knowledge base lacks a rule base for action {spec.action_id!r}")
        indexes[spec.action_id] = AreaIndex(rb, cuts.get(spec.action_id, {}))
    return SolutionSpace(indexes, kb.weight_max)


def initial_solution(space: SolutionSpace) -> Solution:
    """Embed the initial knowledge base: each area inherits its parent rule's
    weight; default-region areas get 0."""
    weights = []
    for index in space.indexes.values():
        rules = index.rule_base.rules
        for area in index.areas:
            weights.append(0 if area.parent_rule is None else rules[area.parent_rule].weight)
    return Solution(space, tuple(weights))


def solution_to_kb(solution: Solution) -> KnowledgeBase:
    """Turn a weight assignment back into rules, dropping weight-0 areas
    (covered by the default) and aggregating adjacent same-weight rules."""
    space = solution.space
    bases = {}
    for action_id, index in space.indexes.items():
        off = space.offset(action_id)
        rules = []
        for ai, area in enumerate(index.areas):
            w = solution.weights[off + ai]
            if w >= 1:
                rules.append(Rule(area.conditions, w))
        rb = RuleBase(action_id, index.measure_set_id, index.measure_names, tuple(rules))
        bases[action_id] = aggregate(rb)
    return KnowledgeBase(bases, space.weight_max)


def neighborhood(solution: Solution) -> list[tuple[int, int]]:
    """All (flat coordinate, +-1) moves that keep weights in range."""
    moves = []
    weight_max = solution.space.weight_max
    for i, w in enumerate(solution.weights):
        if w - 1 >= 0:
            moves.append((i, -1))
        if w + 1 <= weight_max:
            moves.append((i, 1))
    return moves


class CompiledTrace:
    """A trace bound to a solution space: flat arrays for fast replays."""

    __slots__ = (
        "problem_id",
        "complete",
        "limits",
        "n_actions",
        "sat",
        "perfect",
        "valid",
        "canon",
        "depth",
        "keys",
        "child",
        "slot",
    )

    def __init__(self, trace: ExplorationTrace, space: SolutionSpace, threshold: float):
        self.problem_id = trace.problem_id
        self.complete = trace.complete
        self.limits = trace.limits
        actions = space.actions
        self.n_actions = len(actions)
        n = len(trace.nodes)
        self.sat = [node.satisfaction for node in trace.nodes]
        self.perfect = [node.satisfaction >= threshold for node in trace.nodes]
        self.valid = [node.valid for node in trace.nodes]
        self.canon = [
            node.node_id if node.duplicate_of is None else node.duplicate_of
            for node in trace.nodes
        ]
        self.depth = [node.depth for node in trace.nodes]
        self.keys = [node.key for node in trace.nodes]
        self.child = [[-1] * self.n_actions for _ in range(n)]
        action_pos = {a: i for i, a in enumerate(actions)}
        for node in trace.nodes[1:]:
            pos = action_pos.get(node.action_id)
            if pos is None:
                raise RevisionError(
                    f"trace {trace.problem_id!r} uses unknown action {node.action_id!r}"
                )
            self.child[node.parent_id][pos] = node.node_id
        self.slot = []
        for node in trace.nodes:
            row = []
            for action_id in actions:
                index = space.indexes[action_id]
                vec = node.measures.get(index.measure_set_id)
                if vec is None:
                    raise RevisionError(
                        f"trace {trace.problem_id!r} records no measures for set "
                        f"{index.measure_set_id!r}"
                    )
                row.append(space.offset(action_id) + index.locate(vec))
            self.slot.append(row)


def _replay(
    ct: CompiledTrace,
    weights: Sequence[int],
    max_states: int,
    max_depth: int,
    record: bool = False,
    touch: set[int] | None = None,
) -> tuple[float, int, list[int] | None]:
    """Simulate a normal-mode run over the recorded tree.

    Mirrors the engine's per-state order exactly: perfect stop, state-count
    stop, duplicate rejection, recorded validity, depth gate, then children
    by descending weight with catalog order breaking ties.
    """
    sat = ct.sat
    perfect = ct.perfect
    valid = ct.valid
    canon = ct.canon
    depth = ct.depth
    child = ct.child
    slot = ct.slot
    n_actions = ct.n_actions

    visits = [0] if record else None
    count = 1
    best = sat[0]

    def ranked(node_id: int) -> list[tuple[int, int]]:
        slots = slot[node_id]
        if touch is not None:
            touch.update(slots)
        pairs = []
        for a in range(n_actions):
            w = weights[slots[a]]
            if w >= 1:
                pairs.append((-w, a))
        pairs.sort()
        return pairs

    if perfect[0] or count >= max_states or not valid[0] or depth[0] >= max_depth:
        return best, count, visits

    seen = {0}
    stack: list[list] = [[0, ranked(0), 0]]
    while stack:
        frame = stack[-1]
        pairs = frame[1]
        cursor = frame[2]
        if cursor >= len(pairs):
            stack.pop()
            continue
        frame[2] = cursor + 1
        node_id = child[frame[0]][pairs[cursor][1]]
        if node_id < 0:
            raise RevisionError("trace lacks a recorded child for a proposed action")
        count += 1
        if record:
            visits.append(node_id)
        s = sat[node_id]
        if s > best:
            best = s
        if perfect[node_id]:
            break
        if count >= max_states:
            break
        canonical = canon[node_id]
        if canonical in seen:
            continue
        seen.add(canonical)
        if not valid[node_id]:
            continue
        if depth[node_id] >= max_depth:
            continue
        stack.append([canonical, ranked(canonical), 0])
    return best, count, visits


def replay(
    trace: ExplorationTrace,
    solution: Solution,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    limits: SearchLimits | None = None,
    allow_incomplete: bool = False,
    record_visits: bool = False,
) -> ReplayStats:
    """Replay one trace under a weight assignment.

    Equivalent to running the engine in normal mode with the solution's
    knowledge on the same problem and limits, without touching the domain.
    """
    if not trace.complete and not allow_incomplete:
        raise RevisionError(
            f"trace {trace.problem_id!r} is incomplete; pass allow_incomplete to replay it"
        )
    lim = limits if limits is not None else trace.limits
    ct = CompiledTrace(trace, solution.space, threshold)
    best, count, visits = _replay(ct, solution.weights, lim.max_states, lim.max_depth, record_visits)
    keys = tuple(ct.keys[i] for i in visits) if visits is not None else None
    return ReplayStats(best, count, keys)


@dataclass(frozen=True)
class SearchLogEntry:
    iteration: int
    action_id: str
    area_index: int
    delta: int
    objective: float
    best_objective: float
    tenure: float
    repeated: bool
    restarted: bool


def reactive_local_search(
    initial: Solution,
    traces: Sequence[ExplorationTrace],
    schedule: SearchSchedule,
    *,
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[Solution, PerfReport, list[SearchLogEntry]]:
    """Best-improvement tabu search over +-1 weight moves with a reactive
    tenure: it grows when a fingerprinted solution recurs within the
    repetition horizon and decays after a window of no repeats.  Stagnation
    triggers a seeded restart from a perturbed best.  The returned solution
    is the best ever visited, so its objective never drops below the
    initial one.
    """
    space = initial.space
    if not traces:
        raise RevisionError("reactive_local_search needs at least one trace")
    for t in traces:
        if not t.complete:
            raise RevisionError(f"trace {t.problem_id!r} is incomplete")
    compiled = [CompiledTrace(t, space, threshold) for t in traces]
    ids = [t.problem_id for t in traces]
    n_traces = len(compiled)
    n_coords = space.size()
    weight_max = space.weight_max

    def objective(sum_sat: float, sum_states: int) -> float:
        mean_sat = sum_sat / n_traces
        mean_states = sum_states / n_traces
        return 0.25 * (3.0 * mean_sat / 10.0 + 1.0 / math.sqrt(mean_states))

    def full_eval(weights: Sequence[int]) -> tuple[list[tuple[float, int]], list[set[int]]]:
        stats = []
        touches = []
        for ct in compiled:
            touch: set[int] = set()
            best, count, _ = _replay(
                ct, weights, ct.limits.max_states, ct.limits.max_depth, touch=touch
            )
            stats.append((best, count))
            touches.append(touch)
        return stats, touches

    def sums_of(stats: list[tuple[float, int]]) -> tuple[float, int]:
        return sum(s for s, _ in stats), sum(c for _, c in stats)

    cur_w = list(initial.weights)
    per_stats, touches = full_eval(cur_w)
    sum_sat, sum_states = sums_of(per_stats)
    cur_obj = objective(sum_sat, sum_states)
    best_w = tuple(cur_w)
    best_obj = cur_obj
    best_stats = list(per_stats)
    memo: dict[tuple[int, ...], float] = {best_w: cur_obj}
    log: list[SearchLogEntry] = []

    report = perf([ReplayStats(s, c) for s, c in best_stats], ids)
    if schedule.max_iterations == 0 or n_coords == 0:
        return Solution(space, best_w), report, log

    tabu: dict[int, int] = {}
    tenure = float(schedule.tenure)
    tenure_cap = float(max(8, n_coords))
    seen: dict[tuple[int, ...], int] = {best_w: 0}
    streak = 0
    stagnant = 0
    rng = random.Random(schedule.seed)

    for it in range(1, schedule.max_iterations + 1):
        chosen = None
        chosen_obj = -math.inf
        fallback = None
        fallback_obj = -math.inf
        for flat in range(n_coords):
            w0 = cur_w[flat]
            for delta in (-1, 1):
                w1 = w0 + delta
                if w1 < 0 or w1 > weight_max:
                    continue
                cur_w[flat] = w1
                fp = tuple(cur_w)
                cur_w[flat] = w0
                obj = memo.get(fp)
                if obj is None:
                    ssat, sstates = sum_sat, sum_states
                    for ti in range(n_traces):
                        if flat not in touches[ti]:
                            continue
                        ct = compiled[ti]
                        b, c, _ = _replay(ct, fp, ct.limits.max_states, ct.limits.max_depth)
                        old = per_stats[ti]
                        ssat += b - old[0]
                        sstates += c - old[1]
                    obj = objective(ssat, sstates)
                    memo[fp] = obj
                if tabu.get(flat, 0) >= it and not obj > best_obj:
                    if obj > fallback_obj:
                        fallback, fallback_obj = (flat, delta), obj
                    continue
                if obj > chosen_obj:
                    chosen, chosen_obj = (flat, delta), obj
        if chosen is None:
            chosen = fallback
            if chosen is None:
                break  # no legal move at all
        flat, delta = chosen
        cur_w[flat] += delta
        for ti in range(n_traces):
            if flat not in touches[ti]:
                continue
            ct = compiled[ti]
            touch: set[int] = set()
            b, c, _ = _replay(ct, cur_w, ct.limits.max_states, ct.limits.max_depth, touch=touch)
            per_stats[ti] = (b, c)
            touches[ti] = touch
        sum_sat, sum_states = sums_of(per_stats)
        cur_obj = objective(sum_sat, sum_states)
        fp_cur = tuple(cur_w)
        memo[fp_cur] = cur_obj

        tabu[flat] = it + max(1, round(tenure))
        last = seen.get(fp_cur)
        repeated = last is not None and (it - last) <= schedule.repetition_horizon
        if repeated:
            tenure = min(tenure * schedule.tenure_increase, tenure_cap)
            streak = 0
        else:
            streak += 1
            if streak >= schedule.non_repeat_window:
                tenure = max(1.0, tenure * schedule.tenure_decrease)
                streak = 0
        seen[fp_cur] = it
        if len(seen) > 4 * schedule.repetition_horizon:
            cutoff = it - schedule.repetition_horizon
            seen = {fp: t for fp, t in seen.items() if t >= cutoff}
        if len(memo) > 400_000:
            # keep the most recent half; insertion order makes this deterministic
            memo = dict(list(memo.items())[200_000:])

        if cur_obj > best_obj:
            best_w = fp_cur
            best_obj = cur_obj
            best_stats = list(per_stats)
            stagnant = 0
        else:
            stagnant += 1

        action_id, area_index = space.describe(flat)
        restarted = False
        if stagnant >= schedule.stagnation_limit and it < schedule.max_iterations:
            restarted = True
            cur_w = list(best_w)
            for _ in range(schedule.restart_strength):
                coord = rng.randrange(n_coords)
                deltas = [d for d in (-1, 1) if 0 <= cur_w[coord] + d <= weight_max]
                cur_w[coord] += rng.choice(deltas)
            per_stats, touches = full_eval(cur_w)
            sum_sat, sum_states = sums_of(per_stats)
            cur_obj = objective(sum_sat, sum_states)
            memo[tuple(cur_w)] = cur_obj
            tabu.clear()
            tenure = float(schedule.tenure)
            streak = 0
            stagnant = 0
        log.append(
            SearchLogEntry(
                it, action_id, area_index, delta, cur_obj, best_obj, tenure, repeated, restarted
            )
        )

    best_report = perf([ReplayStats(s, c) for s, c in best_stats], ids)
    return Solution(space, best_w), best_report, log


@dataclass
class RevisionResult:
    """Revised knowledge plus every intermediate artifact, for audit."""

    initial_kb: KnowledgeBase
    revised_kb: KnowledgeBase
    initial_report: PerfReport
    revised_report: PerfReport
    example_sets: dict[str, ExampleSet]
    cuts: dict[str, dict[str, list[float]]]
    space: SolutionSpace
    initial_solution: Solution
    best_solution: Solution
    log: list[SearchLogEntry] = field(default_factory=list)


def revise(
    domain: ProblemDomain,
    initial_kb: KnowledgeBase,
    traces: Sequence[ExplorationTrace],
    schedule: SearchSchedule = SearchSchedule(),
    *,
    allow_incomplete: bool = False,
) -> RevisionResult:
    """Full analysis stage: example sets, discretisation, areas, weight
    search, then conversion back to aggregated rules."""
    if not traces:
        raise RevisionError("revise needs at least one trace")
    for spec in domain.actions:
        rb = initial_kb.rule_bases.get(spec.action_id)
        if rb is None:
            raise RevisionError(f"initial knowledge base lacks action {spec.action_id!r}")
        bad = validate_rule_base(rb, initial_kb.weight_max)
        if bad:
            raise RevisionError(
                f"initial rule base for {spec.action_id!r} is invalid: "
                + "; ".join(v.message for v in bad)
            )
    usable = []
    for t in traces:
        if not t.complete:
            if not allow_incomplete:
                raise RevisionError(
                    f"trace {t.problem_id!r} is incomplete; pass allow_incomplete to override"
                )
            continue
        usable.append(t)
    if not usable:
        raise RevisionError("no complete traces to revise from")

    example_sets = build_example_sets(usable, domain)
    cuts: dict[str, dict[str, list[float]]] = {}
    for action_id, es in example_sets.items():
        labels = [ex.label for ex in es.examples]
        cuts[action_id] = {
            m: mdl_discretize([ex.values[i] for ex in es.examples], labels)
            for i, m in enumerate(es.measure_names)
        }
    space = build_solution_space(domain, initial_kb, cuts)
    start = initial_solution(space)
    threshold = domain.perfect_satisfaction - PERFECT_EPSILON
    initial_stats = [replay(t, start, threshold=threshold) for t in usable]
    initial_report = perf(initial_stats, [t.problem_id for t in usable])
    best, revised_report, log = reactive_local_search(start, usable, schedule, threshold=threshold)
    revised_kb = solution_to_kb(best)
    return RevisionResult(
        initial_kb=initial_kb,
        revised_kb=revised_kb,
        initial_report=initial_report,
        revised_report=revised_report,
        example_sets=example_sets,
        cuts=cuts,
        space=space,
        initial_solution=start,
        best_solution=best,
        log=log,
    )
