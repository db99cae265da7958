"""Trace analysis: best paths, labelled example sets, entropy/MDL
discretisation, and partitioning of measure spaces constrained by the
initial rules.

The partition of each action's measure space refines the initial rule
regions with the learned cut points, so every area lies inside exactly
one initial rule region (or inside the uncovered default region) and the
initial knowledge base embeds exactly into a weight assignment over areas.
"""

from __future__ import annotations

import bisect
import csv
import io
import itertools
import math
from collections import Counter, deque
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from .engine import ExplorationTrace, ProblemDomain
from .knowledge import Condition, RuleBase, validate_rule_base

SUCCESS = "success"
FAILURE = "failure"

_NEG_INF = float("-inf")
_POS_INF = float("inf")


class LearningError(Exception):
    """Unusable traces or an invalid initial rule base."""


@dataclass(frozen=True)
class Example:
    values: tuple[float, ...]
    label: str
    problem_id: str
    node_id: int
    action_id: str


@dataclass(frozen=True)
class ExampleSet:
    action_id: str
    measure_set_id: str
    measure_names: tuple[str, ...]
    examples: tuple[Example, ...]


@dataclass(frozen=True)
class BestPath:
    """Parent-to-child chain from a (sub)tree root to that subtree's best state."""

    node_ids: tuple[int, ...]


@dataclass(frozen=True)
class Area:
    """One cell of an action's partitioned measure space.

    ``parent_rule`` is the index of the initial rule whose region contains
    the area, or None for the uncovered default-weight-0 region.
    """

    action_id: str
    conditions: tuple[Condition, ...]
    parent_rule: int | None


def extract_best_paths(trace: ExplorationTrace) -> list[BestPath]:
    """All best paths of a trace, longest-scope first.

    The best path of the whole tree (root to the best state, ties broken
    by earliest evaluation) is taken first; each subtree hanging off an
    already-extracted path is then processed the same way.  Candidates
    shorter than two states are dropped, and duplicate stubs neither join
    paths nor count as best states.
    """
    nodes = trace.nodes
    children = trace.children()
    # best non-stub node of each subtree, bottom-up; earliest id wins ties
    best_in: list[int] = [-1] * len(nodes)
    for node in reversed(nodes):
        best = node.node_id if node.duplicate_of is None else -1
        for child_id in children[node.node_id]:
            cand = best_in[child_id]
            if cand < 0:
                continue
            if best < 0 or nodes[cand].satisfaction > nodes[best].satisfaction or (
                nodes[cand].satisfaction == nodes[best].satisfaction and cand < best
            ):
                best = cand
        best_in[node.node_id] = best

    paths: list[BestPath] = []
    queue = deque([0])
    while queue:
        root = queue.popleft()
        target = best_in[root]
        members = []
        node_id = target
        while node_id != root:
            members.append(node_id)
            node_id = nodes[node_id].parent_id
        members.append(root)
        members.reverse()
        if len(members) >= 2:
            paths.append(BestPath(tuple(members)))
        on_path = set(members)
        for node_id in members:
            for child_id in children[node_id]:
                if child_id not in on_path and nodes[child_id].duplicate_of is None:
                    queue.append(child_id)
    return paths


def build_example_sets(
    traces: Sequence[ExplorationTrace],
    domain: ProblemDomain,
    *,
    allow_incomplete: bool = False,
) -> dict[str, ExampleSet]:
    """Per-action labelled examples from the best paths of the traces.

    For every non-final state of a best path and every action applied
    there, the action is a success when its recorded child is the next
    state on the path, otherwise a failure (including children that were
    duplicate stubs).
    """
    catalog = tuple(domain.actions)
    buckets: dict[str, list[Example]] = {spec.action_id: [] for spec in catalog}
    for trace in traces:
        if not trace.complete and not allow_incomplete:
            raise LearningError(
                f"trace {trace.problem_id!r} is incomplete; pass allow_incomplete to use it"
            )
        child_of = trace.children_by_action()
        for path in extract_best_paths(trace):
            ids = path.node_ids
            for pos in range(len(ids) - 1):
                node = trace.nodes[ids[pos]]
                nxt = ids[pos + 1]
                for spec in catalog:
                    child_id = child_of[node.node_id].get(spec.action_id)
                    if child_id is None:
                        raise LearningError(
                            f"trace {trace.problem_id!r}: node {node.node_id} on a best "
                            f"path lacks a child for action {spec.action_id!r}"
                        )
                    buckets[spec.action_id].append(
                        Example(
                            values=node.measures[spec.measure_set],
                            label=SUCCESS if child_id == nxt else FAILURE,
                            problem_id=trace.problem_id,
                            node_id=node.node_id,
                            action_id=spec.action_id,
                        )
                    )
    return {
        spec.action_id: ExampleSet(
            spec.action_id,
            spec.measure_set,
            tuple(domain.measure_sets[spec.measure_set]),
            tuple(buckets[spec.action_id]),
        )
        for spec in catalog
    }


# --- supervised discretisation -------------------------------------------

_TIE_EPS = 1e-12


def _entropy(counts: Counter) -> float:
    n = sum(counts.values())
    if n == 0:
        return 0.0
    ent = 0.0
    for c in counts.values():
        if c:
            p = c / n
            ent -= p * math.log2(p)
    return ent


def _best_cut(items: list[tuple[float, Any]]) -> tuple[float, float, int, Counter, Counter] | None:
    """Lowest weighted-entropy boundary cut; ties go to the smallest cut value.

    Candidates are midpoints between adjacent distinct values whose two
    value groups are not all of one same class.
    """
    n = len(items)
    groups: list[tuple[float, Counter]] = []
    for value, label in items:
        if groups and groups[-1][0] == value:
            groups[-1][1][label] += 1
        else:
            groups.append((value, Counter({label: 1})))
    if len(groups) < 2:
        return None
    total = Counter(label for _, label in items)
    best = None
    left: Counter = Counter()
    left_n = 0
    for gi in range(len(groups) - 1):
        value, cnt = groups[gi]
        left.update(cnt)
        left_n += sum(cnt.values())
        nxt_cnt = groups[gi + 1][1]
        if len(cnt) == 1 and len(nxt_cnt) == 1 and next(iter(cnt)) == next(iter(nxt_cnt)):
            continue  # not a class boundary
        right = total - left
        energy = (left_n * _entropy(left) + (n - left_n) * _entropy(right)) / n
        if best is None or energy < best[0] - _TIE_EPS:
            cut = (value + groups[gi + 1][0]) / 2.0
            best = (energy, cut, left_n, Counter(left), right)
    return best


def _split_mdl(items: list[tuple[float, Any]], cuts: list[float]) -> None:
    n = len(items)
    if n < 2:
        return
    best = _best_cut(items)
    if best is None:
        return
    energy, cut, left_n, left, right = best
    total = Counter(label for _, label in items)
    ent_all = _entropy(total)
    gain = ent_all - energy
    k, k1, k2 = len(total), len(left), len(right)
    delta = math.log2(3**k - 2) - (k * ent_all - k1 * _entropy(left) - k2 * _entropy(right))
    if gain <= (math.log2(n - 1) + delta) / n:
        return
    cuts.append(cut)
    _split_mdl(items[:left_n], cuts)
    _split_mdl(items[left_n:], cuts)


def mdl_discretize(values: Sequence[float], labels: Sequence[Any]) -> list[float]:
    """Recursive entropy-minimising binary splits, kept only when the
    information gain beats the MDL coding cost; returns sorted cut points.
    """
    if len(values) != len(labels):
        raise LearningError("values and labels must have equal length")
    items = sorted(zip(values, labels), key=lambda pair: pair[0])
    cuts: list[float] = []
    _split_mdl(items, cuts)
    return sorted(cuts)


# --- measure-space partitioning -------------------------------------------

# A split (v, False) lies just below v (v belongs to the right cell);
# (v, True) lies just above v (v belongs to the left cell).
_Split = tuple[float, bool]


def _measure_splits(rb: RuleBase, cuts: Mapping[str, Sequence[float]], measure: str) -> list[_Split]:
    splits: set[_Split] = {(float(c), False) for c in cuts.get(measure, ())}
    for rule in rb.rules:
        cond = rule.interval_for(measure)
        if not math.isinf(cond.lower):
            splits.add((cond.lower, not cond.lower_closed))
        if not math.isinf(cond.upper):
            splits.add((cond.upper, cond.upper_closed))
    return sorted(splits)


def _cells(splits: list[_Split]) -> list[tuple[float, bool, float, bool]]:
    cells = []
    lower, lower_closed = _NEG_INF, False
    for value, after in splits:
        cells.append((lower, lower_closed, value, after))
        lower, lower_closed = value, not after
    cells.append((lower, lower_closed, _POS_INF, False))
    return cells


def _cell_point(cell: tuple[float, bool, float, bool]) -> float:
    lo, lc, up, uc = cell
    if lo == up:
        return lo
    if math.isinf(lo) and math.isinf(up):
        return 0.0
    if math.isinf(lo):
        return up if uc else up - 1.0
    if math.isinf(up):
        return lo if lc else lo + 1.0
    return (lo + up) / 2.0


class _Box:
    """Axis-aligned block of grid cells, as inclusive cell-index ranges."""

    __slots__ = ("ranges", "parent")

    def __init__(self, ranges: list[tuple[int, int]], parent: int | None):
        self.ranges = ranges
        self.parent = parent


class AreaIndex:
    """Partition of one action's measure space into areas.

    Grid boundaries come from the learned cut points plus every bound of
    the initial rules; cells inside the same initial rule region (or the
    default region) are merged back together unless a learned cut
    separates them.  ``locate`` maps any measure vector to its area.
    """

    def __init__(self, rule_base: RuleBase, cuts: Mapping[str, Sequence[float]]):
        bad = validate_rule_base(rule_base)
        if bad:
            raise LearningError(
                f"initial rule base for {rule_base.action_id!r} is invalid: "
                + "; ".join(v.message for v in bad)
            )
        self.rule_base = rule_base
        self.action_id = rule_base.action_id
        self.measure_set_id = rule_base.measure_set_id
        self.measure_names = rule_base.measure_names
        self._splits = [_measure_splits(rule_base, cuts, m) for m in self.measure_names]
        self._cells = [_cells(s) for s in self._splits]
        cut_like = [
            {i for i, s in enumerate(splits) if s[0] in {float(c) for c in cuts.get(m, ())} and not s[1]}
            for m, splits in zip(self.measure_names, self._splits)
        ]

        boxes: list[_Box] = []
        for idx in itertools.product(*(range(len(c)) for c in self._cells)):
            point = [
                _cell_point(self._cells[d][i]) for d, i in enumerate(idx)
            ]
            parent = None
            for ri, rule in enumerate(rule_base.rules):
                if all(rule.interval_for(m).contains(point[d]) for d, m in enumerate(self.measure_names)):
                    parent = ri
                    break
            boxes.append(_Box([(i, i) for i in idx], parent))

        # merge grid-adjacent boxes with the same parent rule across
        # boundaries that are not learned cuts
        merged = True
        while merged:
            merged = False
            for dim in range(len(self.measure_names)):
                pair = self._find_merge(boxes, dim, cut_like[dim])
                if pair is not None:
                    i, j = pair
                    lo = boxes[i].ranges[dim][0]
                    hi = boxes[j].ranges[dim][1]
                    boxes[i].ranges[dim] = (lo, hi)
                    del boxes[j]
                    merged = True
                    break

        self.areas: tuple[Area, ...] = tuple(self._box_to_area(b) for b in boxes)
        self._cell_to_area: dict[tuple[int, ...], int] = {}
        for ai, box in enumerate(boxes):
            for idx in itertools.product(*(range(lo, hi + 1) for lo, hi in box.ranges)):
                self._cell_to_area[idx] = ai

    @staticmethod
    def _find_merge(boxes: list[_Box], dim: int, blocked: set[int]) -> tuple[int, int] | None:
        for i in range(len(boxes)):
            a = boxes[i]
            for j in range(i + 1, len(boxes)):
                b = boxes[j]
                if a.parent != b.parent:
                    continue
                if any(d != dim and a.ranges[d] != b.ranges[d] for d in range(len(a.ranges))):
                    continue
                first, second = (a, b) if a.ranges[dim][1] < b.ranges[dim][0] else (b, a)
                boundary = first.ranges[dim][1]
                if boundary + 1 != second.ranges[dim][0] or boundary in blocked:
                    continue
                if first is b:
                    # keep the earlier box as the merge target
                    boxes[i], boxes[j] = boxes[j], boxes[i]
                return i, j
        return None

    def _box_to_area(self, box: _Box) -> Area:
        conds = []
        for d, m in enumerate(self.measure_names):
            lo_cell = self._cells[d][box.ranges[d][0]]
            hi_cell = self._cells[d][box.ranges[d][1]]
            lower, lower_closed = lo_cell[0], lo_cell[1]
            upper, upper_closed = hi_cell[2], hi_cell[3]
            if math.isinf(lower) and math.isinf(upper):
                continue
            conds.append(Condition(m, lower, upper, lower_closed, upper_closed))
        return Area(self.action_id, tuple(conds), box.parent)

    def locate(self, values: Sequence[float]) -> int:
        """Index of the unique area containing the measure vector."""
        idx = tuple(
            bisect.bisect_left(self._splits[d], (float(v), 0.5))
            for d, v in enumerate(values)
        )
        return self._cell_to_area[idx]


def build_areas(rule_base: RuleBase, cuts: Mapping[str, Sequence[float]]) -> list[Area]:
    """Partition a rule base's measure space; see AreaIndex."""
    return list(AreaIndex(rule_base, cuts).areas)


def example_set_csv(example_set: ExampleSet) -> str:
    """CSV export: one row per example, measure columns then label and source."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*example_set.measure_names, "label", "problem_id", "node_id"])
    for ex in example_set.examples:
        writer.writerow([*(repr(v) for v in ex.values), ex.label, ex.problem_id, ex.node_id])
    return buf.getvalue()
