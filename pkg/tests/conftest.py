"""Shared helpers: seeded generators for random partitioned rule bases and
small fixed domains used across the test modules."""

from __future__ import annotations

import itertools
import random

from rulerev.engine import ActionSpec, ProblemDomain
from rulerev.knowledge import Condition, KnowledgeBase, Rule, RuleBase

NEG_INF = float("-inf")
POS_INF = float("inf")


def random_partition_rule_base(
    rng: random.Random,
    action_id: str = "A",
    measure_set_id: str = "ms",
    measure_names: tuple[str, ...] = ("M1", "M2"),
    value_ranges: tuple[tuple[float, float], ...] | None = None,
    weight_max: int = 5,
    max_cuts: int = 2,
) -> RuleBase:
    """Rule base whose rules partition the measure space by construction."""
    if value_ranges is None:
        value_ranges = tuple((-10.0, 10.0) for _ in measure_names)
    cells_per_measure = []
    for lo, hi in value_ranges:
        cuts = sorted(rng.uniform(lo, hi) for _ in range(rng.randint(0, max_cuts)))
        cells = []
        prev, prev_closed = NEG_INF, False
        for cut in cuts:
            belongs_left = rng.random() < 0.5
            cells.append((prev, prev_closed, cut, belongs_left))
            prev, prev_closed = cut, not belongs_left
        cells.append((prev, prev_closed, POS_INF, False))
        cells_per_measure.append(cells)
    rules = []
    for combo in itertools.product(*cells_per_measure):
        conds = []
        for name, (lo, lc, hi, uc) in zip(measure_names, combo):
            if lo == NEG_INF and hi == POS_INF:
                continue
            conds.append(Condition(name, lo, hi, lc, uc))
        rules.append(Rule(tuple(conds), rng.randint(0, weight_max)))
    return RuleBase(action_id, measure_set_id, measure_names, tuple(rules))


def random_maze_kb(rng: random.Random, weight_max: int = 5) -> KnowledgeBase:
    """Random partitioned knowledge base over the maze nav measures."""
    from rulerev.domains.maze import NAV_MEASURE_SET, NAV_MEASURES, MazeDomain

    ranges = ((0.0, 12.0), (-0.5, 1.5), (-0.5, 2.5))
    bases = {
        spec.action_id: random_partition_rule_base(
            rng,
            spec.action_id,
            NAV_MEASURE_SET,
            NAV_MEASURES,
            ranges,
            weight_max=weight_max,
        )
        for spec in MazeDomain().actions
    }
    return KnowledgeBase(bases, weight_max)


class FixedTreeDomain(ProblemDomain):
    """Hand-built tree with explicit satisfactions, for engine-order tests.

    ``tree`` maps a state key to its children per action; missing entries
    loop back to the same state (rejected as duplicates).
    """

    domain_id = "fixed-tree"

    def __init__(
        self,
        satisfactions: dict[str, float],
        tree: dict[str, dict[str, str]],
        n_actions: int = 2,
        improvement_validity: bool = False,
    ):
        self._sats = satisfactions
        self._tree = tree
        self._actions = tuple(ActionSpec(f"A{i}", "m") for i in range(n_actions))
        self._improvement = improvement_validity

    @property
    def actions(self):
        return self._actions

    @property
    def measure_sets(self):
        return {"m": ("sat",)}

    def start(self, problem):
        return problem

    def satisfaction(self, state):
        return self._sats[state]

    def measures(self, state, measure_set_id):
        return (self._sats[state],)

    def apply(self, state, action_id):
        return self._tree.get(state, {}).get(action_id, state)

    def state_key(self, state):
        return state

    def is_valid(self, state, parent_state, visited):
        if not self._improvement or parent_state is None:
            return True
        return self._sats[state] > self._sats[parent_state]
