"""Replay semantics, the performance function, and the reactive search."""

import itertools
import math
import random

import pytest

from conftest import FixedTreeDomain, random_maze_kb
from rulerev.domains.maze import MazeDomain, generate_maze_pool, maze_expert_kb, maze_noaction_kb
from rulerev.domains.synthetic import SyntheticDomain, SyntheticProblem
from rulerev.engine import MINIMAL_PRUNING, NORMAL, SearchLimits, run
from rulerev.knowledge import KnowledgeBase, RuleBase
from rulerev.learning import AreaIndex
from rulerev.revision import (
    PerfReport,
    ReplayStats,
    RevisionError,
    SearchSchedule,
    Solution,
    SolutionSpace,
    build_solution_space,
    initial_solution,
    neighborhood,
    perf,
    reactive_local_search,
    replay,
    revise,
    solution_to_kb,
)

LIMITS = SearchLimits(100_000, 256)


def minimal_trace(domain, problem, problem_id="p"):
    return run(
        domain, domain.start(problem), None, LIMITS, MINIMAL_PRUNING, problem_id=problem_id
    ).trace


class TestPerf:
    def test_perfect_results_score_one(self):
        report = perf([ReplayStats(10.0, 1)])
        assert report.perf == 1.0

    def test_direct_formula_points(self):
        assert abs(perf([ReplayStats(5.0, 4)]).perf - 0.5) < 1e-12
        assert abs(perf([ReplayStats(1.0, 100)]).perf - 0.1) < 1e-12

    def test_means_are_arithmetic(self):
        report = perf([ReplayStats(4.0, 1), ReplayStats(8.0, 7)], ["a", "b"])
        assert report.mean_satisfaction == 6.0
        assert report.mean_states == 4.0
        assert report.per_problem == (("a", 4.0, 1), ("b", 8.0, 7))

    def test_empty_rejected(self):
        with pytest.raises(RevisionError):
            perf([])

    def test_bounds_on_random_inputs(self):
        rng = random.Random(1)
        for _ in range(200):
            stats = [
                ReplayStats(rng.uniform(1, 10), rng.randint(1, 10_000))
                for _ in range(rng.randint(1, 7))
            ]
            value = perf(stats).perf
            assert 0.075 < value <= 1.0


class TestReplay:
    def test_all_zero_solution_is_root_only(self):
        dom = FixedTreeDomain({"r": 4.0, "a": 9.0}, {"r": {"A0": "a"}}, n_actions=1)
        trace = minimal_trace(dom, "r")
        kb = KnowledgeBase({"A0": RuleBase("A0", "m", ("sat",), ())}, 5)
        sol = initial_solution(build_solution_space(dom, kb, {}))
        stats = replay(trace, sol)
        assert (stats.best_satisfaction, stats.states_evaluated) == (4.0, 1)

    def test_perfect_child_stops_at_two_states(self):
        dom = FixedTreeDomain({"r": 4.0, "a": 10.0}, {"r": {"A0": "a"}}, n_actions=1)
        trace = minimal_trace(dom, "r")
        space = build_solution_space(dom, maze_kb_like(dom, 5), {})
        stats = replay(trace, Solution(space, (5,)))
        assert (stats.best_satisfaction, stats.states_evaluated) == (10.0, 2)

    def test_incomplete_trace_refused_unless_overridden(self):
        dom = FixedTreeDomain({"r": 1.0, "a": 2.0}, {"r": {"A0": "a"}, "a": {"A0": "r"}}, n_actions=1)
        trace = run(dom, "r", None, SearchLimits(2, 16), MINIMAL_PRUNING).trace
        assert not trace.complete
        space = build_solution_space(dom, maze_kb_like(dom, 1), {})
        sol = Solution(space, (1,))
        with pytest.raises(RevisionError, match="incomplete"):
            replay(trace, sol)
        stats = replay(trace, sol, allow_incomplete=True)
        assert stats.states_evaluated == 2

    def test_replay_equivalence_spot_check(self):
        dom = MazeDomain()
        pool = generate_maze_pool(seed=3, count=10, size=5)
        rng = random.Random(17)
        kbs = [maze_expert_kb(), maze_noaction_kb()] + [random_maze_kb(rng) for _ in range(3)]
        for pid, problem in pool.problems:
            trace = minimal_trace(dom, problem, pid)
            for kb in kbs:
                sol = initial_solution(build_solution_space(dom, kb, {}))
                live = run(dom, dom.start(problem), kb, LIMITS, NORMAL)
                sim = replay(trace, sol, record_visits=True)
                assert sim.best_satisfaction == live.best_satisfaction
                assert sim.states_evaluated == live.states_evaluated
                assert sim.visit_keys == live.visit_sequence


def maze_kb_like(domain, weight):
    """Constant-weight kb over whatever measure sets the domain exposes."""
    from rulerev.knowledge import Rule

    bases = {}
    for spec in domain.actions:
        names = tuple(domain.measure_sets[spec.measure_set])
        rules = (Rule((), weight),) if weight > 0 else ()
        bases[spec.action_id] = RuleBase(spec.action_id, spec.measure_set, names, rules)
    return KnowledgeBase(bases, 5)


class TestNeighborhood:
    def space_of(self, n_areas, weight_max=5):
        dom = SyntheticDomain(1)
        kb = maze_kb_like(dom, 0)
        cuts = {"CHILD_0": {"sat": [float(i) for i in range(1, n_areas)]}}
        space = build_solution_space(dom, kb, cuts)
        assert space.size() == n_areas
        return space

    def test_lower_boundary_single_move(self):
        space = self.space_of(1)
        assert neighborhood(Solution(space, (0,))) == [(0, 1)]

    def test_upper_boundary(self):
        space = self.space_of(2)
        moves = neighborhood(Solution(space, (3, 5)))
        assert moves == [(0, -1), (0, 1), (1, -1)]

    def test_bound_on_move_count(self):
        rng = random.Random(4)
        space = self.space_of(6)
        for _ in range(20):
            weights = tuple(rng.randint(0, 5) for _ in range(6))
            assert len(neighborhood(Solution(space, weights))) <= 12


def synthetic_traces(count=6, branching=2, depth=3, seed=100):
    dom = SyntheticDomain(branching)
    traces = []
    for i in range(count):
        problem = SyntheticProblem(seed + i, branching, depth)
        traces.append(minimal_trace(dom, problem, f"s{i}"))
    return dom, traces


def exhaustive_best(space, traces, threshold=10.0 - 1e-9):
    best = None
    for combo in itertools.product(range(space.weight_max + 1), repeat=space.size()):
        sol = Solution(space, combo)
        stats = [replay(t, sol, threshold=threshold) for t in traces]
        value = perf(stats).perf
        if best is None or value > best[0]:
            best = (value, combo)
    return best


class TestReactiveSearch:
    def test_zero_iterations_returns_initial(self):
        dom, traces = synthetic_traces(count=2)
        kb = maze_kb_like(dom, 0)
        sol = initial_solution(build_solution_space(dom, kb, {}))
        schedule = SearchSchedule(max_iterations=0)
        best, report, log = reactive_local_search(sol, traces, schedule)
        assert best.weights == sol.weights
        assert log == []
        assert report.perf == perf([replay(t, sol) for t in traces]).perf

    def test_single_area_matches_exhaustive_six_solutions(self):
        dom, traces = synthetic_traces(count=4, branching=1, depth=4)
        kb = maze_kb_like(dom, 0)
        space = build_solution_space(dom, kb, {})
        assert space.size() == 1
        expected, _ = exhaustive_best(space, traces)
        best, report, _ = reactive_local_search(
            initial_solution(space), traces, SearchSchedule(max_iterations=20)
        )
        assert report.perf == expected

    def test_three_areas_match_exhaustive_216(self):
        dom, traces = synthetic_traces(count=5, branching=2, depth=3)
        kb = maze_kb_like(dom, 0)
        cuts = {"CHILD_0": {"sat": [5.0]}}
        space = build_solution_space(dom, kb, cuts)
        assert space.size() == 3
        expected, expected_weights = exhaustive_best(space, traces)
        best, report, _ = reactive_local_search(
            initial_solution(space), traces, SearchSchedule()
        )
        assert report.perf == expected

    def test_objective_never_below_initial(self):
        dom, traces = synthetic_traces(count=3)
        kb = maze_kb_like(dom, 3)
        space = build_solution_space(dom, kb, {})
        start = initial_solution(space)
        start_perf = perf([replay(t, start) for t in traces]).perf
        _, report, _ = reactive_local_search(start, traces, SearchSchedule(max_iterations=40))
        assert report.perf >= start_perf

    def test_deterministic_given_seeds(self):
        dom, traces = synthetic_traces(count=3)
        kb = maze_kb_like(dom, 0)
        space = build_solution_space(dom, kb, {"CHILD_0": {"sat": [4.0, 6.0]}})
        schedule = SearchSchedule(max_iterations=120, stagnation_limit=25, seed=5)
        runs = [
            reactive_local_search(initial_solution(space), traces, schedule) for _ in range(2)
        ]
        assert runs[0][0].weights == runs[1][0].weights
        assert runs[0][1] == runs[1][1]
        assert runs[0][2] == runs[1][2]


class TestRevise:
    def test_monotone_and_artifacts_on_small_benchmark(self):
        dom = MazeDomain()
        pool = generate_maze_pool(seed=6, count=8, size=5)
        traces = [minimal_trace(dom, p, pid) for pid, p in pool.problems]
        schedule = SearchSchedule(max_iterations=150, stagnation_limit=40)
        for kb in (maze_noaction_kb(), maze_expert_kb()):
            result = revise(dom, kb, traces, schedule)
            assert result.revised_report.perf >= result.initial_report.perf
            assert set(result.example_sets) == {a.action_id for a in dom.actions}
            assert set(result.cuts) == set(result.example_sets)
            assert result.revised_kb.validate() == {}
            # converted rules agree with the best solution everywhere sampled
            rng = random.Random(0)
            for action_id, index in result.space.indexes.items():
                for _ in range(50):
                    point = (rng.uniform(0, 12), rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 2.5))
                    assert result.revised_kb.propose(action_id, point) == \
                        result.best_solution.weight_for(action_id, point)

    def test_initial_embedding_matches_kb_everywhere(self):
        dom = MazeDomain()
        rng = random.Random(23)
        kb = maze_expert_kb()
        cuts = {"MOVE_FORWARD": {"dist": [3.5]}, "TURN_LEFT": {}, "TURN_RIGHT": {"align": [1.5]}}
        space = build_solution_space(dom, kb, cuts)
        sol = initial_solution(space)
        for action in ("MOVE_FORWARD", "TURN_LEFT", "TURN_RIGHT"):
            for _ in range(300):
                point = (rng.uniform(0, 12), rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 2.5))
                assert sol.weight_for(action, point) == kb.propose(action, point)

    def test_no_regression_when_initial_is_perfect(self):
        # expert solves this trivial corridor optimally; revision must not regress
        from rulerev.domains.maze import MazeProblem

        dom = MazeDomain()
        problem = MazeProblem(3, 1, frozenset(), (2, 0), (0, 0, "E"))
        traces = [minimal_trace(dom, problem, "c")]
        result = revise(dom, maze_expert_kb(), traces, SearchSchedule(max_iterations=30))
        assert result.revised_report.perf >= result.initial_report.perf

    def test_perf_one_is_retained(self):
        # every problem starts on the exit: initial Perf is exactly 1.0 and stays there
        from rulerev.domains.maze import MazeProblem

        dom = MazeDomain()
        problem = MazeProblem(3, 3, frozenset(), (1, 1), (1, 1, "N"))
        traces = [minimal_trace(dom, problem, f"t{i}") for i in range(3)]
        result = revise(dom, maze_noaction_kb(), traces, SearchSchedule(max_iterations=20))
        assert result.initial_report.perf == 1.0
        assert result.revised_report.perf == 1.0

    def test_solution_space_cardinality(self):
        # (1 + weight_max) ** number_of_areas distinct assignments
        dom = SyntheticDomain(1)
        kb = maze_kb_like(dom, 0)
        space = build_solution_space(dom, kb, {"CHILD_0": {"sat": [2.0, 4.0]}})
        assert space.size() == 3
        combos = {
            Solution(space, c).weights
            for c in itertools.product(range(space.weight_max + 1), repeat=space.size())
        }
        assert len(combos) == (1 + space.weight_max) ** space.size() == 216

    def test_revise_determinism(self):
        dom = MazeDomain()
        pool = generate_maze_pool(seed=12, count=5, size=5)
        traces = [minimal_trace(dom, p, pid) for pid, p in pool.problems]
        schedule = SearchSchedule(max_iterations=80, stagnation_limit=30, seed=2)
        a = revise(dom, maze_noaction_kb(), traces, schedule)
        b = revise(dom, maze_noaction_kb(), traces, schedule)
        assert a.revised_kb == b.revised_kb
        assert a.revised_report == b.revised_report
        assert a.log == b.log

    def test_incomplete_traces_rejected_by_default(self):
        dom = MazeDomain()
        pool = generate_maze_pool(seed=12, count=2, size=5)
        traces = [
            run(dom, dom.start(p), None, SearchLimits(5, 256), MINIMAL_PRUNING, problem_id=pid).trace
            for pid, p in pool.problems
        ]
        with pytest.raises(RevisionError, match="incomplete"):
            revise(dom, maze_noaction_kb(), traces, SearchSchedule(max_iterations=5))

    def test_solution_to_kb_drops_zero_weight_areas(self):
        dom = SyntheticDomain(1)
        kb = maze_kb_like(dom, 0)
        space = build_solution_space(dom, kb, {"CHILD_0": {"sat": [5.0]}})
        out = solution_to_kb(Solution(space, (0, 2)))
        rules = out.rule_bases["CHILD_0"].rules
        assert len(rules) == 1 and rules[0].weight == 2
