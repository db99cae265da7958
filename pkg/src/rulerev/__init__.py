"""Informed depth-first tree search with automatically revisable
production-rule weight bases.

The engine solves state-optimisation problems by weighted depth-first
search; the revision pipeline logs minimally pruned search trees, mines
them for success/failure examples, partitions each action's measure space,
and searches the weight assignment space to maximise a composite
performance function.
"""

from .engine import (
    MINIMAL_PRUNING,
    NORMAL,
    PERFECT_EPSILON,
    ActionSpec,
    EngineError,
    ExplorationTrace,
    ProblemDomain,
    SearchLimits,
    SearchOutcome,
    TraceNode,
    run,
)
from .knowledge import (
    DEFAULT_WEIGHT_MAX,
    Condition,
    KnowledgeBase,
    KnowledgeError,
    Rule,
    RuleBase,
    Violation,
    aggregate,
    empty_knowledge_base,
    parse_kb,
    serialize_kb,
    validate_rule_base,
)
from .learning import (
    FAILURE,
    SUCCESS,
    Area,
    AreaIndex,
    BestPath,
    Example,
    ExampleSet,
    LearningError,
    build_areas,
    build_example_sets,
    example_set_csv,
    extract_best_paths,
    mdl_discretize,
)
from .revision import (
    PerfReport,
    ReplayStats,
    RevisionError,
    RevisionResult,
    SearchLogEntry,
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
from .tracing import (
    ProblemSample,
    TraceError,
    choose_problems,
    explore_sample,
    load_trace,
    load_traces,
    save_trace,
    save_traces,
)

__version__ = "0.1.0"
