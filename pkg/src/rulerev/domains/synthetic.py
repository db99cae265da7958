"""Seeded random-tree domain: a controllable substrate for replay and search tests.

States are paths in a b-ary tree whose node satisfactions come from the
problem seed.  Validity is strict satisfaction improvement over the
parent, exercising the improvement-style validity hook.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from ..engine import ActionSpec, ProblemDomain
from ..tracing import ProblemSample

SYNTH_MEASURES = ("sat", "parity", "depth")


def _all_paths(branching: int, depth: int) -> list[str]:
    paths = [""]
    level = [""]
    for _ in range(depth):
        level = [p + str(i) for p in level for i in range(branching)]
        paths.extend(level)
    return paths


@dataclass(frozen=True)
class SyntheticProblem:
    seed: int
    branching: int
    depth: int
    satisfactions: Mapping[str, float] | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.branching <= 9:
            raise ValueError("branching must be in 1..9")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.satisfactions is None:
            rng = random.Random(self.seed)
            sats = {p: 1.0 + 8.99 * rng.random() for p in _all_paths(self.branching, self.depth)}
            object.__setattr__(self, "satisfactions", sats)
        else:
            object.__setattr__(self, "satisfactions", dict(self.satisfactions))
            if "" not in self.satisfactions:
                raise ValueError("satisfaction assignment must cover the root path ''")


@dataclass(frozen=True)
class SyntheticState:
    problem: SyntheticProblem = field(compare=False, repr=False)
    path: str = ""


class SyntheticDomain(ProblemDomain):
    def __init__(self, branching: int):
        self.branching = branching
        self.domain_id = f"synthetic-b{branching}"
        self._actions = tuple(ActionSpec(f"CHILD_{i}", f"desc{i}") for i in range(branching))
        self._measure_sets = {f"desc{i}": SYNTH_MEASURES for i in range(branching)}

    @property
    def actions(self) -> tuple[ActionSpec, ...]:
        return self._actions

    @property
    def measure_sets(self) -> Mapping[str, tuple[str, ...]]:
        return self._measure_sets

    def start(self, problem: SyntheticProblem) -> SyntheticState:
        if problem.branching != self.branching:
            raise ValueError(
                f"problem branching {problem.branching} does not match domain {self.branching}"
            )
        return SyntheticState(problem, "")

    def satisfaction(self, state: SyntheticState) -> float:
        return state.problem.satisfactions[state.path]

    def measures(self, state: SyntheticState, measure_set_id: str) -> tuple[float, float, float]:
        child = int(measure_set_id.removeprefix("desc"))
        return (self.satisfaction(state), float(child % 2), float(len(state.path)))

    def apply(self, state: SyntheticState, action_id: str) -> SyntheticState:
        child = int(action_id.rsplit("_", 1)[1])
        if child >= self.branching:
            raise KeyError(action_id)
        if len(state.path) >= state.problem.depth:
            return state  # leaf: unchanged, rejected as a duplicate
        return SyntheticState(state.problem, state.path + str(child))

    def state_key(self, state: SyntheticState) -> str:
        return "n" + state.path

    def is_valid(self, state, parent_state, visited) -> bool:
        if parent_state is None:
            return True
        return self.satisfaction(state) > self.satisfaction(parent_state)


def synthetic_domain(problem: SyntheticProblem) -> SyntheticDomain:
    return SyntheticDomain(problem.branching)


def generate_synthetic_pool(seed: int, count: int, branching: int, depth: int) -> ProblemSample:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = random.Random(seed)
    problems = tuple(
        (f"synth-{i:03d}", SyntheticProblem(rng.randrange(2**32), branching, depth))
        for i in range(count)
    )
    return ProblemSample(seed=seed, problems=problems)


def save_synthetic_pool(sample: ProblemSample, path: str | Path) -> None:
    # seeds and shape parameters only; satisfactions regenerate from the seed
    header = {"version": 1, "domain": "synthetic", "seed": sample.seed, "count": len(sample.problems)}
    lines = [json.dumps(header, separators=(",", ":"))]
    for problem_id, p in sample.problems:
        lines.append(
            json.dumps(
                {"id": problem_id, "seed": p.seed, "branching": p.branching, "depth": p.depth},
                separators=(",", ":"),
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_synthetic_pool(path: str | Path) -> ProblemSample:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no synthetic pool file at {path}")
    lines = [l for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
    try:
        header = json.loads(lines[0])
        if header.get("domain") != "synthetic" or header.get("version") != 1:
            raise ValueError(f"{path}: not a version-1 synthetic pool file")
        problems = [
            (doc["id"], SyntheticProblem(doc["seed"], doc["branching"], doc["depth"]))
            for doc in map(json.loads, lines[1:])
        ]
    except (json.JSONDecodeError, KeyError, IndexError) as exc:
        raise ValueError(f"{path}: malformed synthetic pool file: {exc}") from exc
    return ProblemSample(seed=header["seed"], problems=tuple(problems))
