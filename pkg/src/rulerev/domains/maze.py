"""Grid-maze robot domain: reach the exit, guided by a BFS distance field.

States are (x, y, heading) triples over an immutable board.  Satisfaction
is 10 on the exit cell and max(1, 10 - d) elsewhere, with d the
shortest-path cell distance to the exit.  Validity is duplicate rejection
only; moving into a wall returns the unchanged state, which the duplicate
rule then rejects.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from ..engine import ActionSpec, ProblemDomain
from ..knowledge import (
    DEFAULT_WEIGHT_MAX,
    Condition,
    KnowledgeBase,
    Rule,
    RuleBase,
    empty_knowledge_base,
)
from ..tracing import ProblemSample

MOVE_FORWARD = "MOVE_FORWARD"
TURN_LEFT = "TURN_LEFT"
TURN_RIGHT = "TURN_RIGHT"

HEADINGS = ("N", "E", "S", "W")
_DELTA = {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}
_LEFT = {"N": "W", "W": "S", "S": "E", "E": "N"}
_RIGHT = {v: k for k, v in _LEFT.items()}

NAV_MEASURE_SET = "nav"
NAV_MEASURES = ("dist", "blocked_ahead", "align")


@dataclass(frozen=True)
class MazeProblem:
    width: int
    height: int
    walls: frozenset[tuple[int, int]]
    exit_cell: tuple[int, int]
    start: tuple[int, int, str]  # x, y, heading

    def __post_init__(self) -> None:
        object.__setattr__(self, "walls", frozenset((int(x), int(y)) for x, y in self.walls))
        object.__setattr__(self, "exit_cell", (int(self.exit_cell[0]), int(self.exit_cell[1])))
        sx, sy, heading = self.start
        object.__setattr__(self, "start", (int(sx), int(sy), heading))
        if heading not in HEADINGS:
            raise ValueError(f"bad heading {heading!r}")
        for name, cell in (("exit", self.exit_cell), ("start", (sx, sy))):
            x, y = cell
            if not (0 <= x < self.width and 0 <= y < self.height) or cell in self.walls:
                raise ValueError(f"{name} cell {cell} is not an open cell")


def _bfs_distances(problem: MazeProblem) -> dict[tuple[int, int], int]:
    dist = {problem.exit_cell: 0}
    queue = deque([problem.exit_cell])
    while queue:
        x, y = queue.popleft()
        d = dist[(x, y)]
        for dx, dy in _DELTA.values():
            nxt = (x + dx, y + dy)
            if (
                0 <= nxt[0] < problem.width
                and 0 <= nxt[1] < problem.height
                and nxt not in problem.walls
                and nxt not in dist
            ):
                dist[nxt] = d + 1
                queue.append(nxt)
    return dist


class _Board:
    """Per-problem immutable helpers: distance field and improving directions."""

    __slots__ = ("problem", "dist", "decreasing")

    def __init__(self, problem: MazeProblem):
        self.problem = problem
        self.dist = _bfs_distances(problem)
        sx, sy, _ = problem.start
        if (sx, sy) not in self.dist:
            raise ValueError(f"exit {problem.exit_cell} unreachable from start {(sx, sy)}")
        self.decreasing: dict[tuple[int, int], frozenset[str]] = {}
        for cell, d in self.dist.items():
            dirs = []
            for heading, (dx, dy) in _DELTA.items():
                nxt = (cell[0] + dx, cell[1] + dy)
                if nxt in self.dist and self.dist[nxt] < d:
                    dirs.append(heading)
            self.decreasing[cell] = frozenset(dirs)

    def is_open(self, x: int, y: int) -> bool:
        p = self.problem
        return 0 <= x < p.width and 0 <= y < p.height and (x, y) not in p.walls


@dataclass(frozen=True)
class MazeState:
    board: _Board = field(compare=False, repr=False)
    x: int = 0
    y: int = 0
    heading: str = "N"


def _axis(heading: str) -> int:
    return 0 if heading in ("N", "S") else 1


class MazeDomain(ProblemDomain):
    domain_id = "maze"
    actions = (
        ActionSpec(MOVE_FORWARD, NAV_MEASURE_SET),
        ActionSpec(TURN_LEFT, NAV_MEASURE_SET),
        ActionSpec(TURN_RIGHT, NAV_MEASURE_SET),
    )
    measure_sets = {NAV_MEASURE_SET: NAV_MEASURES}

    def start(self, problem: MazeProblem) -> MazeState:
        board = _Board(problem)
        x, y, heading = problem.start
        return MazeState(board, x, y, heading)

    def satisfaction(self, state: MazeState) -> float:
        d = state.board.dist[(state.x, state.y)]
        return 10.0 if d == 0 else max(1.0, 10.0 - d)

    def measures(self, state: MazeState, measure_set_id: str) -> tuple[float, float, float]:
        if measure_set_id != NAV_MEASURE_SET:
            raise KeyError(measure_set_id)
        board = state.board
        cell = (state.x, state.y)
        dx, dy = _DELTA[state.heading]
        blocked = 0.0 if board.is_open(state.x + dx, state.y + dy) else 1.0
        decreasing = board.decreasing[cell]
        if state.heading in decreasing:
            align = 0.0
        elif all(_axis(state.heading) != _axis(d) for d in decreasing):
            align = 1.0  # vacuously 1 on the exit cell, where nothing improves
        else:
            align = 2.0
        return (float(board.dist[cell]), blocked, align)

    def apply(self, state: MazeState, action_id: str) -> MazeState:
        if action_id == MOVE_FORWARD:
            dx, dy = _DELTA[state.heading]
            nx, ny = state.x + dx, state.y + dy
            if state.board.is_open(nx, ny):
                return MazeState(state.board, nx, ny, state.heading)
            return state  # bump into a wall: unchanged, rejected as a duplicate
        if action_id == TURN_LEFT:
            return MazeState(state.board, state.x, state.y, _LEFT[state.heading])
        if action_id == TURN_RIGHT:
            return MazeState(state.board, state.x, state.y, _RIGHT[state.heading])
        raise KeyError(action_id)

    def state_key(self, state: MazeState) -> str:
        return f"{state.x},{state.y},{state.heading}"


def maze_domain() -> MazeDomain:
    return MazeDomain()


def maze_noaction_kb(weight_max: int = DEFAULT_WEIGHT_MAX) -> KnowledgeBase:
    """No action is ever proposed: the worst usable starting knowledge."""
    return empty_knowledge_base(MazeDomain(), weight_max)


def maze_expert_kb(weight_max: int = DEFAULT_WEIGHT_MAX) -> KnowledgeBase:
    """Hand-written base: move when facing an improving direction, else turn."""

    def below(measure: str, v: float) -> Condition:
        return Condition(measure, upper=v)

    def at_least(measure: str, v: float) -> Condition:
        return Condition(measure, lower=v, lower_closed=True)

    move = RuleBase(
        MOVE_FORWARD,
        NAV_MEASURE_SET,
        NAV_MEASURES,
        (
            Rule((below("blocked_ahead", 0.5), below("align", 0.5)), 5),
            Rule((below("blocked_ahead", 0.5), Condition("align", 0.5, 1.5, True, False)), 1),
        ),
    )
    turn_rules = (Rule((at_least("align", 0.5),), 3),)
    return KnowledgeBase(
        {
            MOVE_FORWARD: move,
            TURN_LEFT: RuleBase(TURN_LEFT, NAV_MEASURE_SET, NAV_MEASURES, turn_rules),
            TURN_RIGHT: RuleBase(TURN_RIGHT, NAV_MEASURE_SET, NAV_MEASURES, turn_rules),
        },
        weight_max,
    )


def _carve_maze(rng: random.Random, size: int) -> set[tuple[int, int]]:
    """Depth-first carving over odd 'room' cells; returns the open cells."""
    rooms = [(x, y) for x in range(1, size, 2) for y in range(1, size, 2)]
    open_cells = {rooms[0]}
    seen = {rooms[0]}
    stack = [rooms[0]]
    while stack:
        x, y = stack[-1]
        options = []
        for dx, dy in ((0, -2), (2, 0), (0, 2), (-2, 0)):
            nxt = (x + dx, y + dy)
            if 1 <= nxt[0] < size and 1 <= nxt[1] < size and nxt not in seen:
                options.append(nxt)
        if not options:
            stack.pop()
            continue
        nxt = options[rng.randrange(len(options))]
        seen.add(nxt)
        open_cells.add(nxt)
        open_cells.add(((x + nxt[0]) // 2, (y + nxt[1]) // 2))
        stack.append(nxt)
    # a few extra openings so the cell graph has cycles
    extra = size // 3
    candidates = []
    for x in range(1, size - 1):
        for y in range(1, size - 1):
            if (x, y) in open_cells:
                continue
            horiz = (x - 1, y) in open_cells and (x + 1, y) in open_cells
            vert = (x, y - 1) in open_cells and (x, y + 1) in open_cells
            if horiz or vert:
                candidates.append((x, y))
    candidates.sort()
    for cell in rng.sample(candidates, min(extra, len(candidates))):
        open_cells.add(cell)
    return open_cells


def _generate_maze(rng: random.Random, size: int) -> MazeProblem:
    open_cells = _carve_maze(rng, size)
    exit_cell = rng.choice(sorted(open_cells))
    all_cells = {(x, y) for x in range(size) for y in range(size)}
    walls = frozenset(all_cells - open_cells)
    probe = MazeProblem(size, size, walls, exit_cell, (exit_cell[0], exit_cell[1], "N"))
    dist = _bfs_distances(probe)
    starts = sorted(cell for cell, d in dist.items() if 1 <= d <= 9)
    if not starts:
        starts = sorted(cell for cell, d in dist.items() if d >= 1)
    sx, sy = rng.choice(starts)
    heading = rng.choice(HEADINGS)
    return MazeProblem(size, size, walls, exit_cell, (sx, sy, heading))


def generate_maze_pool(seed: int, count: int, size: int) -> ProblemSample:
    """Deterministic pool of solvable mazes; start cells sit within distance 9."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if size < 3 or size % 2 == 0:
        raise ValueError("maze size must be odd and >= 3")
    rng = random.Random(seed)
    problems = tuple((f"maze-{i:03d}", _generate_maze(rng, size)) for i in range(count))
    return ProblemSample(seed=seed, problems=problems)


def save_maze_pool(sample: ProblemSample, path: str | Path) -> None:
    header = {"version": 1, "domain": "maze", "seed": sample.seed, "count": len(sample.problems)}
    lines = [json.dumps(header, separators=(",", ":"))]
    for problem_id, p in sample.problems:
        lines.append(
            json.dumps(
                {
                    "id": problem_id,
                    "width": p.width,
                    "height": p.height,
                    "walls": sorted(list(c) for c in p.walls),
                    "exit": list(p.exit_cell),
                    "start": list(p.start),
                },
                separators=(",", ":"),
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_maze_pool(path: str | Path) -> ProblemSample:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no maze pool file at {path}")
    lines = [l for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
    try:
        header = json.loads(lines[0])
        if header.get("domain") != "maze" or header.get("version") != 1:
            raise ValueError(f"{path}: not a version-1 maze pool file")
        problems = []
        for raw in lines[1:]:
            doc = json.loads(raw)
            problems.append(
                (
                    doc["id"],
                    MazeProblem(
                        doc["width"],
                        doc["height"],
                        frozenset(tuple(c) for c in doc["walls"]),
                        tuple(doc["exit"]),
                        tuple(doc["start"]),
                    ),
                )
            )
    except (json.JSONDecodeError, KeyError, IndexError) as exc:
        raise ValueError(f"{path}: malformed maze pool file: {exc}") from exc
    if len(problems) != header.get("count"):
        raise ValueError(f"{path}: header announces {header.get('count')} mazes, found {len(problems)}")
    return ProblemSample(seed=header["seed"], problems=tuple(problems))
