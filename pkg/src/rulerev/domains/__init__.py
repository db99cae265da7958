"""Built-in problem domains."""

from .maze import (
    MOVE_FORWARD,
    TURN_LEFT,
    TURN_RIGHT,
    MazeDomain,
    MazeProblem,
    generate_maze_pool,
    load_maze_pool,
    maze_domain,
    maze_expert_kb,
    maze_noaction_kb,
    save_maze_pool,
)
from .synthetic import (
    SyntheticDomain,
    SyntheticProblem,
    generate_synthetic_pool,
    load_synthetic_pool,
    save_synthetic_pool,
    synthetic_domain,
)

__all__ = [
    "MOVE_FORWARD",
    "TURN_LEFT",
    "TURN_RIGHT",
    "MazeDomain",
    "MazeProblem",
    "SyntheticDomain",
    "SyntheticProblem",
    "generate_maze_pool",
    "generate_synthetic_pool",
    "load_maze_pool",
    "load_synthetic_pool",
    "maze_domain",
    "maze_expert_kb",
    "maze_noaction_kb",
    "save_maze_pool",
    "save_synthetic_pool",
    "synthetic_domain",
]
