"""Sokoban rules: deterministic stepping, reward accounting, episode bookkeeping.

The board is a fixed 10x10 grid whose border cells are always walls. Dynamics
are the classic push-only rules: the agent moves in one of four directions,
a box is pushed one cell when the cell behind it is free, and everything else
degrades to a no-op that still costs the step penalty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

GRID_SIZE = 10
MAX_EPISODE_STEPS = 120
MAX_BOXES = 3

# tiles
WALL, FLOOR, TARGET = 0, 1, 2

# actions; index order is load-bearing (search tie-breaks and policy logits)
UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTIONS = (UP, DOWN, LEFT, RIGHT)
ACTION_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))
ACTION_NAMES = ("up", "down", "left", "right")

# all rewards are multiples of 0.1; kept in tenths so bookkeeping stays integral
STEP_PENALTY_TENTHS = -1
PUSH_ON_TENTHS = 10
PUSH_OFF_TENTHS = -10
SOLVE_TENTHS = 100


class EngineError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Static board content: wall cells and target cells of a 10x10 board."""

    walls: frozenset
    targets: frozenset

    def tile(self, cell):
        if cell in self.walls:
            return WALL
        if cell in self.targets:
            return TARGET
        return FLOOR


@dataclass(frozen=True)
class GameState:
    """Full board configuration plus the step counter; the MDP state."""

    grid: Grid
    boxes: frozenset
    player: tuple
    steps_taken: int

    @property
    def box_count(self):
        return len(self.boxes)


class StepOutcome(NamedTuple):
    reward: float
    done: bool
    solved: bool


def is_solved(state: GameState) -> bool:
    return state.boxes <= state.grid.targets


def is_terminal(state: GameState) -> bool:
    return is_solved(state) or state.steps_taken >= MAX_EPISODE_STEPS


def step(state: GameState, action: int) -> tuple[GameState, StepOutcome]:
    """Apply one action. Illegal moves are no-ops that still cost the step
    penalty; the episode ends on solve or at the step cap."""
    if action not in ACTIONS:
        raise EngineError(f"unknown action {action!r}")
    if is_terminal(state):
        raise EngineError("step() called on a terminal state")

    dr, dc = ACTION_DELTAS[action]
    dest = (state.player[0] + dr, state.player[1] + dc)
    walls = state.grid.walls
    targets = state.grid.targets

    player = state.player
    boxes = state.boxes
    tenths = STEP_PENALTY_TENTHS
    if dest not in walls:
        if dest in boxes:
            far = (dest[0] + dr, dest[1] + dc)
            if far not in walls and far not in boxes:
                boxes = (boxes - {dest}) | {far}
                player = dest
                if far in targets:
                    tenths += PUSH_ON_TENTHS
                if dest in targets:
                    tenths += PUSH_OFF_TENTHS
        else:
            player = dest

    new_state = GameState(state.grid, boxes, player, state.steps_taken + 1)
    solved = is_solved(new_state)
    if solved:
        tenths += SOLVE_TENTHS
    done = solved or new_state.steps_taken >= MAX_EPISODE_STEPS
    return new_state, StepOutcome(tenths / 10.0, done, solved)


def reset(level) -> GameState:
    """Build the initial state of a level, rejecting anything that violates
    the board invariants (bad border, box/target mismatch, box starting on a
    target, misplaced player)."""
    grid = level.grid
    boxes = frozenset(level.boxes)
    player = tuple(level.player)

    for i in range(GRID_SIZE):
        for cell in ((0, i), (GRID_SIZE - 1, i), (i, 0), (i, GRID_SIZE - 1)):
            if cell not in grid.walls:
                raise EngineError(f"border cell {cell} is not a wall")
    if not 1 <= len(boxes) <= MAX_BOXES:
        raise EngineError(f"box count {len(boxes)} outside 1..{MAX_BOXES}")
    if len(grid.targets) != len(boxes):
        raise EngineError(
            f"{len(grid.targets)} targets for {len(boxes)} boxes"
        )
    if boxes & grid.walls:
        raise EngineError("box on a wall cell")
    on_target = boxes & grid.targets
    if on_target:
        raise EngineError(f"box starts on target at {sorted(on_target)}")
    if player in grid.walls or player in boxes:
        raise EngineError(f"player cell {player} is a wall or box")
    if not (0 <= player[0] < GRID_SIZE and 0 <= player[1] < GRID_SIZE):
        raise EngineError(f"player cell {player} out of bounds")

    return GameState(grid, boxes, player, 0)


def episode_return(rewards: Iterable[float]) -> float:
    """Undiscounted sum of one episode's rewards."""
    return float(sum(rewards))
