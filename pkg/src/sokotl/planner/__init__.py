"""Exact optimal-plan search over Sokoban states.

The hot BFS kernel has two interchangeable bodies: a compiled extension
(_core, built from _core.pyx) and a pure-Python fallback (_pure). The
compiled one is picked at import when present; set SOKOTL_PURE_PLANNER=1
to force the fallback. Both expand states in the same order and return
identical plans.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass

from .. import engine

if os.environ.get("SOKOTL_PURE_PLANNER") == "1":
    from . import _pure as _impl
    IMPLEMENTATION = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        IMPLEMENTATION = "compiled"
    except ImportError:
        from . import _pure as _impl
        IMPLEMENTATION = "pure"

SOLVED = "solved"
UNSOLVABLE = "unsolvable"
BUDGET_EXCEEDED = "budget_exceeded"

_STATUS = {0: SOLVED, 1: UNSOLVABLE, 2: BUDGET_EXCEEDED}

DEFAULT_NODE_BUDGET = 5_000_000


@dataclass(frozen=True)
class PlanResult:
    status: str
    actions: tuple | None
    nodes_expanded: int

    @property
    def length(self):
        return len(self.actions) if self.actions is not None else None


def pack_level(level):
    """(walls bytes, targets bytes, player cell, sorted box cells)."""
    n = engine.GRID_SIZE
    walls = bytearray(n * n)
    targets = bytearray(n * n)
    for (r, c) in level.grid.walls:
        walls[n * r + c] = 1
    for (r, c) in level.grid.targets:
        targets[n * r + c] = 1
    player = n * level.player[0] + level.player[1]
    boxes = tuple(sorted(n * r + c for (r, c) in level.boxes))
    return bytes(walls), bytes(targets), player, boxes


def solve_optimal(level, node_budget: int = DEFAULT_NODE_BUDGET) -> PlanResult:
    """Shortest plan in agent steps, or a proof there is none.

    UNSOLVABLE means the reachable space was exhausted (or a root corner
    deadlock found); BUDGET_EXCEEDED means the search stopped undecided.
    """
    walls, targets, player, boxes = pack_level(level)
    status, actions, nodes = _impl.solve_packed(
        walls, targets, player, boxes, node_budget
    )
    return PlanResult(
        _STATUS[status],
        tuple(actions) if actions is not None else None,
        nodes,
    )


def length_histogram(levels, node_budget: int = DEFAULT_NODE_BUDGET):
    """Exact counts of optimal lengths plus summary stats.

    Uses the recorded optimal_length when a level carries one, otherwise
    solves it. Raises on any unsolvable or undecided level.
    """
    lengths = []
    for lv in levels:
        if lv.optimal_length is not None:
            lengths.append(lv.optimal_length)
            continue
        result = solve_optimal(lv, node_budget)
        if result.status != SOLVED:
            raise RuntimeError(f"level {lv.id!r}: {result.status}")
        lengths.append(result.length)
    counts = Counter(lengths)
    ordered = sorted(lengths)
    mid = len(ordered) // 2
    median = (ordered[mid] if len(ordered) % 2
              else (ordered[mid - 1] + ordered[mid]) / 2)
    stats = {
        "min": ordered[0],
        "median": median,
        "max": ordered[-1],
        "mean": sum(ordered) / len(ordered),
    }
    return dict(sorted(counts.items())), stats
