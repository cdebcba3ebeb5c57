"""Brute-force search oracles for cross-checking the production planner.

Both oracles drive the engine's own step function on ordinary game states and
do no deadlock reasoning at all, so they share nothing with the packed-state
BFS except the rules of the game.
"""

from __future__ import annotations

from .. import engine


class OracleBudgetError(RuntimeError):
    pass


def _canonical(state):
    return (state.player, state.boxes)


def exhaustive_optimal_length(level, depth_cap: int = 119,
                              state_cap: int = 20_000_000) -> int | None:
    """Optimal length by plain breadth-first enumeration of engine states.

    Returns None when the reachable space is exhausted without a solution.
    depth_cap stays below the episode step cap so engine.step is always legal.
    """
    start = engine.reset(level)
    seen = {_canonical(start)}
    frontier = [start]
    depth = 0
    while frontier and depth < depth_cap:
        depth += 1
        nxt = []
        for state in frontier:
            for action in engine.ACTIONS:
                ns, outcome = engine.step(state, action)
                if outcome.solved:
                    return depth
                key = _canonical(ns)
                if key in seen:
                    continue
                seen.add(key)
                if len(seen) > state_cap:
                    raise OracleBudgetError(f"more than {state_cap} states")
                nxt.append(ns)
        frontier = nxt
    if frontier:
        raise OracleBudgetError(f"undecided at depth {depth_cap}")
    return None


def iddfs_optimal_length(level, depth_cap: int = 40) -> int | None:
    """Optimal length by iterative-deepening depth-first search.

    A per-iteration transposition table (state -> best remaining budget seen)
    only avoids re-expanding dominated repeats; no domain pruning.
    """
    start = engine.reset(level)

    def dfs(state, budget, table):
        key = _canonical(state)
        if table.get(key, -1) >= budget:
            return False
        table[key] = budget
        if budget == 0:
            return False
        for action in engine.ACTIONS:
            ns, outcome = engine.step(state, action)
            if outcome.solved:
                return True
            if budget > 1 and not outcome.done and dfs(ns, budget - 1, table):
                return True
        return False

    for limit in range(1, depth_cap + 1):
        if dfs(start, limit, {}):
            return limit
    return None
