"""Pure-Python breadth-first search over bit-packed Sokoban states.

Reference implementation of the compiled core in _core.pyx; both must expand
states in exactly the same order (FIFO layers, actions up/down/left/right) so
they return identical plans.

A state packs into 28 bits: player cell in bits 0..6, then each of up to three
sorted box cells in 7-bit fields, missing boxes padded with 127. Cell index is
10*row + col.
"""

from __future__ import annotations

PAD = 127
STATUS_SOLVED = 0
STATUS_UNSOLVABLE = 1
STATUS_BUDGET = 2

_DELTAS = (-10, 10, -1, 1)  # up, down, left, right


def _pack(player, b0, b1, b2):
    return player | (b0 << 7) | (b1 << 14) | (b2 << 21)


def _corner(walls, cell):
    return (walls[cell - 10] or walls[cell + 10]) and \
           (walls[cell - 1] or walls[cell + 1])


def solve_packed(walls, targets, player, boxes, node_budget):
    """BFS for a shortest agent-step plan.

    walls/targets: 100-byte occupancy rows (index 10*r+c); boxes: sorted cell
    tuple, 1..3 entries. Returns (status, actions or None, states_inserted).
    Corner deadlocks (box in a non-target wall corner) are pruned at push time
    and detected at the root.
    """
    n_boxes = len(boxes)
    for b in boxes:
        if not targets[b] and _corner(walls, b):
            return STATUS_UNSOLVABLE, None, 0
    if all(targets[b] for b in boxes):
        return STATUS_SOLVED, [], 0

    padded = list(boxes) + [PAD] * (3 - n_boxes)
    root = _pack(player, padded[0], padded[1], padded[2])
    parent = {root: -1}
    frontier = [root]
    nodes = 0

    while frontier:
        nxt = []
        for key in frontier:
            p = key & 127
            bs = [(key >> 7) & 127, (key >> 14) & 127, (key >> 21) & 127]
            real = bs[:n_boxes]
            for action in range(4):
                d = _DELTAS[action]
                dest = p + d
                if walls[dest]:
                    continue
                if dest in real:
                    far = dest + d
                    if walls[far] or far in real:
                        continue
                    if not targets[far] and _corner(walls, far):
                        continue
                    nb = sorted(far if b == dest else b for b in real)
                    nb += [PAD] * (3 - n_boxes)
                    nk = _pack(dest, nb[0], nb[1], nb[2])
                    if nk in parent:
                        continue
                    parent[nk] = (key << 2) | action
                    nodes += 1
                    if all(targets[b] for b in nb[:n_boxes]):
                        return STATUS_SOLVED, _reconstruct(parent, nk), nodes
                    if nodes > node_budget:
                        return STATUS_BUDGET, None, nodes
                    nxt.append(nk)
                else:
                    # plain move: boxes unchanged, cannot newly solve
                    nk = (key & ~127) | dest
                    if nk in parent:
                        continue
                    parent[nk] = (key << 2) | action
                    nodes += 1
                    if nodes > node_budget:
                        return STATUS_BUDGET, None, nodes
                    nxt.append(nk)
        frontier = nxt
    return STATUS_UNSOLVABLE, None, nodes


def _reconstruct(parent, key):
    actions = []
    value = parent[key]
    while value >= 0:
        actions.append(value & 3)
        key = value >> 2
        value = parent[key]
    actions.reverse()
    return actions
