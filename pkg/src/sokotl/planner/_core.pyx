# cython: boundscheck=False, wraparound=False, nonecheck=False, cdivision=True
# distutils: language = c++
"""Compiled twin of _pure.solve_packed; same packing, same expansion order."""

from libc.stdint cimport int64_t, uint8_t, uint32_t
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

DEF PAD = 127

cdef int _DELTAS[4]
_DELTAS[0] = -10
_DELTAS[1] = 10
_DELTAS[2] = -1
_DELTAS[3] = 1

STATUS_SOLVED = 0
STATUS_UNSOLVABLE = 1
STATUS_BUDGET = 2


cdef inline uint32_t _pack(int player, int b0, int b1, int b2) noexcept nogil:
    return (<uint32_t> player) | ((<uint32_t> b0) << 7) \
        | ((<uint32_t> b1) << 14) | ((<uint32_t> b2) << 21)


cdef inline bint _corner(const uint8_t* walls, int cell) noexcept nogil:
    return (walls[cell - 10] or walls[cell + 10]) and \
           (walls[cell - 1] or walls[cell + 1])


def solve_packed(const uint8_t[::1] walls, const uint8_t[::1] targets,
                 int player, boxes, int64_t node_budget):
    """BFS for a shortest agent-step plan over packed states.

    Mirrors sokotl.planner._pure.solve_packed exactly; see its docstring.
    """
    cdef int n_boxes = len(boxes)
    cdef int b0 = PAD, b1 = PAD, b2 = PAD
    cdef const uint8_t* w = &walls[0]
    cdef const uint8_t* t = &targets[0]
    cdef int i, j, k, action, d, p, dest, far, tmp
    cdef int bs[3]
    cdef int nb[3]
    cdef bint solved, blocked
    cdef uint32_t key, nk, root
    cdef int64_t nodes = 0, value
    cdef unordered_map[uint32_t, int64_t] parent
    cdef vector[uint32_t] frontier, nxt

    if n_boxes >= 1:
        b0 = boxes[0]
    if n_boxes >= 2:
        b1 = boxes[1]
    if n_boxes >= 3:
        b2 = boxes[2]

    bs[0] = b0
    bs[1] = b1
    bs[2] = b2
    solved = True
    for i in range(n_boxes):
        if not t[bs[i]] and _corner(w, bs[i]):
            return STATUS_UNSOLVABLE, None, 0
        if not t[bs[i]]:
            solved = False
    if solved:
        return STATUS_SOLVED, [], 0

    root = _pack(player, b0, b1, b2)
    parent[root] = -1
    frontier.push_back(root)

    while frontier.size() > 0:
        nxt.clear()
        for j in range(<int> frontier.size()):
            key = frontier[j]
            p = key & 127
            bs[0] = (key >> 7) & 127
            bs[1] = (key >> 14) & 127
            bs[2] = (key >> 21) & 127
            for action in range(4):
                d = _DELTAS[action]
                dest = p + d
                if w[dest]:
                    continue
                blocked = False
                for i in range(n_boxes):
                    if bs[i] == dest:
                        blocked = True
                        break
                if blocked:
                    # push attempt
                    far = dest + d
                    if w[far]:
                        continue
                    blocked = False
                    for i in range(n_boxes):
                        if bs[i] == far:
                            blocked = True
                            break
                    if blocked:
                        continue
                    if not t[far] and _corner(w, far):
                        continue
                    for i in range(n_boxes):
                        nb[i] = far if bs[i] == dest else bs[i]
                    # insertion sort, n <= 3
                    for i in range(1, n_boxes):
                        tmp = nb[i]
                        k = i
                        while k > 0 and nb[k - 1] > tmp:
                            nb[k] = nb[k - 1]
                            k -= 1
                        nb[k] = tmp
                    for i in range(n_boxes, 3):
                        nb[i] = PAD
                    nk = _pack(dest, nb[0], nb[1], nb[2])
                    if parent.count(nk):
                        continue
                    parent[nk] = (<int64_t> key << 2) | action
                    nodes += 1
                    solved = True
                    for i in range(n_boxes):
                        if not t[nb[i]]:
                            solved = False
                            break
                    if solved:
                        return STATUS_SOLVED, _reconstruct(parent, nk), nodes
                    if nodes > node_budget:
                        return STATUS_BUDGET, None, nodes
                    nxt.push_back(nk)
                else:
                    # plain move: boxes unchanged, cannot newly solve
                    nk = (key & ~<uint32_t> 127) | dest
                    if parent.count(nk):
                        continue
                    parent[nk] = (<int64_t> key << 2) | action
                    nodes += 1
                    if nodes > node_budget:
                        return STATUS_BUDGET, None, nodes
                    nxt.push_back(nk)
        frontier.swap(nxt)
    return STATUS_UNSOLVABLE, None, nodes


cdef list _reconstruct(unordered_map[uint32_t, int64_t]& parent, uint32_t key):
    cdef list actions = []
    cdef int64_t value = parent[key]
    while value >= 0:
        actions.append(<int> (value & 3))
        key = <uint32_t> (value >> 2)
        value = parent[key]
    actions.reverse()
    return actions
