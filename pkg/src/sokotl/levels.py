"""Level definitions, the text format, seeded generation, and set manifests.

Generation is generate-and-filter: sample interior walls, check floor
connectivity, scatter targets/boxes/player, then keep the candidate only if
the planner proves it solvable with an optimal length inside the configured
window. Every candidate index owns a derived RNG stream, so results are
reproducible bit-for-bit and accepting in index order keeps them stable even
if candidates are screened in parallel.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import engine
from . import planner

WALL_CH = "#"
FLOOR_CH = " "
TARGET_CH = "."
BOX_CH = "$"
BOX_ON_TARGET_CH = "*"
PLAYER_CH = "@"
PLAYER_ON_TARGET_CH = "+"

MANIFEST_VERSION = 1


class LevelFormatError(ValueError):
    pass


class GenerationBudgetError(RuntimeError):
    """Raised when the attempt budget runs out before `count` levels pass the
    filter; carries whatever was produced."""

    def __init__(self, produced, attempts):
        super().__init__(
            f"generation budget exhausted after {attempts} candidates; "
            f"produced {len(produced)} levels"
        )
        self.produced = produced
        self.attempts = attempts


@dataclass(frozen=True)
class Level:
    """Immutable puzzle definition; optimal_length is filled by the planner."""

    id: str
    grid: engine.Grid
    boxes: frozenset
    player: tuple
    optimal_length: int | None = None


@dataclass(frozen=True)
class GenConstraints:
    wall_density: float = 0.15
    min_len: int = 3
    max_len: int = 60
    node_budget: int = 5_000_000
    attempts_per_level: int = 400


@dataclass(frozen=True)
class LevelSet:
    levels: tuple
    box_count: int
    seed: int
    constraints: GenConstraints | None = None

    def __len__(self):
        return len(self.levels)

    def manifest(self) -> dict:
        return {
            "format_version": MANIFEST_VERSION,
            "seed": self.seed,
            "box_count": self.box_count,
            "count": len(self.levels),
            "constraints": asdict(self.constraints) if self.constraints else None,
            "ids": [lv.id for lv in self.levels],
            "optimal_lengths": [lv.optimal_length for lv in self.levels],
        }


# ---------------------------------------------------------------------------
# text format


def level_rows(level: Level) -> list:
    rows = []
    for r in range(engine.GRID_SIZE):
        row = []
        for c in range(engine.GRID_SIZE):
            cell = (r, c)
            tile = level.grid.tile(cell)
            if cell == level.player:
                ch = PLAYER_ON_TARGET_CH if tile == engine.TARGET else PLAYER_CH
            elif cell in level.boxes:
                ch = BOX_ON_TARGET_CH if tile == engine.TARGET else BOX_CH
            elif tile == engine.WALL:
                ch = WALL_CH
            elif tile == engine.TARGET:
                ch = TARGET_CH
            else:
                ch = FLOOR_CH
            row.append(ch)
        rows.append("".join(row))
    return rows


def format_levels(levels) -> str:
    """Serialize levels; each one is a `; <id>` line followed by its 10 rows."""
    lines = []
    for lv in levels:
        lines.append(f"; {lv.id}")
        lines.extend(level_rows(lv))
    return "\n".join(lines) + "\n"


def parse_levels(text: str) -> list:
    """Inverse of format_levels; round-trips bit-exactly."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    levels = []
    i = 0
    while i < len(lines):
        header = lines[i]
        if not header.startswith("; "):
            raise LevelFormatError(f"line {i + 1}: expected '; <id>', got {header!r}")
        level_id = header[2:]
        rows = lines[i + 1:i + 1 + engine.GRID_SIZE]
        if len(rows) < engine.GRID_SIZE:
            raise LevelFormatError(f"level {level_id!r}: truncated rows")
        levels.append(_level_from_rows(level_id, rows))
        i += 1 + engine.GRID_SIZE
    return levels


def _level_from_rows(level_id, rows) -> Level:
    walls, targets, boxes = set(), set(), set()
    player = None
    for r, row in enumerate(rows):
        if len(row) != engine.GRID_SIZE:
            raise LevelFormatError(
                f"level {level_id!r}: row {r} has length {len(row)}"
            )
        for c, ch in enumerate(row):
            cell = (r, c)
            if ch == WALL_CH:
                walls.add(cell)
            elif ch == FLOOR_CH:
                pass
            elif ch == TARGET_CH:
                targets.add(cell)
            elif ch == BOX_CH:
                boxes.add(cell)
            elif ch == BOX_ON_TARGET_CH:
                boxes.add(cell)
                targets.add(cell)
            elif ch == PLAYER_CH:
                player = cell
            elif ch == PLAYER_ON_TARGET_CH:
                player = cell
                targets.add(cell)
            else:
                raise LevelFormatError(
                    f"level {level_id!r}: bad character {ch!r} at {cell}"
                )
    if player is None:
        raise LevelFormatError(f"level {level_id!r}: no player")
    grid = engine.Grid(frozenset(walls), frozenset(targets))
    return Level(level_id, grid, frozenset(boxes), player)


# ---------------------------------------------------------------------------
# generation


def _interior_cells():
    n = engine.GRID_SIZE
    return [(r, c) for r in range(1, n - 1) for c in range(1, n - 1)]


def _connected(floor_cells) -> bool:
    floor = set(floor_cells)
    if not floor:
        return False
    seen = {next(iter(floor))}
    queue = deque(seen)
    while queue:
        r, c = queue.popleft()
        for dr, dc in engine.ACTION_DELTAS:
            nb = (r + dr, c + dc)
            if nb in floor and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return seen == floor


def _sample_candidate(seed, box_count, idx, constraints) -> Level | None:
    rng = np.random.default_rng(np.random.SeedSequence([seed, box_count, idx]))
    interior = _interior_cells()
    wall_mask = rng.random(len(interior)) < constraints.wall_density
    walls = {cell for cell, w in zip(interior, wall_mask) if w}
    floor = [cell for cell in interior if cell not in walls]
    if len(floor) < 2 * box_count + 1 or not _connected(floor):
        return None

    picks = rng.choice(len(floor), size=2 * box_count, replace=False)
    targets = {floor[i] for i in picks[:box_count]}
    boxes = {floor[i] for i in picks[box_count:]}
    free = [cell for cell in floor if cell not in boxes]
    player = free[int(rng.integers(len(free)))]

    n = engine.GRID_SIZE
    border = {(0, i) for i in range(n)} | {(n - 1, i) for i in range(n)} \
        | {(i, 0) for i in range(n)} | {(i, n - 1) for i in range(n)}
    grid = engine.Grid(frozenset(border | walls), frozenset(targets))
    level_id = f"b{box_count}s{seed}c{idx:06d}"
    return Level(level_id, grid, frozenset(boxes), player)


def generate(seed: int, box_count: int, count: int,
             constraints: GenConstraints | None = None) -> LevelSet:
    """Produce `count` solvable levels with `box_count` boxes, deterministically
    from `seed`. Raises GenerationBudgetError when constraints are too tight."""
    if box_count not in (1, 2, 3):
        raise ValueError(f"box_count must be 1, 2 or 3, got {box_count}")
    if count < 1:
        raise ValueError("count must be >= 1")
    c = constraints or GenConstraints()
    accepted = []
    attempts_cap = count * c.attempts_per_level
    for idx in range(attempts_cap):
        if len(accepted) == count:
            break
        cand = _sample_candidate(seed, box_count, idx, c)
        if cand is None:
            continue
        result = planner.solve_optimal(cand, node_budget=c.node_budget)
        if result.status != planner.SOLVED:
            continue
        if not c.min_len <= result.length <= c.max_len:
            continue
        accepted.append(Level(cand.id, cand.grid, cand.boxes, cand.player,
                              optimal_length=result.length))
    if len(accepted) < count:
        raise GenerationBudgetError(accepted, attempts_cap)
    return LevelSet(tuple(accepted), box_count, seed, c)


def split(level_set: LevelSet, n_train: int, n_test: int, seed: int):
    """Disjoint seeded train/test subsets, each keeping the original order."""
    if n_train + n_test > len(level_set.levels):
        raise ValueError(
            f"cannot split {len(level_set.levels)} levels into "
            f"{n_train}+{n_test} disjoint subsets"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5150]))
    perm = rng.permutation(len(level_set.levels))
    train_idx = sorted(perm[:n_train].tolist())
    test_idx = sorted(perm[n_train:n_train + n_test].tolist())
    pick = lambda idxs: tuple(level_set.levels[i] for i in idxs)
    train = LevelSet(pick(train_idx), level_set.box_count, seed, level_set.constraints)
    test = LevelSet(pick(test_idx), level_set.box_count, seed, level_set.constraints)
    return train, test


# ---------------------------------------------------------------------------
# persistence

LEVELS_FILENAME = "levels.txt"
MANIFEST_FILENAME = "manifest.json"


def save_level_set(level_set: LevelSet, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    levels_path = out_dir / LEVELS_FILENAME
    manifest_path = out_dir / MANIFEST_FILENAME
    levels_path.write_text(format_levels(level_set.levels))
    manifest_path.write_text(
        json.dumps(level_set.manifest(), indent=2, sort_keys=True) + "\n"
    )
    return [levels_path, manifest_path]


def load_level_set(in_dir) -> LevelSet:
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / MANIFEST_FILENAME).read_text())
    raw = parse_levels((in_dir / LEVELS_FILENAME).read_text())
    if [lv.id for lv in raw] != manifest["ids"]:
        raise LevelFormatError("manifest ids do not match level file order")
    levels = tuple(
        Level(lv.id, lv.grid, lv.boxes, lv.player, optimal_length=length)
        for lv, length in zip(raw, manifest["optimal_lengths"])
    )
    constraints = (GenConstraints(**manifest["constraints"])
                   if manifest.get("constraints") else None)
    return LevelSet(levels, manifest["box_count"], manifest["seed"], constraints)
