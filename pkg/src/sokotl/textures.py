"""Tile artwork and pixel rendering.

Every tile class is an 8x8 two-colour bit pattern: one byte per row, MSB is
the leftmost pixel, set bits take the foreground colour. The 10x10 board
renders to 80x80 pixels and sits centred in an 84x84 canvas whose 2px margin
continues the wall pattern (keeps the border visually seamless).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import engine

TILE_PX = 8
CANVAS = 84
MARGIN = 2  # (84 - 10*8) // 2

# render classes
WALL_C, FLOOR_C, TARGET_C, BOX_C, BOX_ON_TARGET_C, PLAYER_C = range(6)

PALETTES = ("base", "game2")

# class -> (row bytes, foreground rgb, background rgb)
# Dark floors keep the pieces salient (they carry most of the image energy,
# arcade-style); walls and pieces stay bright so the conv stack always gets
# strong activations and the unclipped RMSProp warm-up cannot starve it.
_PATTERNS = {
    "base": {
        WALL_C: ((0x80, 0x80, 0x80, 0xFF, 0x08, 0x08, 0x08, 0xFF),
                 (0x8C, 0x96, 0xA0), (0xB4, 0xBE, 0xC8)),
        FLOOR_C: ((0x00, 0x00, 0x20, 0x00, 0x00, 0x00, 0x02, 0x00),
                  (0x2A, 0x2A, 0x32), (0x1C, 0x1C, 0x24)),
        TARGET_C: ((0x00, 0x18, 0x3C, 0x7E, 0x7E, 0x3C, 0x18, 0x00),
                   (0xE6, 0x3C, 0x3C), (0x1C, 0x1C, 0x24)),
        BOX_C: ((0xFF, 0x81, 0xBD, 0xA5, 0xA5, 0xBD, 0x81, 0xFF),
                (0x96, 0x5A, 0x0A), (0xF0, 0xAA, 0x2D)),
        BOX_ON_TARGET_C: ((0xFF, 0x81, 0x99, 0xBD, 0xBD, 0x99, 0x81, 0xFF),
                          (0xDC, 0x32, 0x32), (0xFF, 0xC8, 0x50)),
        PLAYER_C: ((0x18, 0x3C, 0x18, 0x7E, 0x5A, 0x18, 0x24, 0x66),
                   (0x3C, 0xE6, 0x50), (0x1C, 0x1C, 0x24)),
    },
    "game2": {
        WALL_C: ((0x88, 0x44, 0x22, 0x11, 0x88, 0x44, 0x22, 0x11),
                 (0x96, 0x78, 0xDC), (0x64, 0x46, 0xB4)),
        FLOOR_C: ((0xCC, 0xCC, 0x33, 0x33, 0xCC, 0xCC, 0x33, 0x33),
                  (0x28, 0x20, 0x30), (0x1E, 0x16, 0x26)),
        TARGET_C: ((0x18, 0x18, 0x18, 0xFF, 0xFF, 0x18, 0x18, 0x18),
                   (0x28, 0xC8, 0xDC), (0x1E, 0x16, 0x26)),
        BOX_C: ((0x3C, 0x7E, 0xFF, 0xFF, 0xFF, 0xFF, 0x7E, 0x3C),
                (0xDC, 0x3C, 0xC8), (0x8C, 0x1E, 0x78)),
        BOX_ON_TARGET_C: ((0xFF, 0xC3, 0xA5, 0x99, 0x99, 0xA5, 0xC3, 0xFF),
                          (0x50, 0xB4, 0xC8), (0xDC, 0xF0, 0xFF)),
        PLAYER_C: ((0x18, 0x3C, 0x7E, 0xFF, 0xFF, 0x7E, 0x3C, 0x18),
                   (0xFF, 0xA0, 0x28), (0x1E, 0x16, 0x26)),
    },
}


def _check_palette(palette):
    if palette not in PALETTES:
        raise ValueError(f"unknown palette {palette!r}; expected one of {PALETTES}")


@lru_cache(maxsize=None)
def palette_table(palette: str) -> np.ndarray:
    """uint8 array of shape (6, 8, 8, 3): per-class pixel blocks."""
    _check_palette(palette)
    table = np.zeros((len(_PATTERNS[palette]), TILE_PX, TILE_PX, 3), dtype=np.uint8)
    for cls, (rows, fg, bg) in _PATTERNS[palette].items():
        for r, byte in enumerate(rows):
            for c in range(TILE_PX):
                bit = (byte >> (TILE_PX - 1 - c)) & 1
                table[cls, r, c] = fg if bit else bg
    table.flags.writeable = False
    return table


@lru_cache(maxsize=256)
def _background(grid: engine.Grid, palette: str) -> np.ndarray:
    """Static 84x84x3 canvas for a grid: walls, floors, targets, wall margin."""
    table = palette_table(palette)
    n = engine.GRID_SIZE
    classes = np.empty((n, n), dtype=np.intp)
    for r in range(n):
        for c in range(n):
            tile = grid.tile((r, c))
            classes[r, c] = {engine.WALL: WALL_C,
                             engine.FLOOR: FLOOR_C,
                             engine.TARGET: TARGET_C}[tile]
    # margin keeps the wall pattern phase of the board cells
    tiled = np.tile(table[WALL_C], (12, 12, 1))
    canvas = tiled[TILE_PX - MARGIN:TILE_PX - MARGIN + CANVAS,
                   TILE_PX - MARGIN:TILE_PX - MARGIN + CANVAS].copy()
    blocks = table[classes]  # (10, 10, 8, 8, 3)
    board = blocks.transpose(0, 2, 1, 3, 4).reshape(n * TILE_PX, n * TILE_PX, 3)
    canvas[MARGIN:MARGIN + n * TILE_PX, MARGIN:MARGIN + n * TILE_PX] = board
    canvas.flags.writeable = False
    return canvas


def _blit(canvas, cell, block):
    r, c = cell
    y, x = MARGIN + TILE_PX * r, MARGIN + TILE_PX * c
    canvas[y:y + TILE_PX, x:x + TILE_PX] = block


def render_u8(state: engine.GameState, palette: str = "base") -> np.ndarray:
    """Render a state as an 84x84x3 uint8 image (pure function of its inputs)."""
    table = palette_table(palette)
    canvas = _background(state.grid, palette).copy()
    targets = state.grid.targets
    for box in state.boxes:
        _blit(canvas, box, table[BOX_ON_TARGET_C if box in targets else BOX_C])
    _blit(canvas, state.player, table[PLAYER_C])
    return canvas


def render(state: engine.GameState, palette: str = "base") -> np.ndarray:
    """Render a state as 84x84x3 float32 intensities in [0, 1]."""
    return render_u8(state, palette).astype(np.float32) / 255.0
