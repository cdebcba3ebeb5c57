import numpy as np
import pytest

from sokotl import engine, planner, textures


def block_at(img, cell):
    r, c = cell
    y, x = textures.MARGIN + 8 * r, textures.MARGIN + 8 * c
    return img[y:y + 8, x:x + 8]


def test_render_contract(set1):
    state = engine.reset(set1.levels[0])
    for palette in textures.PALETTES:
        img = textures.render(state, palette)
        assert img.shape == (84, 84, 3)
        assert img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0
        u8 = textures.render_u8(state, palette)
        assert u8.dtype == np.uint8
        np.testing.assert_array_equal(img, u8.astype(np.float32) / 255.0)


def test_render_is_pure_and_cache_safe(set1):
    state = engine.reset(set1.levels[0])
    a = textures.render_u8(state)
    a_copy = a.copy()
    a[:] = 0  # caller-owned buffer; must not poison the background cache
    b = textures.render_u8(state)
    np.testing.assert_array_equal(b, a_copy)


def test_palette_table_bit_patterns():
    table = textures.palette_table("base")
    assert table.shape == (6, 8, 8, 3)
    assert table.dtype == np.uint8
    # player row 0 is 0x18: bits 00011000, foreground at columns 3 and 4
    player = table[textures.PLAYER_C]
    fg = np.array([0x3C, 0xE6, 0x50], dtype=np.uint8)
    bg = np.array([0x1C, 0x1C, 0x24], dtype=np.uint8)
    for col in range(8):
        expect = fg if col in (3, 4) else bg
        np.testing.assert_array_equal(player[0, col], expect)


def test_palettes_are_distinct(set1):
    state = engine.reset(set1.levels[0])
    assert not np.array_equal(textures.render_u8(state, "base"),
                              textures.render_u8(state, "game2"))


def test_unknown_palette_rejected(set1):
    state = engine.reset(set1.levels[0])
    with pytest.raises(ValueError):
        textures.render(state, "neon")
    with pytest.raises(ValueError):
        textures.palette_table("neon")


def test_margin_continues_wall_phase(set1):
    # the 2px margin is the wall tiling shifted so border tiles keep their
    # pattern: margin row y holds wall-pattern row (6 + y) % 8
    state = engine.reset(set1.levels[0])
    img = textures.render_u8(state)
    wall = textures.palette_table("base")[textures.WALL_C]
    np.testing.assert_array_equal(img[0:2, 2:10], wall[6:8, :])
    np.testing.assert_array_equal(img[2:10, 0:2], wall[:, 6:8])
    np.testing.assert_array_equal(block_at(img, (0, 0)), wall)
    np.testing.assert_array_equal(img[0:2, 0:2], wall[6:8, 6:8])


def test_plain_move_changes_exactly_two_tiles(set1):
    state = engine.reset(set1.levels[0])
    moved = None
    for action in range(4):
        nxt, _ = engine.step(state, action)
        if nxt.player != state.player and nxt.boxes == state.boxes:
            moved = nxt
            break
    assert moved is not None, "level leaves the player no plain move"

    before = textures.render_u8(state)
    after = textures.render_u8(moved)
    diff = np.any(before != after, axis=-1)
    changed = np.zeros_like(diff)
    for cell in (state.player, moved.player):
        r, c = cell
        y, x = textures.MARGIN + 8 * r, textures.MARGIN + 8 * c
        changed[y:y + 8, x:x + 8] = True
    assert diff[~changed].sum() == 0
    assert diff[changed].sum() > 0


def test_box_tiles_track_target_occupancy(set1):
    level = set1.levels[0]
    table = textures.palette_table("base")
    state = engine.reset(level)
    box = next(iter(state.boxes))
    assert box not in state.grid.targets  # generated levels start unsolved
    np.testing.assert_array_equal(
        block_at(textures.render_u8(state), box), table[textures.BOX_C])

    plan = planner.solve_optimal(level).actions
    for action in plan:
        state, _ = engine.step(state, action)
    done_box = next(iter(state.boxes))
    assert done_box in state.grid.targets
    np.testing.assert_array_equal(
        block_at(textures.render_u8(state), done_box),
        table[textures.BOX_ON_TARGET_C])


def test_player_tile_rendered_at_player_cell(set1):
    state = engine.reset(set1.levels[1])
    img = textures.render_u8(state)
    np.testing.assert_array_equal(block_at(img, state.player),
                                  textures.palette_table("base")[textures.PLAYER_C])
