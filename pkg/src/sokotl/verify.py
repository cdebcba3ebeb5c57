"""Self-contained invariant suite behind the `verify` subcommand.

Each check returns (name, ok, detail) and is independent of the others, so
a regression prints every failing surface rather than stopping at the first.
These run on every fresh checkout; the test suite layers sharper oracles and
property tests on top.
"""

from __future__ import annotations

import io
import tempfile
from pathlib import Path

import numpy as np

from . import engine, levels, net, planner, textures
from .planner import oracle


def _check_reward_decomposition(n_episodes: int = 200, seed: int = 0):
    """Episode reward sums must equal 10*solved + pushes_on - pushes_off
    - 0.1*steps, exactly in tenths."""
    rng = np.random.default_rng(seed)
    lset = levels.generate(seed=813, box_count=2, count=5)
    for ep in range(n_episodes):
        level = lset.levels[ep % len(lset.levels)]
        state = engine.reset(level)
        tenths = 0
        pushes_on = pushes_off = 0
        solved = False
        while True:
            on_before = len(state.boxes & state.grid.targets)
            state, out = engine.step(state, int(rng.integers(4)))
            on_after = len(state.boxes & state.grid.targets)
            if on_after > on_before:
                pushes_on += 1
            elif on_after < on_before:
                pushes_off += 1
            tenths += round(out.reward * 10)
            if out.done:
                solved = out.solved
                break
        expect = 100 * solved + 10 * pushes_on - 10 * pushes_off \
            - state.steps_taken
        if tenths != expect:
            return False, f"episode {ep}: sum {tenths} != {expect} (tenths)"
    return True, f"{n_episodes} episodes, identity exact"


def _check_generator_solver(per_count: int = 8, oracle_sample: int = 3):
    """Generated levels are planner-solvable, plans replay to solved, and
    pruned search lengths match the exhaustive oracle on a sample."""
    checked = 0
    for boxes in (1, 2, 3):
        lset = levels.generate(seed=977, box_count=boxes, count=per_count)
        for i, level in enumerate(lset.levels):
            res = planner.solve_optimal(level)
            if res.status != planner.SOLVED:
                return False, f"{level.id}: planner status {res.status}"
            if len(res.actions) != level.optimal_length:
                return False, f"{level.id}: stored length mismatch"
            state = engine.reset(level)
            for a in res.actions:
                state, out = engine.step(state, a)
            if not out.solved:
                return False, f"{level.id}: replayed plan did not solve"
            if i < oracle_sample:
                ref = oracle.exhaustive_optimal_length(level)
                if ref != len(res.actions):
                    return False, f"{level.id}: oracle {ref} != {len(res.actions)}"
                checked += 1
    return True, f"3x{per_count} levels replayed, {checked} oracle-matched"


def _check_gradient(tolerance: float = 1e-5):
    report = net.gradient_check(seed=0, batch_size=6, samples_per_array=16)
    ok = report["max_rel_err"] < tolerance
    return ok, f"max rel err {report['max_rel_err']:.2e} (tol {tolerance:g})"


def _check_param_count():
    count = net.init(0).param_count()
    return count == net.PARAM_COUNT, f"{count} (expected {net.PARAM_COUNT})"


def _check_freeze_invariance(updates: int = 3):
    params = net.init(12)
    params.freeze_mask["conv1"] = True
    params.freeze_mask["fc"] = True
    before = {n: params.layer_bytes(n) for n in params.arrays}
    opt = net.OptimizerState()
    rng = np.random.default_rng(12)
    obs = rng.random((10, 84, 84, 3), dtype=np.float32)
    for _ in range(updates):
        _, grads, _ = net.loss_and_grads(
            params, obs, rng.integers(0, 4, 10),
            rng.uniform(-1, 1, 10).astype(np.float32),
        )
        net.optimizer_step(params, grads, opt)
    for name in params.arrays:
        changed = params.layer_bytes(name) != before[name]
        if params.frozen(name) and changed:
            return False, f"frozen layer {name} changed"
        if not params.frozen(name) and not changed:
            return False, f"trainable layer {name} did not change"
    return True, f"{updates} updates, frozen bytes stable, rest moved"


def _check_checkpoint_roundtrip():
    params = net.init(34)
    params.freeze_mask["conv2"] = True
    with tempfile.TemporaryDirectory() as td:
        p1 = net.save_checkpoint(params, Path(td) / "a.ckpt",
                                 source_task="2boxes", env_steps=77)
        loaded = net.load_checkpoint(p1)
        p2 = net.save_checkpoint(loaded, Path(td) / "b.ckpt")
        same = p1.read_bytes() == p2.read_bytes()
        arrays_equal = all(
            loaded.layer_bytes(n) == params.layer_bytes(n)
            for n in params.arrays
        )
    ok = same and arrays_equal and loaded.env_steps == 77
    return ok, "save -> load -> save byte-identical" if ok else "mismatch"


def _check_planner_twins(count: int = 5):
    if planner.IMPLEMENTATION == "pure":
        return True, "compiled core absent, pure fallback active (skipped)"
    from sokotl.planner import _pure
    lset = levels.generate(seed=431, box_count=2, count=count)
    for level in lset.levels:
        walls, targets, player, boxes = planner.pack_level(level)
        a = planner._impl.solve_packed(walls, targets, player, boxes, 5_000_000)
        b = _pure.solve_packed(walls, targets, player, boxes, 5_000_000)
        if a != b:
            return False, f"{level.id}: compiled != pure"
    return True, f"compiled == pure on {count} levels (status, plan, nodes)"


def _check_uniform_at_zero():
    params = net.init(0)
    for layer in params.arrays.values():
        for key in layer:
            layer[key][:] = 0
    obs = np.random.default_rng(0).random((3, 84, 84, 3), dtype=np.float32)
    logits, value = net.forward(params, obs)
    probs = net.softmax(logits)
    ent = float(-(probs * np.log(probs)).sum(axis=1).mean())
    ok = np.allclose(probs, 0.25) and abs(ent - np.log(4)) < 1e-6 \
        and np.allclose(value, 0.0)
    return ok, f"zero weights: policy uniform, entropy {ent:.4f} (ln4 {np.log(4):.4f})"


def _check_render():
    lset = levels.generate(seed=55, box_count=1, count=1)
    state = engine.reset(lset.levels[0])
    obs = textures.render(state)
    u8 = textures.render_u8(state)
    ok = (obs.shape == (84, 84, 3) and obs.dtype == np.float32
          and 0.0 <= obs.min() and obs.max() <= 1.0
          and u8.dtype == np.uint8
          and not np.array_equal(u8, textures.render_u8(state, "game2")))
    return ok, "84x84x3 float32 in [0,1], palettes distinct"


CHECKS = (
    ("reward-decomposition", _check_reward_decomposition),
    ("generator-solver-oracle", _check_generator_solver),
    ("gradient-check", _check_gradient),
    ("parameter-count", _check_param_count),
    ("freeze-invariance", _check_freeze_invariance),
    ("checkpoint-roundtrip", _check_checkpoint_roundtrip),
    ("planner-implementations", _check_planner_twins),
    ("uniform-policy-at-zero", _check_uniform_at_zero),
    ("render-contract", _check_render),
)


def run_all(stream=None) -> bool:
    """Run every check, print one PASS/FAIL line each, return overall."""
    out = stream or io.StringIO()
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=out)
    if stream is None:
        print(out.getvalue(), end="")
    return all_ok
