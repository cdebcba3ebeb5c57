"""Whole-system acceptance checks.

Each test guards one headline claim of the package at its stated tolerance
and prints a single PASS/FAIL line with the measured numbers. The two
expensive claims (smoke learning, locator pretraining) cache their runs
under .acceptance_cache at the repo root; delete that directory to force a
fresh measurement. The curriculum comparison takes hours, so it only runs
when SOKOTL_ACCEPT_EXTENDED=1 and never blocks the suite.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from sokotl import (engine, evalharness, experiments, levels, net, planner,
                    trainer, transfer)
from sokotl.planner import oracle

import oracles

CACHE = Path(__file__).resolve().parent.parent / ".acceptance_cache"

SMOKE_SEEDS = (0, 1, 2, 3, 4)
SMOKE_TARGET = experiments.SMOKE_TARGET_SOLVED


def _report(ok: bool, name: str, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. reward decomposition identity


def test_reward_identity_on_random_sequences():
    t0 = time.perf_counter()
    sets = [levels.generate(seed=900 + b, box_count=b, count=20)
            for b in (1, 2, 3)]
    pool = [lv for s in sets for lv in s.levels]
    rng = np.random.default_rng(0)
    n = 10_000
    for _ in range(n):
        lv = pool[int(rng.integers(len(pool)))]
        actions = rng.integers(0, 4, size=int(rng.integers(1, 121)))
        tenths, solved, pon, poff, steps = oracles.episode_decomposition(
            engine, lv, actions)
        assert tenths == 100 * solved + 10 * pon - 10 * poff - steps, lv.id
    elapsed = time.perf_counter() - t0
    _report(elapsed < 30.0, "reward-identity",
            f"{n} random sequences exact in tenths, {elapsed:.1f}s (< 30s)")


# ---------------------------------------------------------------------------
# 2. generator and solver against the exhaustive oracle


def test_generator_solver_oracle():
    t0 = time.perf_counter()
    gen_sets = {b: levels.generate(seed=200 + b, box_count=b, count=100)
                for b in (1, 2, 3)}

    for b, lset in gen_sets.items():
        assert len(lset) == 100
        for lv in lset.levels:
            res = planner.solve_optimal(lv)
            assert res.status == planner.SOLVED, lv.id
            assert res.length == lv.optimal_length, lv.id
            state = engine.reset(lv)
            for action in res.actions:
                state, out = engine.step(state, action)
            assert out.solved, lv.id

    rng = np.random.default_rng(7)
    sampled = 0
    for b, quota in ((1, 20), (2, 20), (3, 10)):
        idx = rng.choice(100, size=quota, replace=False)
        for i in idx:
            lv = gen_sets[b].levels[int(i)]
            assert oracle.exhaustive_optimal_length(lv) == lv.optimal_length
            sampled += 1

    medians = [planner.length_histogram(gen_sets[b].levels)[1]["median"]
               for b in (1, 2, 3)]
    assert medians[0] < medians[1] < medians[2], medians
    elapsed = time.perf_counter() - t0
    _report(elapsed < 600.0, "generator-solver",
            f"300 levels solvable and replayed, {sampled} oracle-matched, "
            f"medians {medians}, {elapsed:.0f}s (< 600s)")


# ---------------------------------------------------------------------------
# 3. gradients and parameter count


def test_gradient_check_and_parameter_count():
    count = net.init(0).param_count()
    report = net.gradient_check(seed=0, batch_size=6, samples_per_array=16)
    err = report["max_rel_err"]
    layers_probed = {name.split(".")[0] for name in report if "." in name}
    ok = err < 1e-5 and count == 1_684_645 and \
        layers_probed == set(net.layer_names())
    _report(ok, "gradient-check",
            f"max rel err {err:.2e} (< 1e-5) over all layers, "
            f"{count} parameters (= 1,684,645)")


# ---------------------------------------------------------------------------
# 4. actor-critic mechanics


def test_a2c_mechanics(tmp_path):
    lset = levels.generate(seed=301, box_count=1, count=4,
                           constraints=levels.GenConstraints(max_len=20))

    params = net.init(0)
    env = trainer.VectorEnv(lset.levels, seed=0, n_envs=30)
    rng = np.random.default_rng(1)
    _, _, rewards, dones, last_obs = trainer.collect_rollout(
        params, env, env.observe(), rng, 5)
    _, boot = net.forward(params, last_obs)
    got = trainer.compute_returns(rewards, dones, boot[:, 0], 0.99)
    want = oracles.naive_returns(rewards, dones, boot[:, 0], 0.99)
    assert np.array_equal(got, want)

    cfg = trainer.TrainConfig(total_steps=450, eval_every=150,
                              deterministic=True)
    res1 = trainer.train(lset.levels, lset.levels, tmp_path / "a", seed=9,
                         config=cfg)
    res2 = trainer.train(lset.levels, lset.levels, tmp_path / "b", seed=9,
                         config=cfg)
    assert res1.env_steps == 150 * res1.updates == 450
    identical = res1.metrics_path.read_bytes() == res2.metrics_path.read_bytes()
    _report(identical and res1.updates == 3, "a2c-mechanics",
            "returns bit-match the scalar recursion, env steps = 150/update, "
            "same-seed metrics CSVs byte-identical")


# ---------------------------------------------------------------------------
# 5. transfer mechanics


def test_transfer_mechanics(tmp_path):
    lset = levels.generate(seed=301, box_count=1, count=4,
                           constraints=levels.GenConstraints(max_len=20))
    ac_source = net.init(101)
    loc_source = net.init(102, head="locator")
    cases = [("conv1", ac_source), ("conv2", ac_source), ("conv3", ac_source),
             ("fc", ac_source), ("conv1", loc_source)]

    cfg = trainer.TrainConfig(total_steps=10_000, eval_every=10_000,
                              deterministic=True)
    details = []
    for mode, source in cases:
        seed = 40
        init_params = transfer.apply_transfer(source, mode, seed)
        fresh = net.init(seed)
        res = trainer.train(lset.levels, lset.levels,
                            tmp_path / f"{mode}_{source.head}", seed,
                            config=cfg, init_params=init_params)
        frozen = transfer.transplanted_layers(mode)
        for name in res.params.arrays:
            if name in frozen:
                assert res.params.layer_bytes(name) == source.layer_bytes(name), \
                    (mode, name)
            else:
                assert res.params.layer_bytes(name) != fresh.layer_bytes(name), \
                    (mode, name)
        assert res.env_steps >= 10_000
        details.append(f"{mode}<-{source.head}")

    abbrevs = sorted(experiments.REGISTRY)
    for a in abbrevs:
        assert experiments.format_experiment(experiments.parse_experiment(a)) == a
    _report(True, "transfer-mechanics",
            f"{', '.join(details)}: frozen bytes stable through 10k steps, "
            f"rest moved; {len(abbrevs)} registry entries round-trip")


# ---------------------------------------------------------------------------
# 6. locator pretext


def test_locator_pretraining():
    cache_file = CACHE / "locator" / "result.json"
    if cache_file.exists():
        saved = json.loads(cache_file.read_text())
    else:
        t0 = time.perf_counter()
        lset = levels.generate(seed=601, box_count=1, count=20)
        dataset = transfer.make_pretext_dataset(lset.levels, 10_000, seed=601)

        untrained = net.init(999, head="locator")
        hits = 0
        probe = 1000
        for i in range(0, probe, 200):
            obs = dataset.observations[i:i + 200].astype(np.float32) / 255.0
            logits, _ = net.forward(untrained, obs)
            hits += int((logits.argmax(axis=1) == dataset.labels[i:i + 200]).sum())
        saved = {"untrained_accuracy": hits / probe}

        result = transfer.pretrain_locator(dataset, seed=601)
        saved.update(
            epochs_run=result.epochs_run,
            holdout_accuracy=result.holdout_accuracy,
            history=result.history,
            elapsed_s=time.perf_counter() - t0,
        )
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        cache_file.write_text(json.dumps(saved, indent=2, sort_keys=True) + "\n")

    ok = (saved["holdout_accuracy"] >= 0.95
          and saved["epochs_run"] <= 20
          and abs(saved["untrained_accuracy"] - 0.01) <= 0.02
          and saved["elapsed_s"] < 900.0)
    _report(ok, "locator-pretraining",
            f"holdout {saved['holdout_accuracy']:.3f} (>= 0.95) after "
            f"{saved['epochs_run']} epochs (<= 20) on 10k samples; untrained "
            f"{saved['untrained_accuracy']:.3f} (chance 0.01 +- 0.02); "
            f"{saved['elapsed_s']:.0f}s (< 900s)")


# ---------------------------------------------------------------------------
# 7. smoke learning


def _smoke_run_dir(seed: int) -> Path:
    return CACHE / "smoke" / f"seed{seed}"


def _ensure_smoke_run(seed: int, lset, cfg) -> dict:
    out = _smoke_run_dir(seed)
    run_json = out / "run.json"
    if run_json.exists():
        manifest = json.loads(run_json.read_text())
        if manifest.get("status") == "completed":
            return manifest
    trainer.train(lset.levels, lset.levels, out, seed=seed, config=cfg)
    return json.loads(run_json.read_text())


def test_smoke_learning_from_scratch():
    lset = experiments.smoke_level_set()
    assert len(lset) == 10
    assert all(lv.optimal_length <= 5 and len(lv.boxes) == 1
               for lv in lset.levels)
    cfg = experiments.smoke_train_config()
    assert (cfg.lr, cfg.gamma, cfg.entropy_coef, cfg.value_coef) == \
        (7e-4, 0.99, 0.1, 0.5)
    assert (cfg.n_envs, cfg.rollout_steps, cfg.total_steps) == (30, 5, 300_000)
    assert cfg.max_grad_norm is None

    per_seed = []
    hits = 0
    for seed in SMOKE_SEEDS:
        manifest = _ensure_smoke_run(seed, lset, cfg)
        assert manifest["config"]["lr"] == 7e-4
        assert manifest["config"]["total_steps"] == 300_000
        rows = evalharness.read_metrics(_smoke_run_dir(seed) / "metrics.csv")
        best = max(r["solved_ratio"] for r in rows)
        steps = manifest["env_steps"]
        reached = best >= SMOKE_TARGET and steps <= 300_000
        hits += reached
        per_seed.append(f"seed{seed} {best:.2f}@{steps // 1000}k")
    _report(hits >= 4, "smoke-learning",
            f"{hits}/5 seeds reached {SMOKE_TARGET} within 300k steps "
            f"({', '.join(per_seed)})")


# ---------------------------------------------------------------------------
# 8. agent-tracking conv1 channel


def test_agent_detector_after_smoke_training():
    checkpoints = [
        _smoke_run_dir(seed) / "checkpoint_final.ckpt"
        for seed in SMOKE_SEEDS
        if (_smoke_run_dir(seed) / "checkpoint_final.ckpt").exists()
    ]
    assert checkpoints, "run the smoke-learning test first to train policies"

    mixed = list(experiments.smoke_level_set().levels)
    for b, count in ((2, 5), (3, 5)):
        mixed += levels.generate(seed=810 + b, box_count=b, count=count).levels
    states = transfer.random_walk_states(mixed, 50, seed=42, steps=15)
    assert any(len(s.boxes) > 1 for s in states)

    results = []
    for ckpt in checkpoints:
        params = net.load_checkpoint(ckpt)
        best, channel, _ = evalharness.agent_channel_accuracy(params, states)
        results.append((best, channel, ckpt.parent.name))
    top = max(results)
    per_seed = ", ".join(f"{name} ch{ch} {acc:.2f}" for acc, ch, name in results)
    _report(top[0] >= 0.8, "agent-detector",
            f"best conv1 channel tracks the agent on {top[0]:.0%} of 50 "
            f"mixed-box states (>= 80%); {per_seed}")


# ---------------------------------------------------------------------------
# 9. scaled curriculum comparison (hours; opt-in, never blocks)


@pytest.mark.xfail(strict=False,
                   reason="qualitative effect at reduced budget; informative only")
def test_curriculum_transfer_beats_scratch():
    if os.environ.get("SOKOTL_ACCEPT_EXTENDED") != "1":
        pytest.skip("hours of training; set SOKOTL_ACCEPT_EXTENDED=1 to run")

    target = levels.generate(seed=820, box_count=2, count=20)
    test_set = levels.generate(seed=821, box_count=2, count=20)
    cfg = trainer.TrainConfig(total_steps=300_000)
    smoke_cfg = experiments.smoke_train_config()
    smoke_levels = experiments.smoke_level_set()

    wins = 0
    per_pair = []
    for seed in SMOKE_SEEDS:
        _ensure_smoke_run(seed, smoke_levels, smoke_cfg)
        source = net.load_checkpoint(
            _smoke_run_dir(seed) / "checkpoint_final.ckpt")
        arms = {}
        for arm, init_params in (
            ("s1t2k2", transfer.apply_transfer(source, "conv2", seed)),
            ("scratch", None),
        ):
            out = CACHE / "curriculum" / arm / f"seed{seed}"
            if not (out / "run.json").exists() or \
                    json.loads((out / "run.json").read_text())["status"] != "completed":
                trainer.train(target.levels, test_set.levels, out, seed,
                              config=cfg, init_params=init_params)
            rows = evalharness.read_metrics(out / "metrics.csv")
            arms[arm] = rows[-1]["solved_ratio"]
        wins += arms["s1t2k2"] > arms["scratch"]
        per_pair.append(f"seed{seed} {arms['s1t2k2']:.2f} vs {arms['scratch']:.2f}")
    _report(wins >= 4, "curriculum-transfer",
            f"transfer beat scratch in {wins}/5 pairs ({', '.join(per_pair)})")
