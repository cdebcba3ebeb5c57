"""Synchronous advantage actor-critic training on pixel observations.

Thirty environments step in lockstep; every five steps the 150 collected
transitions become one gradient update. Returns are discounted reward sums
bootstrapped with the critic's value of the state after the rollout, cut at
episode boundaries. Periodic evaluation on a held-out level set drives the
metrics CSV and optional early stopping.

Every random draw comes from a stream namespaced under the run seed, so a
run is reproducible bit for bit: stream [seed, 1] samples actions, stream
[seed, 2, slot] picks the level whenever environment slot resets, and
evaluation derives its own streams from the same seed (see evalharness).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import engine, evalharness, net, textures

N_ENVS = 30
ROLLOUT_STEPS = 5

ACTION_STREAM_NS = 1
ENV_STREAM_NS = 2

METRICS_COLUMNS = (
    "env_steps", "update_idx", "solved_ratio", "mean_episode_return",
    "policy_loss", "value_loss", "entropy", "wall_clock_s",
)


class TrainingFailedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 300_000
    n_envs: int = N_ENVS
    rollout_steps: int = ROLLOUT_STEPS
    gamma: float = 0.99
    lr: float = 7e-4
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-5
    entropy_coef: float = 0.1
    value_coef: float = 0.5
    max_grad_norm: float | None = None  # clipping off: the reference setup
    eval_every: int = 1000
    eval_episodes_per_level: int = 1
    eval_mode: str = "sample"
    palette: str = "base"
    deterministic: bool = False
    stop_at_solved: float | None = None
    checkpoint_every: int | None = None


@dataclass
class TrainResult:
    params: net.NetworkParams
    env_steps: int
    updates: int
    metrics_path: Path
    manifest_path: Path
    checkpoint_path: Path
    eval_history: list
    early_stopped: bool


class VectorEnv:
    """Fixed-size bank of lockstep episodes over one level set.

    Each slot owns a random stream seeded by (run seed, slot index) and uses
    it only to pick the next level on reset, so slot histories do not depend
    on what the other slots did.
    """

    def __init__(self, levels, seed: int, n_envs: int = N_ENVS,
                 palette: str = "base"):
        self._levels = list(levels)
        if not self._levels:
            raise ValueError("empty level list")
        self.palette = palette
        self.n_envs = n_envs
        self._rngs = [
            np.random.default_rng(np.random.SeedSequence([seed, ENV_STREAM_NS, i]))
            for i in range(n_envs)
        ]
        self._states = [None] * n_envs
        self._returns = np.zeros(n_envs)
        self.finished = []
        for i in range(n_envs):
            self._reset_slot(i)

    def _reset_slot(self, i: int):
        level = self._levels[int(self._rngs[i].integers(len(self._levels)))]
        self._states[i] = engine.reset(level)
        self._returns[i] = 0.0

    def observe(self) -> np.ndarray:
        return np.stack(
            [textures.render(s, self.palette) for s in self._states]
        )

    def step(self, actions):
        rewards = np.zeros(self.n_envs, dtype=np.float64)
        dones = np.zeros(self.n_envs, dtype=bool)
        for i in range(self.n_envs):
            state, out = engine.step(self._states[i], int(actions[i]))
            rewards[i] = out.reward
            self._returns[i] += out.reward
            if out.done:
                dones[i] = True
                self.finished.append({
                    "return": float(self._returns[i]),
                    "solved": bool(out.solved),
                    "length": state.steps_taken,
                })
                self._reset_slot(i)
            else:
                self._states[i] = state
        return rewards, dones

    def drain_finished(self) -> list:
        out = self.finished
        self.finished = []
        return out


def compute_returns(rewards, dones, bootstrap, gamma: float) -> np.ndarray:
    """Discounted returns over a (T, N) rollout in float64.

    R_t = r_t + gamma * (1 - done_t) * R_{t+1}, seeded with the critic's
    value of the post-rollout state; the done mask cuts the recursion at
    episode boundaries so the bootstrap never leaks across a reset.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    running = np.asarray(bootstrap, dtype=np.float64).copy()
    out = np.empty_like(rewards)
    for t in reversed(range(rewards.shape[0])):
        running = rewards[t] + gamma * running * ~dones[t]
        out[t] = running
    return out


def _sample_actions(probs, rng) -> np.ndarray:
    # Inverse-CDF on the float32 simplex; the clip guards against cumsum
    # rounding leaving the last edge a hair below 1.
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    return np.minimum((cum < u[:, None]).sum(axis=1), probs.shape[1] - 1)


def collect_rollout(params, env: VectorEnv, obs, action_rng, n_steps: int):
    """Advance the env bank n_steps, acting by sampling the current policy.

    Returns (batch_obs, actions, rewards, dones, next_obs) with the batch
    stacked time-major: row t * n_envs + i is slot i at rollout step t.
    """
    obs_steps, act_steps, rew_steps, done_steps = [], [], [], []
    for _ in range(n_steps):
        logits, _ = net.forward(params, obs)
        actions = _sample_actions(net.softmax(logits), action_rng)
        rewards, dones = env.step(actions)
        obs_steps.append(obs)
        act_steps.append(actions)
        rew_steps.append(rewards)
        done_steps.append(dones)
        obs = env.observe()
    return (
        np.concatenate(obs_steps),
        np.stack(act_steps),
        np.stack(rew_steps),
        np.stack(done_steps),
        obs,
    )


def _write_manifest(path: Path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def train(train_levels, eval_levels, out_dir, seed: int,
          config: TrainConfig = TrainConfig(),
          init_params: net.NetworkParams | None = None,
          task_name: str | None = None) -> TrainResult:
    """Run the full training loop, writing metrics.csv, run.json and
    checkpoint_final.ckpt under out_dir.

    A metrics row is appended at the first update boundary at or past each
    eval_every mark; solved_ratio and mean_episode_return come from that
    evaluation, the loss columns from the boundary update. In deterministic
    mode wall_clock_s is recorded as 0.0 so two identical runs produce
    byte-identical CSVs. A non-finite loss aborts the run with status
    "failed_nonfinite" in run.json.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = init_params.copy() if init_params is not None else net.init(seed)
    opt = net.OptimizerState(config.lr, config.rmsprop_alpha, config.rmsprop_eps)
    env = VectorEnv(train_levels, seed, config.n_envs, config.palette)
    action_rng = np.random.default_rng(
        np.random.SeedSequence([seed, ACTION_STREAM_NS])
    )

    steps_per_update = config.n_envs * config.rollout_steps
    metrics_path = out_dir / "metrics.csv"
    manifest_path = out_dir / "run.json"
    checkpoint_path = out_dir / "checkpoint_final.ckpt"
    manifest = {
        "task": task_name,
        "seed": seed,
        "config": asdict(config),
        "n_train_levels": len(list(train_levels)),
        "n_eval_levels": len(list(eval_levels)),
        "transfer": {
            name: bool(params.frozen(name)) for name in params.arrays
        } if any(params.freeze_mask.values()) else None,
        "status": "running",
        "env_steps": 0,
    }
    _write_manifest(manifest_path, manifest)

    eval_history = []
    early_stopped = False
    env_steps = 0
    update_idx = 0
    next_mark = config.eval_every
    t_start = time.monotonic()

    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        obs = env.observe()
        try:
            while env_steps < config.total_steps:
                batch_obs, actions, rewards, dones, obs = collect_rollout(
                    params, env, obs, action_rng, config.rollout_steps
                )
                _, next_value = net.forward(params, obs)
                returns = compute_returns(
                    rewards, dones, next_value[:, 0], config.gamma
                )
                loss, grads, stats = net.loss_and_grads(
                    params, batch_obs, actions.reshape(-1),
                    returns.reshape(-1).astype(np.float32),
                    config.entropy_coef, config.value_coef,
                )
                if config.max_grad_norm is not None:
                    net.clip_grad_norm(grads, config.max_grad_norm)
                net.optimizer_step(params, grads, opt)
                env_steps += steps_per_update
                update_idx += 1

                if config.checkpoint_every is not None and \
                        env_steps % config.checkpoint_every < steps_per_update:
                    net.save_checkpoint(
                        params, out_dir / f"checkpoint_{env_steps}.ckpt",
                        source_task=task_name, env_steps=env_steps,
                    )

                if env_steps >= next_mark or env_steps >= config.total_steps:
                    while next_mark <= env_steps:
                        next_mark += config.eval_every
                    ev = evalharness.evaluate(
                        params, eval_levels, seed,
                        config.eval_episodes_per_level,
                        config.eval_mode, config.palette,
                    )
                    wall = 0.0 if config.deterministic else \
                        time.monotonic() - t_start
                    writer.writerow([
                        env_steps, update_idx,
                        repr(ev.solved_ratio), repr(ev.mean_return),
                        repr(stats["policy_loss"]), repr(stats["value_loss"]),
                        repr(stats["entropy"]), repr(wall),
                    ])
                    fh.flush()
                    eval_history.append(
                        (env_steps, ev.solved_ratio, ev.mean_return)
                    )
                    if config.stop_at_solved is not None and \
                            ev.solved_ratio >= config.stop_at_solved:
                        early_stopped = True
                        break
        except net.NonFiniteLossError as exc:
            manifest.update(status="failed_nonfinite", env_steps=env_steps,
                            error=str(exc))
            _write_manifest(manifest_path, manifest)
            raise TrainingFailedError(
                f"non-finite loss at {env_steps} env steps"
            ) from exc

    net.save_checkpoint(params, checkpoint_path,
                        source_task=task_name, env_steps=env_steps)
    manifest.update(
        status="completed",
        env_steps=env_steps,
        updates=update_idx,
        early_stopped=early_stopped,
        final_solved_ratio=eval_history[-1][1] if eval_history else None,
        episodes_finished=len(env.drain_finished()),
    )
    _write_manifest(manifest_path, manifest)
    return TrainResult(
        params=params,
        env_steps=env_steps,
        updates=update_idx,
        metrics_path=metrics_path,
        manifest_path=manifest_path,
        checkpoint_path=checkpoint_path,
        eval_history=eval_history,
        early_stopped=early_stopped,
    )
