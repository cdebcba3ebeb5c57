"""Layer transplanting between trained networks and the locator pretext task.

Transfer modes copy a subset of source layers into a freshly initialized
actor-critic network and freeze them: conv1/conv2/conv3 take the first k
convolution layers, fc takes the hidden FC layer together with both heads
and leaves the convolutions trainable. The locator pretext trains the same
trunk to classify the agent's board cell from pixels, giving a
non-reinforcement source for conv transfer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine, net, textures

TRANSFER_MODES = ("conv1", "conv2", "conv3", "fc")

_MODE_LAYERS = {
    "conv1": ("conv1",),
    "conv2": ("conv1", "conv2"),
    "conv3": ("conv1", "conv2", "conv3"),
    "fc": ("fc", "policy", "value"),
}

WALK_STREAM_NS = 6
EPOCH_STREAM_NS = 7
SPLIT_STREAM_NS = 8


class TransferError(ValueError):
    pass


def transplanted_layers(mode: str) -> tuple:
    if mode not in _MODE_LAYERS:
        raise TransferError(
            f"unknown transfer mode {mode!r}; expected one of {TRANSFER_MODES}"
        )
    return _MODE_LAYERS[mode]


def apply_transfer(source: net.NetworkParams, mode: str,
                   reinit_seed: int) -> net.NetworkParams:
    """Build an actor-critic network carrying the source's layers for the
    given mode, frozen; every other layer is freshly initialized from
    reinit_seed. The source must contain each transplanted layer with
    matching shapes (an fc transfer therefore needs an actor-critic source).
    """
    copied = transplanted_layers(mode)
    target = net.init(reinit_seed, head="actor_critic")
    for name in copied:
        if name not in source.arrays:
            raise TransferError(
                f"source checkpoint has no layer {name!r} "
                f"(head {source.head!r}), required by mode {mode!r}"
            )
        for key in ("w", "b"):
            src = source.arrays[name][key]
            dst = target.arrays[name][key]
            if src.shape != dst.shape:
                raise TransferError(
                    f"layer {name}.{key} shape {src.shape} does not match "
                    f"target {dst.shape}"
                )
            target.arrays[name][key] = src.astype(np.float32, copy=True)
        target.freeze_mask[name] = True
    target.source_task = source.source_task
    return target


# ---------------------------------------------------------------------------
# pretext task: where is the agent?


@dataclass(frozen=True)
class PretextDataset:
    observations: np.ndarray  # (n, 84, 84, 3) uint8
    labels: np.ndarray  # (n,) int64, 10 * row + col
    seed: int
    walk_steps: int
    palette: str

    def __len__(self) -> int:
        return len(self.labels)


def _random_walk_state(level, rng, steps: int) -> engine.GameState:
    state = engine.reset(level)
    for _ in range(steps):
        state, out = engine.step(state, int(rng.integers(4)))
        if out.done:
            state = engine.reset(level)
    return state


def random_walk_states(levels, n_states: int, seed: int,
                       steps: int = 20) -> list:
    """States reached by short random walks, one per sample, cycling through
    the given levels. Used for detector probes and ad-hoc inspection."""
    level_list = list(levels)
    rng = np.random.default_rng(np.random.SeedSequence([seed, WALK_STREAM_NS]))
    return [
        _random_walk_state(level_list[i % len(level_list)], rng, steps)
        for i in range(n_states)
    ]


def make_pretext_dataset(levels, n_samples: int, seed: int,
                         walk_steps: int = 20,
                         palette: str = "base") -> PretextDataset:
    """Label-balanced agent-position dataset.

    Each candidate is the endpoint of a walk_steps-long uniform random walk
    on a uniformly chosen level; its label is the agent cell 10 * row + col.
    A pool of three candidates per requested sample is bucketed by label,
    then drained round-robin in label order (skipping exhausted labels) so
    no reachable cell dominates. Observations are stored as uint8 pixels.
    """
    level_list = list(levels)
    if not level_list:
        raise ValueError("empty level list")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([seed, WALK_STREAM_NS]))
    buckets = {}
    for _ in range(3 * n_samples):
        level = level_list[int(rng.integers(len(level_list)))]
        state = _random_walk_state(level, rng, walk_steps)
        r, c = state.player
        buckets.setdefault(r * 10 + c, []).append(state)
    out_obs = np.empty((n_samples, textures.CANVAS, textures.CANVAS, 3),
                       dtype=np.uint8)
    out_labels = np.empty(n_samples, dtype=np.int64)
    order = sorted(buckets)
    drained = 0
    while drained < n_samples:
        progressed = False
        for label in order:
            if drained == n_samples:
                break
            if buckets[label]:
                s = buckets[label].pop(0)
                out_obs[drained] = textures.render_u8(s, palette)
                out_labels[drained] = label
                drained += 1
                progressed = True
        if not progressed:
            raise RuntimeError("candidate pool exhausted before fill")
    return PretextDataset(out_obs, out_labels, seed, walk_steps, palette)


def save_pretext_dataset(dataset: PretextDataset, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(out_dir / "pretext.npz",
                        observations=dataset.observations,
                        labels=dataset.labels)
    counts = {int(k): int(v) for k, v in
              zip(*np.unique(dataset.labels, return_counts=True))}
    with open(out_dir / "pretext.json", "w") as fh:
        json.dump({
            "n_samples": len(dataset),
            "seed": dataset.seed,
            "walk_steps": dataset.walk_steps,
            "palette": dataset.palette,
            "label_counts": counts,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def load_pretext_dataset(in_dir) -> PretextDataset:
    in_dir = Path(in_dir)
    with open(in_dir / "pretext.json") as fh:
        meta = json.load(fh)
    with np.load(in_dir / "pretext.npz") as z:
        obs = z["observations"]
        labels = z["labels"]
    return PretextDataset(obs, labels, meta["seed"], meta["walk_steps"],
                          meta["palette"])


@dataclass
class PretrainResult:
    params: net.NetworkParams
    epochs_run: int
    holdout_accuracy: float
    history: list  # (epoch, train_loss, holdout_accuracy)


def _accuracy(params, obs_u8, labels, batch: int = 200) -> float:
    hits = 0
    for i in range(0, len(labels), batch):
        chunk = obs_u8[i:i + batch].astype(np.float32) / np.float32(255.0)
        logits, _ = net.forward(params, chunk)
        hits += int((logits.argmax(axis=1) == labels[i:i + batch]).sum())
    return hits / len(labels)


def pretrain_locator(dataset: PretextDataset, seed: int,
                     max_epochs: int = 20, batch_size: int = 100,
                     holdout_fraction: float = 0.1,
                     stop_accuracy: float = 0.95) -> PretrainResult:
    """Train the locator head with the standard optimizer, stopping at the
    end of the first epoch whose holdout accuracy reaches stop_accuracy."""
    n = len(dataset)
    split_rng = np.random.default_rng(
        np.random.SeedSequence([seed, SPLIT_STREAM_NS])
    )
    perm = split_rng.permutation(n)
    n_hold = max(1, int(round(n * holdout_fraction)))
    hold_idx = perm[:n_hold]
    train_idx = perm[n_hold:]
    hold_obs = dataset.observations[hold_idx]
    hold_labels = dataset.labels[hold_idx]

    params = net.init(seed, head="locator")
    opt = net.OptimizerState()
    history = []
    epochs_run = 0
    acc = _accuracy(params, hold_obs, hold_labels)
    for epoch in range(max_epochs):
        epoch_rng = np.random.default_rng(
            np.random.SeedSequence([seed, EPOCH_STREAM_NS, epoch])
        )
        order = train_idx[epoch_rng.permutation(len(train_idx))]
        losses = []
        for i in range(0, len(order), batch_size):
            idx = order[i:i + batch_size]
            obs = dataset.observations[idx].astype(np.float32) / np.float32(255.0)
            loss, grads = net.cross_entropy_loss_and_grads(
                params, obs, dataset.labels[idx]
            )
            net.optimizer_step(params, grads, opt)
            losses.append(loss)
        epochs_run = epoch + 1
        acc = _accuracy(params, hold_obs, hold_labels)
        history.append((epochs_run, float(np.mean(losses)), acc))
        if acc >= stop_accuracy:
            break
    return PretrainResult(params, epochs_run, acc, history)
