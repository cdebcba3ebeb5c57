"""Policy evaluation, cross-seed aggregation and inspection tooling.

Evaluation rolls out episodes with a fixed, per-episode random stream so a
given (weights, level set, eval seed) triple always produces the same
numbers no matter how episodes are batched. Aggregation combines per-seed
learning curves into mean and confidence halfwidth on a shared
environment-step grid. The remaining helpers render learning curves to SVG
deterministically, dump conv feature maps to PNG, and probe conv1 channels
for ones that track the player position.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine, net, textures

EVAL_STREAM_NS = 4  # namespace tag so eval streams never collide with training streams
CI_Z = 1.96

EVAL_MODES = ("sample", "argmax")


@dataclass(frozen=True)
class EvalResult:
    solved: tuple
    returns: tuple
    lengths: tuple
    level_ids: tuple

    @property
    def n_episodes(self) -> int:
        return len(self.solved)

    @property
    def solved_ratio(self) -> float:
        return float(np.mean(self.solved))

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns))


def _episode_rng(eval_seed: int, episode: int):
    return np.random.default_rng(
        np.random.SeedSequence([eval_seed, EVAL_STREAM_NS, episode])
    )


def evaluate(params: net.NetworkParams, levels, eval_seed: int,
             episodes_per_level: int = 1, mode: str = "sample",
             palette: str = "base") -> EvalResult:
    """Run one episode per test level (episodes_per_level rounds of the whole
    set, in order), isolated per-episode random streams.

    mode "sample" draws actions from the policy distribution; "argmax" takes
    the highest logit (ties break to the lowest action index). Episodes are
    stepped in lockstep for batched forward passes, which cannot change the
    outcome because every random draw comes from the episode's own stream.
    """
    if mode not in EVAL_MODES:
        raise ValueError(f"unknown eval mode {mode!r}")
    if episodes_per_level < 1:
        raise ValueError("episodes_per_level must be positive")
    level_list = list(levels)
    if not level_list:
        raise ValueError("empty level list")

    n_episodes = len(level_list) * episodes_per_level
    rngs = [_episode_rng(eval_seed, i) for i in range(n_episodes)]
    chosen = [level_list[i % len(level_list)] for i in range(n_episodes)]
    states = [engine.reset(level) for level in chosen]
    done = np.zeros(n_episodes, dtype=bool)
    solved = np.zeros(n_episodes, dtype=bool)
    returns = np.zeros(n_episodes)
    lengths = np.zeros(n_episodes, dtype=np.int64)

    while not done.all():
        active = np.flatnonzero(~done)
        obs = np.stack([textures.render(states[i], palette) for i in active])
        logits, _ = net.forward(params, obs)
        if mode == "argmax":
            actions = np.argmax(logits, axis=1)
        else:
            probs = net.softmax(logits)
            cum = np.cumsum(probs, axis=1)
            u = np.array([rngs[i].random() for i in active])
            actions = np.minimum((cum < u[:, None]).sum(axis=1), 3)
        for j, i in enumerate(active):
            states[i], out = engine.step(states[i], int(actions[j]))
            returns[i] += out.reward
            lengths[i] += 1
            if out.done:
                done[i] = True
                solved[i] = out.solved
    return EvalResult(
        solved=tuple(bool(s) for s in solved),
        returns=tuple(float(r) for r in returns),
        lengths=tuple(int(n) for n in lengths),
        level_ids=tuple(level.id for level in chosen),
    )


# ---------------------------------------------------------------------------
# aggregation across seeds


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class AggregateResult:
    env_steps: tuple
    mean: tuple
    ci_halfwidth: tuple
    n_runs: int


def read_metrics(path) -> list:
    """Rows of a training metrics CSV as dicts with numeric fields."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "env_steps": int(row["env_steps"]),
                "update_idx": int(row["update_idx"]),
                "solved_ratio": float(row["solved_ratio"]),
                "mean_episode_return": float(row["mean_episode_return"]),
                "policy_loss": float(row["policy_loss"]),
                "value_loss": float(row["value_loss"]),
                "entropy": float(row["entropy"]),
                "wall_clock_s": float(row["wall_clock_s"]),
            })
    return rows


def aggregate(curves, field: str = "solved_ratio") -> AggregateResult:
    """Combine per-run curves into mean and 1.96 * s / sqrt(n) halfwidth
    (sample standard deviation, ddof=1). Every run must share the same
    env-step grid; fewer than two runs is an error."""
    tables = list(curves)
    if len(tables) < 2:
        raise AggregationError("need at least two runs to aggregate")
    grids = [tuple(r["env_steps"] for r in t) for t in tables]
    if any(g != grids[0] for g in grids[1:]):
        raise AggregationError("runs disagree on the env-step grid")
    if not grids[0]:
        raise AggregationError("empty curves")
    values = np.array([[r[field] for r in t] for t in tables], dtype=np.float64)
    mean = values.mean(axis=0)
    hw = CI_Z * values.std(axis=0, ddof=1) / np.sqrt(len(tables))
    return AggregateResult(
        env_steps=grids[0],
        mean=tuple(float(m) for m in mean),
        ci_halfwidth=tuple(float(h) for h in hw),
        n_runs=len(tables),
    )


def aggregate_files(paths, field: str = "solved_ratio") -> AggregateResult:
    return aggregate([read_metrics(p) for p in paths], field)


def write_aggregate(agg: AggregateResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("env_steps", "mean", "ci_halfwidth"))
        for step, m, hw in zip(agg.env_steps, agg.mean, agg.ci_halfwidth):
            writer.writerow((step, repr(m), repr(hw)))
    return path


def read_aggregate(path) -> AggregateResult:
    """Inverse of write_aggregate. n_runs is not stored in the CSV and
    comes back as 0."""
    steps, mean, hw = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            steps.append(int(row["env_steps"]))
            mean.append(float(row["mean"]))
            hw.append(float(row["ci_halfwidth"]))
    return AggregateResult(tuple(steps), tuple(mean), tuple(hw), 0)


# ---------------------------------------------------------------------------
# plots


SVG_HASHSALT = "sokotl"


def plot_curves(curves: dict, out_path, title=None,
                ylabel: str = "solved ratio") -> Path:
    """Render labelled AggregateResult curves with shaded confidence bands.

    SVG output is byte-deterministic: element ids are salted with a fixed
    string and no timestamp is embedded. Legend follows the input order.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": SVG_HASHSALT}):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        try:
            for label, agg in curves.items():
                steps = np.asarray(agg.env_steps)
                mean = np.asarray(agg.mean)
                hw = np.asarray(agg.ci_halfwidth)
                ax.plot(steps, mean, label=label)
                ax.fill_between(steps, mean - hw, mean + hw, alpha=0.25)
            ax.set_xlabel("environment steps")
            ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            ax.legend(loc="lower right")
            fig.tight_layout()
            fig.savefig(out_path, metadata={"Date": None}
                        if out_path.suffix == ".svg" else None)
        finally:
            plt.close(fig)
    return out_path


# ---------------------------------------------------------------------------
# inspection


def dump_feature_maps(params: net.NetworkParams, state: engine.GameState,
                      out_dir, palette: str = "base") -> Path:
    """Write one PNG per conv layer (channels tiled into a grid, each map
    normalized independently) plus the rendered input and an index JSON."""
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    obs = textures.render(state, palette)[None]
    Image.fromarray(textures.render_u8(state, palette)).save(out_dir / "input.png")
    index = {"input": "input.png", "layers": []}
    for li, act in enumerate(net.conv_activations(params, obs), start=1):
        maps = act[0]  # (h, w, c)
        h, w, c = maps.shape
        grid_cols = int(np.ceil(np.sqrt(c)))
        grid_rows = int(np.ceil(c / grid_cols))
        pad = 1
        canvas = np.zeros(
            (grid_rows * (h + pad) + pad, grid_cols * (w + pad) + pad),
            dtype=np.uint8,
        )
        for ch in range(c):
            m = maps[:, :, ch]
            peak = m.max()
            scaled = (m / peak * 255.0).astype(np.uint8) if peak > 0 else \
                np.zeros_like(m, dtype=np.uint8)
            r, col = divmod(ch, grid_cols)
            y = pad + r * (h + pad)
            x = pad + col * (w + pad)
            canvas[y:y + h, x:x + w] = scaled
        name = f"conv{li}.png"
        Image.fromarray(canvas).save(out_dir / name)
        index["layers"].append(
            {"layer": f"conv{li}", "file": name, "shape": [h, w, c]}
        )
    with open(out_dir / "index.json", "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def _peak_to_cell(i: int) -> int:
    # Conv1 output i sees input pixels 4i..4i+7; subtracting the 2px margin
    # puts the window center in the 8px tile nearest (4i - 2) / 8.
    return int(np.clip(round((4 * i - 2) / 8), 0, 9))


def agent_channel_accuracy(params: net.NetworkParams, states,
                           palette: str = "base"):
    """For each conv1 channel, how often the argmax of its activation map
    lands on the player's board cell. Returns (best_accuracy, best_channel,
    per_channel_accuracy)."""
    states = list(states)
    obs = np.stack([textures.render(s, palette) for s in states])
    acts = net.conv_activations(params, obs)[0]  # (n, 20, 20, 32)
    n, h, w, c = acts.shape
    flat = acts.reshape(n, h * w, c)
    peak = flat.argmax(axis=1)  # (n, c)
    iy, ix = np.divmod(peak, w)
    hits = np.zeros(c, dtype=np.int64)
    for si, state in enumerate(states):
        pr, pc = state.player
        for ch in range(c):
            if _peak_to_cell(int(iy[si, ch])) == pr and \
                    _peak_to_cell(int(ix[si, ch])) == pc:
                hits[ch] += 1
    per_channel = hits / float(n)
    best = int(per_channel.argmax())
    return float(per_channel[best]), best, per_channel
