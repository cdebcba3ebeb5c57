"""Experiment descriptors: the sNtMkK abbreviation grammar and the registry
of studied source/target/k combinations.

An abbreviation like s1t3k2 reads: source task 1-box, target task 3-boxes,
transfer and freeze the first 2 conv layers. sP marks the supervised locator
pretext as source; s1t1fc_game2 transfers the FC layer and heads onto the
alternate-palette rendering of the 1-box task. One registry entry corrects
an abbreviation that collides with another row's, and one entry's target is
recorded both ways in the source material; both carry notes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, asdict
from pathlib import Path

TASKS = ("1box", "2boxes", "3boxes", "1box_game2")
SOURCE_TASKS = ("1box", "2boxes", "3boxes", "prediction", "none")

TASK_BOXES = {"1box": 1, "2boxes": 2, "3boxes": 3, "1box_game2": 1}
TASK_PALETTE = {"1box": "base", "2boxes": "base", "3boxes": "base",
                "1box_game2": "game2"}

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_BUDGET_STEPS = 1_000_000

_ABBREV_RE = re.compile(r"^s([123P])t([123])k([123])$")
_SOURCE_DIGIT = {"1": "1box", "2": "2boxes", "3": "3boxes", "P": "prediction"}
_TARGET_DIGIT = {"1": "1box", "2": "2boxes", "3": "3boxes"}
FC_GAME2 = "s1t1fc_game2"


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    lr: float = 7e-4
    gamma: float = 0.99
    entropy_coef: float = 0.1
    value_coef: float = 0.5
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-5
    rollout_steps: int = 5
    n_envs: int = 30


@dataclass(frozen=True)
class ExperimentConfig:
    abbreviation: str
    source_task: str
    target_task: str
    k: str  # "conv1" | "conv2" | "conv3" | "fc" | "none"
    seeds: tuple = DEFAULT_SEEDS
    budget_steps: int = DEFAULT_BUDGET_STEPS
    hyper: Hyperparams = field(default_factory=Hyperparams)
    notes: tuple = ()

    @property
    def palette(self) -> str:
        return TASK_PALETTE[self.target_task]

    @property
    def target_boxes(self) -> int:
        return TASK_BOXES[self.target_task]

    @property
    def source_boxes(self):
        return TASK_BOXES.get(self.source_task)

    def to_json(self) -> str:
        payload = asdict(self)
        payload["seeds"] = list(self.seeds)
        payload["notes"] = list(self.notes)
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def config_from_json(text: str) -> ExperimentConfig:
    payload = json.loads(text)
    payload["hyper"] = Hyperparams(**payload["hyper"])
    payload["seeds"] = tuple(payload["seeds"])
    payload["notes"] = tuple(payload.get("notes", ()))
    return ExperimentConfig(**payload)


def parse_experiment(abbrev: str) -> ExperimentConfig:
    """Abbreviation -> config. Registry entries come back with their notes;
    any other grammar-conforming abbreviation builds a default config."""
    if abbrev in REGISTRY:
        return REGISTRY[abbrev]
    if abbrev == FC_GAME2:
        return ExperimentConfig(FC_GAME2, "1box", "1box_game2", "fc")
    m = _ABBREV_RE.match(abbrev)
    if not m:
        raise ExperimentError(
            f"bad experiment abbreviation {abbrev!r}: expected "
            f"s{{1|2|3|P}}t{{1|2|3}}k{{1|2|3}} or {FC_GAME2!r}"
        )
    return ExperimentConfig(
        abbreviation=abbrev,
        source_task=_SOURCE_DIGIT[m.group(1)],
        target_task=_TARGET_DIGIT[m.group(2)],
        k=f"conv{m.group(3)}",
    )


def format_experiment(config: ExperimentConfig) -> str:
    """Config -> abbreviation; inverse of parse_experiment."""
    if config.k == "fc":
        if (config.source_task, config.target_task) != ("1box", "1box_game2"):
            raise ExperimentError(
                "fc transfer is only defined for 1box -> 1box_game2"
            )
        return FC_GAME2
    if config.k not in ("conv1", "conv2", "conv3"):
        raise ExperimentError(f"cannot abbreviate k={config.k!r}")
    src = {v: k for k, v in _SOURCE_DIGIT.items()}[config.source_task]
    tgt = {v: k for k, v in _TARGET_DIGIT.items()}[config.target_task]
    return f"s{src}t{tgt}k{config.k[-1]}"


def _entry(abbrev, source, target, k, notes=()) -> ExperimentConfig:
    return ExperimentConfig(abbrev, source, target, k, notes=tuple(notes))


# The studied grid. s1t2k3 was printed with a duplicate abbreviation in the
# source table (its row data: 1-box -> 2-boxes, k=3); sPt1k1's row named
# 3-boxes as target while the abbreviation and prose say 1-box, so it
# defaults to 1-box here and carries a note.
REGISTRY = {
    cfg.abbreviation: cfg for cfg in (
        _entry("s1t1k3", "1box", "1box", "conv3"),
        _entry("s2t1k1", "2boxes", "1box", "conv1"),
        _entry("s2t1k2", "2boxes", "1box", "conv2"),
        _entry("s2t1k3", "2boxes", "1box", "conv3"),
        _entry("s3t1k1", "3boxes", "1box", "conv1"),
        _entry("s3t1k2", "3boxes", "1box", "conv2"),
        _entry("s3t1k3", "3boxes", "1box", "conv3"),
        _entry("sPt1k1", "prediction", "1box", "conv1",
               notes=("target recorded as 3-boxes in the source table but "
                      "1-box in the abbreviation and prose; defaulting to "
                      "1-box",)),
        _entry(FC_GAME2, "1box", "1box_game2", "fc"),
        _entry("s1t2k1", "1box", "2boxes", "conv1"),
        _entry("s1t2k2", "1box", "2boxes", "conv2"),
        _entry("s1t2k3", "1box", "2boxes", "conv3",
               notes=("abbreviation corrected from a duplicate s1t1k3 row "
                      "whose data reads 1-box -> 2-boxes, k=3",)),
        _entry("s2t2k3", "2boxes", "2boxes", "conv3"),
        _entry("s1t3k1", "1box", "3boxes", "conv1"),
        _entry("s1t3k2", "1box", "3boxes", "conv2"),
        _entry("s1t3k3", "1box", "3boxes", "conv3"),
        _entry("s2t3k3", "2boxes", "3boxes", "conv3"),
    )
}


# ---------------------------------------------------------------------------
# smoke preset: the quick from-scratch learnability check

SMOKE_GEN_SEED = 34
SMOKE_BUDGET_STEPS = 300_000
SMOKE_TARGET_SOLVED = 0.8


def smoke_level_set():
    """Ten 1-box levels, optimal length 2-3, a quarter of the interior
    walled. Short optima keep solve events frequent; the dense bright wall
    texture keeps the conv stack well fed from the first update."""
    from . import levels

    constraints = levels.GenConstraints(min_len=2, max_len=3,
                                        wall_density=0.25,
                                        attempts_per_level=4000)
    return levels.generate(seed=SMOKE_GEN_SEED, box_count=1, count=10,
                           constraints=constraints)


def smoke_train_config(budget_steps: int = SMOKE_BUDGET_STEPS):
    """Stock hyper-parameters with whole-set eval every 1k steps and early
    stop once the smoke target ratio is reached."""
    from . import trainer

    return trainer.TrainConfig(
        total_steps=budget_steps,
        eval_episodes_per_level=3,
        stop_at_solved=SMOKE_TARGET_SOLVED,
    )


def save_config(config: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.to_json())
    return path


def load_config(path) -> ExperimentConfig:
    return config_from_json(Path(path).read_text())


def with_overrides(config: ExperimentConfig, seeds=None,
                   budget_steps=None) -> ExperimentConfig:
    """Apply command-line overrides without touching the rest."""
    changes = {}
    if seeds is not None:
        changes["seeds"] = tuple(seeds)
    if budget_steps is not None:
        changes["budget_steps"] = int(budget_steps)
    if not changes:
        return config
    payload = {**asdict(config), **changes}
    payload["hyper"] = config.hyper
    payload["notes"] = config.notes
    payload["seeds"] = tuple(payload["seeds"])
    return ExperimentConfig(**payload)
