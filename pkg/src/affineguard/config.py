"""Pipeline configuration: JSON file with defaults and field-path validation.

An empty JSON object is a complete configuration; every field has a
default. The global ``seed`` is the only random input: dataset, split and
training seeds are derived from it through fixed substream keys unless a
section pins its own seed explicitly. Relative paths are resolved against
the directory containing the config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .nnet import DEFAULT_HIDDEN, TrainConfig
from .rng import derive_seed
from .synthdata import DatasetSpec
from .transforms import DEFAULT_STEPS, TransformKind

# Substream keys off the global seed.
DATASET_SEED_KEY = 101
SPLIT_SEED_KEY = 102
TRAIN_SEED_KEY = 103

DEFAULT_KINDS = [
    TransformKind.ROTATION,
    TransformKind.SHEAR,
    TransformKind.SCALE,
    TransformKind.TRANSLATE,
]


class ConfigError(ValueError):
    """Raised with the offending field path in the message."""


@dataclass
class PipelinePaths:
    data_dir: Path
    checkpoint: Path
    profiles_dir: Path
    reports_dir: Path


@dataclass
class PipelineConfig:
    seed: int
    dataset: DatasetSpec
    train: TrainConfig
    hidden: int
    attack_epsilon: float
    kinds: list[TransformKind]
    steps: int
    multiplier: float
    calibration_size: int
    train_fraction: float
    paths: PipelinePaths
    jobs: int | None = field(default=None)


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object, got {type(value).__name__}")
    return value


def _number(section: dict, path: str, key: str, default, lo=None, hi=None, integer=False):
    value = section.get(key, default)
    full = f"{path}.{key}" if path else key
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{full}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{full}: expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{full}: must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{full}: must be <= {hi}, got {value}")
    return int(value) if integer else float(value)


def _boolean(section: dict, path: str, key: str, default: bool) -> bool:
    value = section.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected true or false, got {value!r}")
    return value


def parse_config(doc: dict, base_dir: Path) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")

    seed = _number(doc, "", "seed", 0, integer=True)

    ds = _section(doc, "dataset")
    dataset_seed = _number(ds, "dataset", "seed", derive_seed(seed, DATASET_SEED_KEY), integer=True)
    try:
        dataset = DatasetSpec(
            num_classes=_number(ds, "dataset", "num_classes", 15, lo=2, hi=15, integer=True),
            per_class=_number(ds, "dataset", "per_class", 100, lo=1, integer=True),
            image_size=_number(ds, "dataset", "image_size", 32, lo=16, integer=True),
            seed=dataset_seed,
            noise_std=_number(ds, "dataset", "noise_std", 0.05, lo=0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"dataset: {exc}") from exc

    tr = _section(doc, "train")
    lr = _number(tr, "train", "learning_rate", 0.001)
    if lr <= 0:
        raise ConfigError(f"train.learning_rate: must be > 0, got {lr}")
    train = TrainConfig(
        learning_rate=lr,
        batch_size=_number(tr, "train", "batch_size", 32, lo=1, integer=True),
        epochs=_number(tr, "train", "epochs", 25, lo=1, integer=True),
        augment=_boolean(tr, "train", "augment", True),
        seed=_number(tr, "train", "seed", derive_seed(seed, TRAIN_SEED_KEY), integer=True),
    )

    model = _section(doc, "model")
    hidden = _number(model, "model", "hidden", DEFAULT_HIDDEN, lo=1, integer=True)

    atk = _section(doc, "attack")
    epsilon = _number(atk, "attack", "epsilon", 0.01)
    if not 0.0 < epsilon <= 1.0:
        raise ConfigError(f"attack.epsilon: must be in (0, 1], got {epsilon}")

    det = _section(doc, "detection")
    kind_names = det.get("kinds", [k.value for k in DEFAULT_KINDS])
    if not isinstance(kind_names, list) or not kind_names:
        raise ConfigError("detection.kinds: expected a non-empty list")
    kinds = []
    for name in kind_names:
        try:
            kinds.append(TransformKind(name))
        except ValueError:
            valid = ", ".join(k.value for k in TransformKind)
            raise ConfigError(f"detection.kinds: unknown kind {name!r} (valid: {valid})") from None
    steps = _number(det, "detection", "steps", DEFAULT_STEPS, lo=1, integer=True)
    multiplier = _number(det, "detection", "multiplier", 1.5, lo=0.0)
    calibration_size = _number(det, "detection", "calibration_size", 400, lo=2, integer=True)

    sp = _section(doc, "split")
    train_fraction = _number(sp, "split", "train_fraction", 0.8)
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"split.train_fraction: must be in (0, 1), got {train_fraction}")

    pt = _section(doc, "paths")

    def _path(key: str, default: str) -> Path:
        value = pt.get(key, default)
        if not isinstance(value, str) or not value:
            raise ConfigError(f"paths.{key}: expected a non-empty string")
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    paths = PipelinePaths(
        data_dir=_path("data_dir", "data"),
        checkpoint=_path("checkpoint", "model.ckpt"),
        profiles_dir=_path("profiles_dir", "profiles"),
        reports_dir=_path("reports_dir", "reports"),
    )

    jobs = doc.get("jobs")
    if jobs is not None:
        jobs = _number(doc, "", "jobs", None, lo=1, integer=True)

    return PipelineConfig(
        seed=seed,
        dataset=dataset,
        train=train,
        hidden=hidden,
        attack_epsilon=epsilon,
        kinds=kinds,
        steps=steps,
        multiplier=multiplier,
        calibration_size=calibration_size,
        train_fraction=train_fraction,
        paths=paths,
        jobs=jobs,
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc, path.resolve().parent)
