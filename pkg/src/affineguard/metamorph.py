"""Confidence-variation measurement, calibration, and the iterative OR detector.

The detection idea: a model that is robust to small affine transforms keeps
its confidence in the originally predicted label when a genuine image is
slightly warped, while a crafted perturbation rarely survives resampling,
so the same warp collapses the confidence on an adversarial input. The
reference label is always the model's own argmax on the untransformed
image; no ground-truth knowledge is assumed.

Per transform kind, a :class:`CalibrationProfile` stores, for every
schedule step k, the mean M(k) and sample standard deviation S(k) of the
confidence variation over a clean calibration set, plus a multiplier N
(default 1.5). An image is judged adversarial if at any probed step its
variation exceeds M(k) + N * S(k); the per-step outcomes are OR-ed, so one
firing step suffices and detection can short-circuit there.

Variation is the absolute difference |v1 - v2| of the reference label's
confidence before and after the warp, in percentage points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .image import Image
from .nnet import ModelParams, forward, forward_batch
from .synthdata import LabelledImage
from .transforms import DEFAULT_STEPS, TransformKind, TransformSchedule, schedule, step_transform, warp, warp_stack

DEFAULT_MULTIPLIER = 1.5


class ChecksumMismatchError(ValueError):
    """Profile was calibrated against a different model than the one supplied."""


class Decision(Enum):
    ADVERSARIAL = "adversarial"
    CLEAN = "clean"


@dataclass(frozen=True)
class VariationMeasurement:
    """Reference label l1 with its confidence before (v1) and after (v2) a warp.

    Confidences are percentage points in [0, 100]."""

    l1: int
    v1: float
    v2: float

    def __post_init__(self):
        for name, v in (("v1", self.v1), ("v2", self.v2)):
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must be in [0, 100], got {v}")

    @property
    def delta(self) -> float:
        return abs(self.v1 - self.v2)


@dataclass
class CalibrationProfile:
    """Per-step clean-set variation statistics defining the detection cutoffs."""

    kind: TransformKind
    sched: TransformSchedule
    means: np.ndarray
    stds: np.ndarray
    multiplier: float
    sample_count: int
    model_checksum: str
    created_with: dict

    def __post_init__(self):
        k = self.sched.steps
        if len(self.means) != k or len(self.stds) != k:
            raise ValueError("means/stds length must equal the schedule length")
        if np.any(self.stds < 0):
            raise ValueError("standard deviations must be >= 0")
        if self.sample_count < 2:
            raise ValueError("sample standard deviation needs at least 2 calibration images")

    def cutoffs(self) -> np.ndarray:
        return self.means + self.multiplier * self.stds

    @property
    def steps(self) -> int:
        return self.sched.steps


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    triggering_step: int | None
    per_step_deltas: tuple[float, ...]
    mr_accuracy_metadata: dict | None = None

    @property
    def is_adversarial(self) -> bool:
        return self.decision is Decision.ADVERSARIAL


def measure_variation(params: ModelParams, img: Image, t) -> VariationMeasurement:
    """Variation of the model's reference-label confidence under one transform."""
    reference = forward(params, img)
    transformed = forward(params, warp(img, t))
    return VariationMeasurement(
        l1=reference.label,
        v1=100.0 * reference.confidence,
        v2=100.0 * float(transformed.probs[reference.label]),
    )


def _as_images(clean_set) -> list[Image]:
    return [item.image if isinstance(item, LabelledImage) else item for item in clean_set]


def delta_profiles(
    params: ModelParams, images: list[Image], kind: TransformKind, steps: int = DEFAULT_STEPS
) -> np.ndarray:
    """(n_images, steps) matrix of per-step confidence variations.

    One batched warp + forward pass per schedule step; per-image rows are
    independent, so this matches per-image measurement up to float noise in
    BLAS blocking.
    """
    images = _as_images(images)
    if not images:
        raise ValueError("image set must not be empty")
    stack = np.stack([img.pixels for img in images])
    n, h, w, _ = stack.shape
    base = forward_batch(params, stack.reshape(n, -1))
    l1 = np.argmax(base, axis=1)
    v1 = 100.0 * base[np.arange(n), l1]
    sched = schedule(kind, steps)
    deltas = np.empty((n, steps))
    for k, magnitude in enumerate(sched.params):
        t = step_transform(kind, magnitude, w, h)
        warped = warp_stack(stack, t)
        probs = forward_batch(params, warped.reshape(n, -1))
        v2 = 100.0 * probs[np.arange(n), l1]
        deltas[:, k] = np.abs(v1 - v2)
    return deltas


def sample_mean_std(values: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Mean and sample standard deviation (divisor n-1)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[axis] < 2:
        raise ValueError("sample standard deviation needs at least 2 values")
    return values.mean(axis=axis), values.std(axis=axis, ddof=1)


def calibrate(
    params: ModelParams,
    clean_set,
    kind: TransformKind,
    steps: int = DEFAULT_STEPS,
    multiplier: float = DEFAULT_MULTIPLIER,
    created_with: dict | None = None,
) -> CalibrationProfile:
    """Fit per-step clean-variation statistics for one transform kind."""
    images = _as_images(clean_set)
    if len(images) < 2:
        raise ValueError(f"calibration needs at least 2 clean images, got {len(images)}")
    deltas = delta_profiles(params, images, kind, steps)
    means, stds = sample_mean_std(deltas, axis=0)
    return CalibrationProfile(
        kind=kind,
        sched=schedule(kind, steps),
        means=means,
        stds=stds,
        multiplier=multiplier,
        sample_count=len(images),
        model_checksum=params.checksum(),
        created_with=dict(created_with or {}),
    )


def mr_rotation(params: ModelParams, clean_set) -> CalibrationProfile:
    return calibrate(params, clean_set, TransformKind.ROTATION)


def mr_shear(params: ModelParams, clean_set) -> CalibrationProfile:
    return calibrate(params, clean_set, TransformKind.SHEAR)


def mr_scale(params: ModelParams, clean_set) -> CalibrationProfile:
    return calibrate(params, clean_set, TransformKind.SCALE)


def mr_translate(params: ModelParams, clean_set) -> CalibrationProfile:
    return calibrate(params, clean_set, TransformKind.TRANSLATE)


def detect(
    params: ModelParams,
    profile: CalibrationProfile,
    img: Image,
    max_steps: int | None = None,
) -> Verdict:
    """Iterative threshold-OR rule, short-circuiting at the first firing step.

    An image is adversarial iff some probed step k has delta(k) strictly
    above M(k) + N * S(k). On a trigger, the recorded delta trace stops at
    the triggering step.
    """
    if profile.model_checksum != params.checksum():
        raise ChecksumMismatchError(
            "profile was calibrated for a different model "
            f"({profile.model_checksum[:12]}... != {params.checksum()[:12]}...)"
        )
    if max_steps is None:
        max_steps = profile.steps
    if not 1 <= max_steps <= profile.steps:
        raise ValueError(f"max_steps must be in [1, {profile.steps}], got {max_steps}")

    reference = forward(params, img)
    v1 = 100.0 * reference.confidence
    cutoffs = profile.cutoffs()
    metadata = profile.created_with.get("reported_accuracy")
    deltas: list[float] = []
    for k in range(max_steps):
        t = step_transform(profile.kind, profile.sched.params[k], img.width, img.height)
        v2 = 100.0 * float(forward(params, warp(img, t)).probs[reference.label])
        delta = abs(v1 - v2)
        deltas.append(delta)
        if delta > cutoffs[k]:
            return Verdict(Decision.ADVERSARIAL, k, tuple(deltas), metadata)
    return Verdict(Decision.CLEAN, None, tuple(deltas), metadata)


def first_trigger_indices(deltas: np.ndarray, profile: CalibrationProfile) -> list[int | None]:
    """First step index where each row of a delta matrix exceeds its cutoff."""
    cutoffs = profile.cutoffs()
    fired = deltas > cutoffs[None, :]
    out: list[int | None] = []
    for row in fired:
        hits = np.flatnonzero(row)
        out.append(int(hits[0]) if hits.size else None)
    return out


def save_profile(profile: CalibrationProfile, path) -> None:
    doc = {
        "kind": profile.kind.value,
        "steps": profile.steps,
        "params": list(profile.sched.params),
        "N": profile.multiplier,
        "M": [float(m) for m in profile.means],
        "S": [float(s) for s in profile.stds],
        "sample_count": profile.sample_count,
        "model_checksum": profile.model_checksum,
        "created_with": profile.created_with,
    }
    Path(path).write_bytes(json.dumps(doc, indent=2).encode() + b"\n")


def load_profile(path) -> CalibrationProfile:
    doc = json.loads(Path(path).read_text())
    kind = TransformKind(doc["kind"])
    sched = TransformSchedule(kind, tuple(doc["params"]))
    if sched.steps != doc["steps"]:
        raise ValueError(f"{path}: declared steps {doc['steps']} != params length {sched.steps}")
    return CalibrationProfile(
        kind=kind,
        sched=sched,
        means=np.array(doc["M"], dtype=np.float64),
        stds=np.array(doc["S"], dtype=np.float64),
        multiplier=float(doc["N"]),
        sample_count=int(doc["sample_count"]),
        model_checksum=doc["model_checksum"],
        created_with=doc.get("created_with", {}),
    )
