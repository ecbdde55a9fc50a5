"""Detector evaluation harness and report/summary emitters.

Produces three plot-ready artifacts, each exportable as deterministic CSV
or JSON bytes:

* :class:`SummaryStats` — mean/std/min/quartiles/max of a variation sample,
* :class:`RetentionCurve` — per-magnitude label retention of clean and
  adversarial sets (how often the warped argmax still equals the reference
  label),
* :class:`DetectionReport` — clean/adversarial/overall detection accuracy
  for every iteration budget max_steps = 1..K.

Report accuracies are percentages. Overall accuracy is the unweighted mean
of the clean and adversarial columns when the two sets are equal-sized and
example-weighted otherwise. The OR rule makes the adversarial column
non-decreasing and the clean column non-increasing in max_steps; both are
asserted on every report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import Image
from .metamorph import CalibrationProfile, delta_profiles, first_trigger_indices, sample_mean_std
from .nnet import ModelParams, forward_batch
from .transforms import TransformKind, schedule, step_transform, warp_stack

# Published reference accuracies for the four relations on the original
# large-scale setup; emitted for comparison only, never recomputed here.
REFERENCE_ACCURACY = {
    "rotation": {"clean": 97.0, "adversarial": 79.3, "overall": 88.15},
    "shear": {"clean": 100.0, "adversarial": 90.0, "overall": 95.0},
    "scale": {"clean": 100.0, "adversarial": 85.3, "overall": 92.65},
    "translate": {"clean": 100.0, "adversarial": 93.7, "overall": 96.85},
}
REFERENCE_LABEL = "paper (not reproduced)"


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    minimum: float
    p25: float
    p50: float
    p75: float
    maximum: float


def summarize(deltas) -> SummaryStats:
    """Descriptive statistics with linear-interpolation quartiles."""
    values = np.asarray(deltas, dtype=np.float64)
    if values.size < 2:
        raise ValueError("summarize needs at least 2 values")
    mean, std = sample_mean_std(values)
    p25, p50, p75 = np.percentile(values, [25.0, 50.0, 75.0], method="linear")
    return SummaryStats(
        mean=float(mean),
        std=float(std),
        minimum=float(values.min()),
        p25=float(p25),
        p50=float(p50),
        p75=float(p75),
        maximum=float(values.max()),
    )


@dataclass
class RetentionCurve:
    """Per-magnitude percentage of images whose argmax survives the warp."""

    kind: TransformKind
    magnitudes: list[float]
    clean_retention: list[float]
    adv_retention: list[float]


def _retention(params: ModelParams, stack: np.ndarray, kind: TransformKind, magnitudes) -> list[float]:
    n, h, w, _ = stack.shape
    reference = np.argmax(forward_batch(params, stack.reshape(n, -1)), axis=1)
    out = []
    for magnitude in magnitudes:
        t = step_transform(kind, magnitude, w, h)
        warped_labels = np.argmax(forward_batch(params, warp_stack(stack, t).reshape(n, -1)), axis=1)
        out.append(100.0 * float(np.mean(warped_labels == reference)))
    return out


def accuracy_vs_magnitude(
    params: ModelParams,
    clean_images: list[Image],
    adv_images: list[Image],
    kind: TransformKind,
    steps: int = 60,
) -> RetentionCurve:
    """Label-retention curves over the schedule, one row per step."""
    if not clean_images or not adv_images:
        raise ValueError("clean and adversarial sets must not be empty")
    magnitudes = list(schedule(kind, steps).params)
    clean_stack = np.stack([img.pixels for img in clean_images])
    adv_stack = np.stack([img.pixels for img in adv_images])
    return RetentionCurve(
        kind=kind,
        magnitudes=magnitudes,
        clean_retention=_retention(params, clean_stack, kind, magnitudes),
        adv_retention=_retention(params, adv_stack, kind, magnitudes),
    )


@dataclass
class StatTrends:
    """Per-step variation mean/std for clean and adversarial sets."""

    kind: TransformKind
    magnitudes: list[float]
    clean_mean: np.ndarray
    clean_std: np.ndarray
    adv_mean: np.ndarray
    adv_std: np.ndarray


def stat_trends(
    params: ModelParams,
    clean_images: list[Image],
    adv_images: list[Image],
    kind: TransformKind,
    steps: int = 60,
) -> StatTrends:
    if not clean_images or not adv_images:
        raise ValueError("clean and adversarial sets must not be empty")
    clean_mean, clean_std = sample_mean_std(delta_profiles(params, clean_images, kind, steps))
    adv_mean, adv_std = sample_mean_std(delta_profiles(params, adv_images, kind, steps))
    return StatTrends(
        kind=kind,
        magnitudes=list(schedule(kind, steps).params),
        clean_mean=clean_mean,
        clean_std=clean_std,
        adv_mean=adv_mean,
        adv_std=adv_std,
    )


@dataclass
class DetectionReport:
    """Detector accuracy at every iteration budget; the last row is the
    full-schedule operating point."""

    kind: TransformKind
    rows: list[tuple[int, float, float, float]]
    profile_checksum: str
    n_clean: int
    n_adv: int

    @property
    def final(self) -> tuple[int, float, float, float]:
        return self.rows[-1]


def evaluate_detector(
    params: ModelParams,
    profile: CalibrationProfile,
    clean_images: list[Image],
    adv_images: list[Image],
    calibration_checksums: set[str] | None = None,
    eval_checksums: set[str] | None = None,
) -> DetectionReport:
    """Run the detector over both sets at every max_steps budget.

    When both checksum sets are supplied, any overlap between evaluation
    images and the calibration set is rejected.
    """
    if not clean_images or not adv_images:
        raise ValueError("clean and adversarial sets must not be empty")
    if calibration_checksums and eval_checksums:
        overlap = calibration_checksums & eval_checksums
        if overlap:
            raise ValueError(f"evaluation set overlaps calibration set ({len(overlap)} shared images)")
    if profile.model_checksum != params.checksum():
        raise ValueError("profile was calibrated for a different model")

    steps = profile.steps
    clean_trigger = first_trigger_indices(
        delta_profiles(params, clean_images, profile.kind, steps), profile
    )
    adv_trigger = first_trigger_indices(
        delta_profiles(params, adv_images, profile.kind, steps), profile
    )

    n_clean, n_adv = len(clean_images), len(adv_images)
    rows = []
    for m in range(1, steps + 1):
        clean_ok = sum(1 for t in clean_trigger if t is None or t >= m)
        adv_ok = sum(1 for t in adv_trigger if t is not None and t < m)
        clean_acc = 100.0 * clean_ok / n_clean
        adv_acc = 100.0 * adv_ok / n_adv
        if n_clean == n_adv:
            overall = (clean_acc + adv_acc) / 2.0
        else:
            overall = 100.0 * (clean_ok + adv_ok) / (n_clean + n_adv)
        rows.append((m, clean_acc, adv_acc, overall))

    for (_, c0, a0, _), (_, c1, a1, _) in zip(rows, rows[1:]):
        if a1 < a0 or c1 > c0:
            raise RuntimeError("OR-rule monotonicity violated in report rows")
    return DetectionReport(
        kind=profile.kind,
        rows=rows,
        profile_checksum=profile.model_checksum,
        n_clean=n_clean,
        n_adv=n_adv,
    )


def _csv_bytes(header: list[str], rows: list[list]) -> bytes:
    lines = [",".join(header)]
    lines.extend(",".join(str(v) for v in row) for row in rows)
    return ("\n".join(lines) + "\n").encode()


def _report_csv(report: DetectionReport) -> bytes:
    return _csv_bytes(
        ["max_steps", "clean_acc", "adv_acc", "overall"],
        [list(row) for row in report.rows],
    )


def _report_json(report: DetectionReport) -> dict:
    last = report.final
    return {
        "kind": report.kind.value,
        "profile_checksum": report.profile_checksum,
        "n_clean": report.n_clean,
        "n_adv": report.n_adv,
        "rows": [
            {"max_steps": m, "clean_acc": c, "adv_acc": a, "overall": o}
            for m, c, a, o in report.rows
        ],
        "final": {"max_steps": last[0], "clean_acc": last[1], "adv_acc": last[2], "overall": last[3]},
    }


def _stats_csv(stats: SummaryStats) -> bytes:
    return _csv_bytes(
        ["mean", "std", "min", "p25", "p50", "p75", "max"],
        [[stats.mean, stats.std, stats.minimum, stats.p25, stats.p50, stats.p75, stats.maximum]],
    )


def _stats_json(stats: SummaryStats) -> dict:
    return {
        "mean": stats.mean,
        "std": stats.std,
        "min": stats.minimum,
        "p25": stats.p25,
        "p50": stats.p50,
        "p75": stats.p75,
        "max": stats.maximum,
    }


def _curve_csv(curve: RetentionCurve) -> bytes:
    rows = [[0.0, 100.0, 100.0]]
    rows.extend(
        [m, c, a]
        for m, c, a in zip(curve.magnitudes, curve.clean_retention, curve.adv_retention)
    )
    return _csv_bytes(["magnitude", "clean_retention", "adv_retention"], rows)


def _curve_json(curve: RetentionCurve) -> dict:
    return {
        "kind": curve.kind.value,
        "includes_virtual_zero_row": True,
        "rows": [{"magnitude": 0.0, "clean_retention": 100.0, "adv_retention": 100.0}]
        + [
            {"magnitude": m, "clean_retention": c, "adv_retention": a}
            for m, c, a in zip(curve.magnitudes, curve.clean_retention, curve.adv_retention)
        ],
    }


def export(obj, fmt: str, path) -> None:
    """Write a report, stats or curve as CSV or JSON; identical inputs give
    identical bytes."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    if isinstance(obj, DetectionReport):
        payload = _report_csv(obj) if fmt == "csv" else _json_bytes(_report_json(obj))
    elif isinstance(obj, SummaryStats):
        payload = _stats_csv(obj) if fmt == "csv" else _json_bytes(_stats_json(obj))
    elif isinstance(obj, RetentionCurve):
        payload = _curve_csv(obj) if fmt == "csv" else _json_bytes(_curve_json(obj))
    else:
        raise ValueError(f"cannot export object of type {type(obj).__name__}")
    path = Path(path)
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc


def _json_bytes(doc: dict) -> bytes:
    return json.dumps(doc, indent=2).encode() + b"\n"


def reference_block_csv() -> bytes:
    """The published reference accuracies, labelled as not reproduced."""
    rows = [
        [kind, REFERENCE_LABEL, vals["clean"], vals["adversarial"], vals["overall"]]
        for kind, vals in REFERENCE_ACCURACY.items()
    ]
    return _csv_bytes(["transformation", "source", "clean_acc", "adv_acc", "overall"], rows)
