"""Affine transforms, bilinear warping, and the four step schedules.

Coordinate convention: a point is (x, y) with x the column index and y the
row index, both zero-based. A transform maps points forward as

    x' = a*x + b*y + e
    y' = c*x + d*y + f

which preserves collinearity and ratios of distances along a line. Warping
uses the inverse map: each output pixel is sampled from the input at the
inverse-transformed location with bilinear interpolation.

Rotation, shear and scale are anchored at the image center
((w-1)/2, (h-1)/2); anchoring anywhere else would drag content out of frame
and swamp the confidence-variation signal these transforms exist to probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .image import Image

DET_EPSILON = 1e-9
DEFAULT_STEPS = 60


@dataclass(frozen=True)
class AffineTransform:
    """2x3 affine matrix [[a, b, e], [c, d, f]] in pixel units."""

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def apply(self, x, y):
        """Map point(s) forward; accepts scalars or arrays."""
        return (
            self.a * x + self.b * y + self.e,
            self.c * x + self.d * y + self.f,
        )

    def linear_det(self) -> float:
        return self.a * self.d - self.b * self.c


def identity() -> AffineTransform:
    return AffineTransform(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)


def compose(first: AffineTransform, second: AffineTransform) -> AffineTransform:
    """Transform equivalent to applying ``first`` then ``second``."""
    t1, t2 = first, second
    return AffineTransform(
        a=t2.a * t1.a + t2.b * t1.c,
        b=t2.a * t1.b + t2.b * t1.d,
        c=t2.c * t1.a + t2.d * t1.c,
        d=t2.c * t1.b + t2.d * t1.d,
        e=t2.a * t1.e + t2.b * t1.f + t2.e,
        f=t2.c * t1.e + t2.d * t1.f + t2.f,
    )


def invert(t: AffineTransform) -> AffineTransform:
    det = t.linear_det()
    if abs(det) <= DET_EPSILON:
        raise ValueError(f"transform is not invertible (|det| = {abs(det):g})")
    ia = t.d / det
    ib = -t.b / det
    ic = -t.c / det
    id_ = t.a / det
    return AffineTransform(
        a=ia,
        b=ib,
        c=ic,
        d=id_,
        e=-(ia * t.e + ib * t.f),
        f=-(ic * t.e + id_ * t.f),
    )


def _center(w: int, h: int) -> tuple[float, float]:
    return (w - 1) / 2.0, (h - 1) / 2.0


def _about_center(a: float, b: float, c: float, d: float, w: int, h: int) -> AffineTransform:
    cx, cy = _center(w, h)
    return AffineTransform(
        a, b, c, d,
        e=cx - (a * cx + b * cy),
        f=cy - (c * cx + d * cy),
    )


def rotation_about_center(angle_deg: float, w: int, h: int) -> AffineTransform:
    """Rotation by ``angle_deg`` about the image center."""
    if not math.isfinite(angle_deg):
        raise ValueError("rotation angle must be finite")
    rad = math.radians(angle_deg)
    cos_a, sin_a = math.cos(rad), math.sin(rad)
    return _about_center(cos_a, -sin_a, sin_a, cos_a, w, h)


def shear_about_center(angle_deg: float, w: int, h: int) -> AffineTransform:
    """Horizontal shear: columns shift by tan(angle) per row of offset from center."""
    if abs(angle_deg) >= 90.0:
        raise ValueError(f"shear angle must satisfy |angle| < 90, got {angle_deg}")
    return _about_center(1.0, math.tan(math.radians(angle_deg)), 0.0, 1.0, w, h)


def scale_about_center(factor: float, w: int, h: int) -> AffineTransform:
    """Uniform scaling about the image center; the canvas keeps its size."""
    if not factor > 0.0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    return _about_center(factor, 0.0, 0.0, factor, w, h)


def translation(frac_x: float, frac_y: float, w: int, h: int) -> AffineTransform:
    """Shift by (frac_x * w, frac_y * h) pixels.

    Fractions of magnitude >= 1 are accepted; they move all content out of
    frame, which the late steps of the translate schedule intentionally do.
    """
    return AffineTransform(1.0, 0.0, 0.0, 1.0, frac_x * w, frac_y * h)


def warp_stack(stack: np.ndarray, t: AffineTransform, padding: str = "zero") -> np.ndarray:
    """Warp a (n, h, w, c) float array; inverse-mapped bilinear resampling.

    ``padding`` selects how samples outside the source grid are filled:
    ``"zero"`` contributes 0.0, ``"edge"`` replicates the nearest border
    pixel. Outputs are clamped to [0, 1].
    """
    if padding not in ("zero", "edge"):
        raise ValueError(f"padding must be 'zero' or 'edge', got {padding!r}")
    inv = invert(t)
    n, h, w, c = stack.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    sx, sy = inv.apply(xs, ys)

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    out = np.zeros_like(stack)
    for dx, dy, weight in (
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ):
        cx = x0 + dx
        cy = y0 + dy
        if padding == "zero":
            inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
            weight = weight * inside
        gx = np.clip(cx, 0, w - 1)
        gy = np.clip(cy, 0, h - 1)
        out += weight[None, :, :, None] * stack[:, gy, gx, :]
    return np.clip(out, 0.0, 1.0)


def warp(img: Image, t: AffineTransform, padding: str = "zero") -> Image:
    """Warp one image; same dimensions out, pixels stay in [0, 1]."""
    return Image(warp_stack(img.pixels[None], t, padding)[0])


class TransformKind(Enum):
    ROTATION = "rotation"
    SHEAR = "shear"
    SCALE = "scale"
    TRANSLATE = "translate"


@dataclass(frozen=True)
class TransformSchedule:
    """Per-step transform magnitudes for one kind, strictly increasing."""

    kind: TransformKind
    params: tuple[float, ...]

    def __post_init__(self):
        if len(self.params) < 1:
            raise ValueError("schedule must have at least one step")
        if any(b <= a for a, b in zip(self.params, self.params[1:])):
            raise ValueError("schedule magnitudes must be strictly increasing")

    @property
    def steps(self) -> int:
        return len(self.params)


def schedule(kind: TransformKind, steps: int = DEFAULT_STEPS) -> TransformSchedule:
    """The incremental magnitude sequence probed for each transform kind.

    rotation   0.5 * (k+1) degrees
    shear      1.0 + 0.9 * k degrees
    scale      zoom-out unit 1.0 + 0.05 * (k+1); the warp shrinks by 1/unit
    translate  fraction 0.05 + 0.02 * k of width and height, both axes
    """
    if steps < 1:
        raise ValueError(f"step count must be >= 1, got {steps}")
    ks = np.arange(steps, dtype=np.float64)
    if kind is TransformKind.ROTATION:
        params = 0.5 * (ks + 1.0)
    elif kind is TransformKind.SHEAR:
        params = 1.0 + 0.9 * ks
    elif kind is TransformKind.SCALE:
        params = 1.0 + 0.05 * (ks + 1.0)
    elif kind is TransformKind.TRANSLATE:
        params = 0.05 + 0.02 * ks
    else:
        raise ValueError(f"unknown transform kind: {kind}")
    return TransformSchedule(kind, tuple(float(p) for p in params))


def step_transform(kind: TransformKind, magnitude: float, w: int, h: int) -> AffineTransform:
    """The affine applied at one schedule step of the given magnitude."""
    if kind is TransformKind.ROTATION:
        return rotation_about_center(magnitude, w, h)
    if kind is TransformKind.SHEAR:
        return shear_about_center(magnitude, w, h)
    if kind is TransformKind.SCALE:
        return scale_about_center(1.0 / magnitude, w, h)
    if kind is TransformKind.TRANSLATE:
        return translation(magnitude, magnitude, w, h)
    raise ValueError(f"unknown transform kind: {kind}")
