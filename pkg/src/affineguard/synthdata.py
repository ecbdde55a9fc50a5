"""Deterministic procedural shape dataset.

Acts as the labelled image corpus the rest of the pipeline trains and
calibrates on. Each class index renders a distinct parametric pattern
(discs, polygons, crosses, rings, stripe families, gradients) at a
position/size/color drawn from a per-image substream, plus clamped Gaussian
pixel noise. Image ``(label, index)`` draws from the substream seeded with
``derive_seed(spec.seed, label, index)``, so generation is order-independent
and two runs of the same spec are bit-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .image import Image, read_netpbm, write_netpbm
from .rng import RandomStream, derive_seed

MAX_CLASSES = 15
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int = 15
    per_class: int = 100
    image_size: int = 32
    seed: int = 0
    noise_std: float = 0.05

    def __post_init__(self):
        if not 2 <= self.num_classes <= MAX_CLASSES:
            raise ValueError(f"num_classes must be in [2, {MAX_CLASSES}], got {self.num_classes}")
        if self.per_class < 1:
            raise ValueError(f"per_class must be >= 1, got {self.per_class}")
        if self.image_size < 16:
            raise ValueError(f"image_size must be >= 16, got {self.image_size}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class LabelledImage:
    image: Image
    label: int

    def __post_init__(self):
        if self.label < 0:
            raise ValueError(f"label must be >= 0, got {self.label}")


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij")
    return xs, ys


_EDGE_PX = 2.0  # antialiasing width; soft edges keep bilinear warps near-linear


def _inside(signed_dist: np.ndarray) -> np.ndarray:
    """Soft coverage from a signed distance field (negative inside)."""
    return np.clip(0.5 - signed_dist / _EDGE_PX, 0.0, 1.0)


def _soft_wave(theta: np.ndarray) -> np.ndarray:
    """sin sign wave with smoothed zero crossings."""
    return np.clip(0.5 + np.sin(theta) / 0.6, 0.0, 1.0)


def _render_pattern(label: int, size: int, stream: RandomStream) -> np.ndarray:
    # Fixed draw order for every class: bg rgb, fg rgb, center jitter x/y,
    # extent scale, phase. Unused draws still advance the stream so the
    # consumption pattern stays uniform.
    draws = stream.uniforms(10)
    bg = 0.02 + 0.18 * draws[0:3]
    fg = 0.70 + 0.30 * draws[3:6]
    cx = (size - 1) / 2.0 + (draws[6] - 0.5) * 0.10 * size
    cy = (size - 1) / 2.0 + (draws[7] - 0.5) * 0.10 * size
    extent = (0.26 + 0.10 * draws[8]) * size
    phase = (draws[9] - 0.5) * 0.6

    xs, ys = _grid(size)
    dx = xs - cx
    dy = ys - cy
    r = np.hypot(dx, dy)

    if label == 0:  # filled disc
        t = _inside(r - extent)
    elif label == 1:  # filled square
        t = _inside(np.maximum(np.abs(dx), np.abs(dy)) - extent)
    elif label == 2:  # filled upward triangle
        top = extent * 1.2
        sd = np.maximum(-(dy + top), dy - 0.6 * top)
        sd = np.maximum(sd, np.abs(dx) - 0.62 * (dy + top))
        t = _inside(sd)
    elif label == 3:  # plus-shaped cross
        bar = extent * 0.24
        arm = extent * 1.25
        sd_h = np.maximum(np.abs(dx) - bar, np.abs(dy) - arm)
        sd_v = np.maximum(np.abs(dy) - bar, np.abs(dx) - arm)
        t = _inside(np.minimum(sd_h, sd_v))
    elif label == 4:  # thin ring
        t = _inside(np.maximum(r - extent, extent * 0.68 - r))
    elif label == 5:  # horizontal stripes, low frequency
        t = _soft_wave(2.0 * np.pi * 2.5 * ys / size + phase)
    elif label == 6:  # vertical stripes, low frequency
        t = _soft_wave(2.0 * np.pi * 2.5 * xs / size + phase)
    elif label == 7:  # diagonal stripes
        t = _soft_wave(2.0 * np.pi * 2.0 * (xs + ys) / size + phase)
    elif label == 8:  # checkerboard as a smooth XOR of two square waves
        cells = 5.0
        u = _soft_wave(np.pi * cells * xs / size + phase)
        v = _soft_wave(np.pi * cells * ys / size + phase)
        t = u * v + (1.0 - u) * (1.0 - v)
    elif label == 9:  # horizontal gradient
        t = xs / (size - 1)
    elif label == 10:  # vertical gradient
        t = ys / (size - 1)
    elif label == 11:  # radial gradient, bright center
        t = np.clip(1.0 - r / (0.72 * size), 0.0, 1.0)
    elif label == 12:  # diagonal cross (X)
        bar = extent * 0.26
        arm = extent * 1.25
        box = np.maximum(np.abs(dx), np.abs(dy)) - arm
        sd_a = np.maximum(np.abs(dx - dy) * 0.7071 - bar, box)
        sd_b = np.maximum(np.abs(dx + dy) * 0.7071 - bar, box)
        t = _inside(np.minimum(sd_a, sd_b))
    elif label == 13:  # hollow square frame, larger and thinner than the ring
        edge = np.maximum(np.abs(dx), np.abs(dy))
        t = _inside(np.maximum(edge - extent * 1.3, extent * 0.9 - edge))
    elif label == 14:  # hollow diamond outline
        taxi = (np.abs(dx) + np.abs(dy)) * 0.7071
        t = _inside(np.maximum(taxi - extent * 1.06, extent * 0.67 - taxi))
    else:
        raise ValueError(f"no pattern defined for label {label}")

    return bg[None, None, :] + (fg - bg)[None, None, :] * t[:, :, None]


def render_image(spec: DatasetSpec, label: int, index: int) -> Image:
    """Render one dataset image; pure function of (spec, label, index)."""
    stream = RandomStream(derive_seed(spec.seed, label, index))
    canvas = _render_pattern(label, spec.image_size, stream)
    if spec.noise_std > 0:
        noise = stream.normals(canvas.size, std=spec.noise_std).reshape(canvas.shape)
        canvas = canvas + noise
    return Image(np.clip(canvas, 0.0, 1.0))


def generate(spec: DatasetSpec) -> list[LabelledImage]:
    """All spec.num_classes * spec.per_class images, ordered by (label, index)."""
    return [
        LabelledImage(render_image(spec, label, index), label)
        for label in range(spec.num_classes)
        for index in range(spec.per_class)
    ]


def split(
    data: list[LabelledImage], train_fraction: float, seed: int
) -> tuple[list[LabelledImage], list[LabelledImage]]:
    """Deterministic stratified split; per-class counts are round(frac * n)."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    by_label: dict[int, list[LabelledImage]] = {}
    for item in data:
        by_label.setdefault(item.label, []).append(item)
    train: list[LabelledImage] = []
    test: list[LabelledImage] = []
    for label in sorted(by_label):
        group = list(by_label[label])
        RandomStream(derive_seed(seed, label)).shuffle(group)
        n_train = int(train_fraction * len(group) + 0.5)
        train.extend(group[:n_train])
        test.extend(group[n_train:])
    return train, test


def stratified_head(data: list[LabelledImage], count: int) -> list[LabelledImage]:
    """First ``count`` items taken round-robin across labels, preserving order."""
    if count >= len(data):
        return list(data)
    by_label: dict[int, list[LabelledImage]] = {}
    for item in data:
        by_label.setdefault(item.label, []).append(item)
    groups = [by_label[label] for label in sorted(by_label)]
    picked: list[LabelledImage] = []
    depth = 0
    while len(picked) < count:
        advanced = False
        for group in groups:
            if depth < len(group):
                picked.append(group[depth])
                advanced = True
                if len(picked) == count:
                    break
        if not advanced:
            break
        depth += 1
    return picked


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_dataset(data: list[LabelledImage], root, spec: DatasetSpec | None = None) -> dict:
    """Write ``<root>/<label>/<index>.ppm`` plus a manifest with checksums."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    counters: dict[int, int] = {}
    entries = []
    for item in data:
        idx = counters.get(item.label, 0)
        counters[item.label] = idx + 1
        rel = f"{item.label}/{idx:04d}.ppm"
        path = root / rel
        path.parent.mkdir(exist_ok=True)
        write_netpbm(item.image, path)
        entries.append({"path": rel, "label": item.label, "sha256": _sha256(path)})
    manifest = {
        "spec": asdict(spec) if spec is not None else None,
        "count": len(entries),
        "files": entries,
    }
    (root / MANIFEST_NAME).write_bytes(json.dumps(manifest, indent=2).encode() + b"\n")
    return manifest


def load_dataset(root) -> tuple[list[LabelledImage], dict]:
    """Load a dataset directory in manifest order, verifying checksums."""
    root = Path(root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise ValueError(f"{root}: no {MANIFEST_NAME} found")
    manifest = json.loads(manifest_path.read_text())
    data = []
    for entry in manifest["files"]:
        path = root / entry["path"]
        digest = _sha256(path)
        if digest != entry["sha256"]:
            raise ValueError(f"{path}: checksum mismatch (file corrupted or replaced)")
        data.append(LabelledImage(read_netpbm(path), entry["label"]))
    return data, manifest


def manifest_checksums(manifest: dict) -> set[str]:
    return {entry["sha256"] for entry in manifest.get("files", [])}
