"""Fast gradient sign attack and epsilon-sweep evaluation.

The untargeted attack perturbs every pixel by epsilon times the sign of
the loss gradient with respect to that pixel, computed at the true label,
then clamps back into [0, 1]. Pixels with exactly zero gradient are left
untouched (sign(0) = 0). Before clamping, every per-pixel delta is exactly
-epsilon, 0, or +epsilon, which bounds the max-norm of the perturbation by
epsilon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import Image, read_mten, write_mten
from .nnet import ModelParams, evaluate_accuracy, forward, grad_input
from .synthdata import LabelledImage

DEFAULT_EPSILON = 0.01
PAIRS_MANIFEST = "pairs.json"


def _check_epsilon(eps: float) -> None:
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"epsilon must be in (0, 1], got {eps}")


@dataclass(frozen=True)
class ExamplePair:
    clean: LabelledImage
    adversarial: Image
    epsilon: float
    # float32 round-trips through MTEN widen the bound by one float32 ulp
    atol: float = 1e-9

    def __post_init__(self):
        _check_epsilon(self.epsilon)
        gap = np.max(np.abs(self.adversarial.pixels - self.clean.image.pixels))
        if gap > self.epsilon + self.atol:
            raise ValueError(f"perturbation {gap:g} exceeds epsilon {self.epsilon:g}")


def fgsm(params: ModelParams, img: Image, y: int, eps: float) -> Image:
    """clamp(img + eps * sign(grad_input), 0, 1)."""
    _check_epsilon(eps)
    perturbation = eps * np.sign(grad_input(params, img, y))
    return Image(np.clip(img.pixels + perturbation, 0.0, 1.0))


def epsilon_sweep(
    params: ModelParams, data: list[LabelledImage], eps_list: list[float]
) -> list[tuple[float, float]]:
    """(epsilon, accuracy) per attack strength, led by the clean-accuracy row."""
    if any(b <= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly increasing")
    for eps in eps_list:
        _check_epsilon(eps)
    rows = [(0.0, evaluate_accuracy(params, data))]
    for eps in eps_list:
        attacked = [
            LabelledImage(fgsm(params, item.image, item.label, eps), item.label) for item in data
        ]
        rows.append((eps, evaluate_accuracy(params, attacked)))
    return rows


def build_pairs(
    params: ModelParams,
    data: list[LabelledImage],
    eps: float = DEFAULT_EPSILON,
    n: int | None = None,
) -> list[ExamplePair]:
    """FGSM counterparts for the first n images, in dataset order."""
    if n is None:
        n = len(data)
    if n > len(data):
        raise ValueError(f"requested {n} pairs from {len(data)} images")
    return [
        ExamplePair(clean=item, adversarial=fgsm(params, item.image, item.label, eps), epsilon=eps)
        for item in data[:n]
    ]


def flip_rate(params: ModelParams, pairs: list[ExamplePair]) -> float:
    """Fraction of pairs whose adversarial argmax differs from the clean argmax."""
    if not pairs:
        raise ValueError("pair set must not be empty")
    flips = sum(
        forward(params, p.adversarial).label != forward(params, p.clean.image).label for p in pairs
    )
    return flips / len(pairs)


def save_pairs(pairs: list[ExamplePair], root, params: ModelParams | None = None) -> dict:
    """Write clean/adversarial MTEN files side by side plus pairs.json.

    Passing the model fills in per-pair predicted labels and flip flags.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, pair in enumerate(pairs):
        clean_rel = f"{i:04d}_clean.mten"
        adv_rel = f"{i:04d}_adv.mten"
        write_mten(pair.clean.image, root / clean_rel)
        write_mten(pair.adversarial, root / adv_rel)
        entry = {
            "index": i,
            "clean": clean_rel,
            "adversarial": adv_rel,
            "label": pair.clean.label,
        }
        if params is not None:
            clean_pred = forward(params, pair.clean.image).label
            adv_pred = forward(params, pair.adversarial).label
            entry["clean_pred"] = clean_pred
            entry["adv_pred"] = adv_pred
            entry["flipped"] = adv_pred != clean_pred
        entries.append(entry)
    manifest = {
        "epsilon": pairs[0].epsilon if pairs else None,
        "count": len(entries),
        "pairs": entries,
    }
    (root / PAIRS_MANIFEST).write_bytes(json.dumps(manifest, indent=2).encode() + b"\n")
    return manifest


def load_pairs(root) -> tuple[list[ExamplePair], dict]:
    root = Path(root)
    manifest_path = root / PAIRS_MANIFEST
    if not manifest_path.exists():
        raise ValueError(f"{root}: no {PAIRS_MANIFEST} found")
    manifest = json.loads(manifest_path.read_text())
    eps = manifest["epsilon"]
    pairs = []
    for entry in manifest["pairs"]:
        clean = LabelledImage(read_mten(root / entry["clean"]), entry["label"])
        adv = read_mten(root / entry["adversarial"])
        pairs.append(ExamplePair(clean=clean, adversarial=adv, epsilon=eps, atol=1e-9 + 2.0**-23))
    return pairs, manifest
