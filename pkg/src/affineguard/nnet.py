"""Small differentiable softmax classifier with hand-written gradients.

Architecture: flatten -> dense(hidden, ReLU) -> dense(num_classes) ->
softmax. The model stays deliberately tiny; the detection method treats the
classifier as a black box, so all that matters is that it trains to high
accuracy on the shape dataset and exposes exact input gradients for the
attack. Both gradient routines are plain reverse-mode chain rule and are
validated against central finite differences in the test suite.

Training is plain SGD, single-threaded over batches, with every random
choice (init, shuffling, augmentation) drawn from substreams of the config
seed, so a training run is bit-reproducible from (data, config).

Checkpoint format: a JSON document holding layer shapes and metadata plus
the concatenated weights as float32 little-endian, base64-encoded, in the
fixed order w1, b1, w2, b2 (row-major). The model checksum referenced by
calibration profiles is the SHA-256 of that raw weight blob.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .image import Image
from .rng import RandomStream, derive_seed
from .synthdata import LabelledImage
from .transforms import compose, rotation_about_center, scale_about_center, shear_about_center, translation, warp_stack

DEFAULT_HIDDEN = 128
PROB_FLOOR = 1e-12
CHECKPOINT_FORMAT = "affineguard-mlp-v1"

# Substream keys off the training seed.
_INIT_KEY = 1
_SHUFFLE_KEY = 2
_AUGMENT_KEY = 3

# Augmentation component gates and draw ranges. Each view composes an
# independent random subset of the four transform families, so training
# covers pure translations, pure scalings, combined warps and untouched
# views alike; ranges extend past the first steps of every detection
# schedule so clean-image confidence stays stable there.
AUG_GATE_ROTATION = 0.5
AUG_GATE_SHEAR = 0.5
AUG_GATE_SCALE = 0.6
AUG_GATE_TRANSLATE = 0.85
AUG_ROTATION_DEG = 5.0
AUG_SHEAR_DEG = 3.0
AUG_SCALE_LO, AUG_SCALE_HI = 0.8, 1.1
AUG_TRANSLATE_FRAC = 0.12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 25
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class ModelParams:
    """MLP weights; w1 (d_in, hidden), b1 (hidden,), w2 (hidden, classes), b2 (classes,)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    input_shape: tuple[int, int, int]

    def __post_init__(self):
        h, w, c = self.input_shape
        d_in = h * w * c
        if self.w1.shape != (d_in, self.b1.size):
            raise ValueError(f"w1 shape {self.w1.shape} does not match input {d_in} x hidden {self.b1.size}")
        if self.w2.shape != (self.b1.size, self.b2.size):
            raise ValueError(f"w2 shape {self.w2.shape} does not match hidden x classes")
        for name in ("w1", "b1", "w2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def hidden(self) -> int:
        return self.b1.size

    @property
    def num_classes(self) -> int:
        return self.b2.size

    def weight_blob(self) -> bytes:
        """Concatenated float32 little-endian weights in order w1, b1, w2, b2."""
        return b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in (self.w1, self.b1, self.w2, self.b2))

    def checksum(self) -> str:
        return hashlib.sha256(self.weight_blob()).hexdigest()


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    label: int
    confidence: float


@dataclass(frozen=True)
class GradParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def init_params(
    input_shape: tuple[int, int, int],
    num_classes: int,
    hidden: int = DEFAULT_HIDDEN,
    seed: int = 0,
) -> ModelParams:
    """Glorot-uniform weights, zero biases, from the init substream."""
    h, w, c = input_shape
    d_in = h * w * c
    stream = RandomStream(derive_seed(seed, _INIT_KEY))

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        u = stream.uniforms(fan_in * fan_out).reshape(fan_in, fan_out)
        return (2.0 * u - 1.0) * limit

    return ModelParams(
        w1=glorot(d_in, hidden),
        b1=np.zeros(hidden),
        w2=glorot(hidden, num_classes),
        b2=np.zeros(num_classes),
        input_shape=(h, w, c),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _encode(x: np.ndarray) -> np.ndarray:
    # Pixels are zero-centered before the first layer (x -> 2x - 1); with
    # all-positive inputs the first-layer SGD updates are sign-coupled and
    # the pinned learning rate converges too slowly.
    return 2.0 * x - 1.0


def forward_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a (n, d_in) batch of flattened [0, 1] pixels."""
    z1 = _encode(x) @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0)
    return softmax(a1 @ params.w2 + params.b2)


def _flat_input(params: ModelParams, img: Image) -> np.ndarray:
    if img.shape != params.input_shape:
        raise ValueError(f"image shape {img.shape} does not match model input {params.input_shape}")
    return img.flat()


def forward(params: ModelParams, img: Image) -> Prediction:
    probs = forward_batch(params, _flat_input(params, img)[None])[0]
    label = int(np.argmax(probs))
    return Prediction(probs=probs, label=label, confidence=float(probs[label]))


def _check_label(params: ModelParams, y: int) -> None:
    if not 0 <= y < params.num_classes:
        raise ValueError(f"label {y} out of range [0, {params.num_classes})")


def loss(params: ModelParams, img: Image, y: int) -> float:
    """Cross entropy -log p[y], with probabilities floored at 1e-12."""
    _check_label(params, y)
    probs = forward_batch(params, _flat_input(params, img)[None])[0]
    return float(-np.log(max(probs[y], PROB_FLOOR)))


def grad_input(params: ModelParams, img: Image, y: int) -> np.ndarray:
    """d loss / d pixel for every pixel, shaped like the image."""
    _check_label(params, y)
    x = _flat_input(params, img)
    z1 = _encode(x) @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0)
    probs = softmax(a1 @ params.w2 + params.b2)
    dz2 = probs.copy()
    dz2[y] -= 1.0
    dz1 = (params.w2 @ dz2) * (z1 > 0.0)
    # d encode / d pixel = 2
    return (2.0 * (params.w1 @ dz1)).reshape(img.shape)


def grad_params(params: ModelParams, batch: list[LabelledImage]) -> GradParams:
    """Mean cross-entropy gradient over a non-empty batch."""
    if not batch:
        raise ValueError("batch must not be empty")
    x = np.stack([_flat_input(params, item.image) for item in batch])
    labels = np.array([item.label for item in batch])
    for y in labels:
        _check_label(params, int(y))
    return _grad_params_arrays(params, x, labels)[0]


def _grad_params_arrays(params: ModelParams, x: np.ndarray, labels: np.ndarray) -> tuple[GradParams, float]:
    n = x.shape[0]
    xe = _encode(x)
    z1 = xe @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0)
    probs = softmax(a1 @ params.w2 + params.b2)
    mean_loss = float(np.mean(-np.log(np.maximum(probs[np.arange(n), labels], PROB_FLOOR))))
    dz2 = probs
    dz2[np.arange(n), labels] -= 1.0
    dz2 /= n
    dz1 = (dz2 @ params.w2.T) * (z1 > 0.0)
    grads = GradParams(
        w1=xe.T @ dz1,
        b1=dz1.sum(axis=0),
        w2=a1.T @ dz2,
        b2=dz2.sum(axis=0),
    )
    return grads, mean_loss


def _augment_batch(stack: np.ndarray, stream: RandomStream) -> np.ndarray:
    """Compose an independent random subset of small affines per image.

    Nine stream draws per image (four gates, then rotation, shear, scale,
    translate x/y magnitudes) regardless of gate outcomes, so consumption
    stays uniform."""
    n, h, w, _ = stack.shape
    draws = stream.uniforms(9 * n).reshape(n, 9)
    out = np.empty_like(stack)
    for i in range(n):
        t = None
        if draws[i, 0] < AUG_GATE_ROTATION:
            t = rotation_about_center((2.0 * draws[i, 4] - 1.0) * AUG_ROTATION_DEG, w, h)
        if draws[i, 1] < AUG_GATE_SHEAR:
            s = shear_about_center((2.0 * draws[i, 5] - 1.0) * AUG_SHEAR_DEG, w, h)
            t = s if t is None else compose(t, s)
        if draws[i, 2] < AUG_GATE_SCALE:
            s = scale_about_center(AUG_SCALE_LO + (AUG_SCALE_HI - AUG_SCALE_LO) * draws[i, 6], w, h)
            t = s if t is None else compose(t, s)
        if draws[i, 3] < AUG_GATE_TRANSLATE:
            fx = (2.0 * draws[i, 7] - 1.0) * AUG_TRANSLATE_FRAC
            # half the shifts ride the exact (+x, +y) diagonal the
            # translate schedule probes; the rest are independent
            fy = fx if draws[i, 8] < 0.5 else (2.0 * draws[i, 8] - 1.0) * AUG_TRANSLATE_FRAC
            s = translation(fx, fy, w, h)
            t = s if t is None else compose(t, s)
        out[i] = stack[i] if t is None else warp_stack(stack[i : i + 1], t)[0]
    return out


def train(
    data: list[LabelledImage],
    cfg: TrainConfig,
    hidden: int = DEFAULT_HIDDEN,
    epoch_losses: list[float] | None = None,
) -> ModelParams:
    """SGD training; deterministic given (data, cfg). Returns final params.

    If ``epoch_losses`` is passed, the example-weighted mean training loss of
    each epoch is appended to it.
    """
    if not data:
        raise ValueError("training data must not be empty")
    shape = data[0].image.shape
    num_classes = max(item.label for item in data) + 1
    params = init_params(shape, num_classes, hidden=hidden, seed=cfg.seed)

    stack = np.stack([item.image.pixels for item in data])
    labels = np.array([item.label for item in data])
    shuffle_stream = RandomStream(derive_seed(cfg.seed, _SHUFFLE_KEY))
    augment_stream = RandomStream(derive_seed(cfg.seed, _AUGMENT_KEY))

    n = len(data)
    for _ in range(cfg.epochs):
        order = list(range(n))
        shuffle_stream.shuffle(order)
        total_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = stack[idx]
            if cfg.augment:
                batch = _augment_batch(batch, augment_stream)
            x = batch.reshape(len(idx), -1)
            grads, batch_loss = _grad_params_arrays(params, x, labels[idx])
            total_loss += batch_loss * len(idx)
            params.w1 -= cfg.learning_rate * grads.w1
            params.b1 -= cfg.learning_rate * grads.b1
            params.w2 -= cfg.learning_rate * grads.w2
            params.b2 -= cfg.learning_rate * grads.b2
        if epoch_losses is not None:
            epoch_losses.append(total_loss / n)
    return params


def evaluate_accuracy(params: ModelParams, data: list[LabelledImage]) -> float:
    """Fraction of argmax-correct predictions."""
    if not data:
        raise ValueError("evaluation data must not be empty")
    x = np.stack([_flat_input(params, item.image) for item in data])
    labels = np.array([item.label for item in data])
    predicted = np.argmax(forward_batch(params, x), axis=1)
    return float(np.mean(predicted == labels))


@dataclass
class Checkpoint:
    params: ModelParams
    seed: int | None = None
    train_config: dict | None = field(default=None)


def save_checkpoint(params: ModelParams, path, train_config: TrainConfig | None = None) -> str:
    """Write the checkpoint JSON; returns the weight-blob checksum."""
    blob = params.weight_blob()
    checksum = hashlib.sha256(blob).hexdigest()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "input_shape": list(params.input_shape),
        "hidden": params.hidden,
        "num_classes": params.num_classes,
        "train_config": asdict(train_config) if train_config is not None else None,
        "layers": [
            ["w1", list(params.w1.shape)],
            ["b1", list(params.b1.shape)],
            ["w2", list(params.w2.shape)],
            ["b2", list(params.b2.shape)],
        ],
        "weights_sha256": checksum,
        "weights_b64": base64.b64encode(blob).decode("ascii"),
    }
    Path(path).write_bytes(json.dumps(doc, indent=2).encode() + b"\n")
    return checksum


def load_checkpoint(path) -> Checkpoint:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {doc.get('format')!r}")
    blob = base64.b64decode(doc["weights_b64"])
    if hashlib.sha256(blob).hexdigest() != doc["weights_sha256"]:
        raise ValueError(f"{path}: weight blob checksum mismatch")
    shapes = {name: tuple(shape) for name, shape in doc["layers"]}
    flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    arrays = {}
    offset = 0
    for name in ("w1", "b1", "w2", "b2"):
        size = int(np.prod(shapes[name]))
        arrays[name] = flat[offset : offset + size].reshape(shapes[name])
        offset += size
    if offset != flat.size:
        raise ValueError(f"{path}: weight blob has {flat.size} values, layers need {offset}")
    train_config = doc.get("train_config")
    params = ModelParams(input_shape=tuple(doc["input_shape"]), **arrays)
    return Checkpoint(params=params, seed=(train_config or {}).get("seed"), train_config=train_config)
