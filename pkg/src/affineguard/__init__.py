"""Adversarial image detection via confidence variation under affine transforms.

The package trains a small softmax classifier on a synthetic shape dataset,
crafts fast-gradient-sign adversarial examples against it, calibrates how
much a clean image's prediction confidence varies under incremental affine
transforms (rotation, shear, scale, translation), and judges unseen images
by OR-ing a per-step threshold test over the transform schedule.
"""

__version__ = "0.1.0"

from .attack import ExamplePair, build_pairs, epsilon_sweep, fgsm
from .image import Image, read_image, read_mten, read_netpbm, write_mten, write_netpbm
from .metamorph import (
    CalibrationProfile,
    Decision,
    VariationMeasurement,
    Verdict,
    calibrate,
    detect,
    measure_variation,
    mr_rotation,
    mr_scale,
    mr_shear,
    mr_translate,
)
from .nnet import ModelParams, Prediction, TrainConfig, evaluate_accuracy, forward, grad_input, grad_params, train
from .synthdata import DatasetSpec, LabelledImage, generate, split
from .transforms import (
    AffineTransform,
    TransformKind,
    TransformSchedule,
    compose,
    identity,
    rotation_about_center,
    scale_about_center,
    schedule,
    shear_about_center,
    step_transform,
    translation,
    warp,
)

__all__ = [
    "__version__",
    "AffineTransform",
    "CalibrationProfile",
    "DatasetSpec",
    "Decision",
    "ExamplePair",
    "Image",
    "LabelledImage",
    "ModelParams",
    "Prediction",
    "TrainConfig",
    "TransformKind",
    "TransformSchedule",
    "VariationMeasurement",
    "Verdict",
    "build_pairs",
    "calibrate",
    "compose",
    "detect",
    "epsilon_sweep",
    "evaluate_accuracy",
    "fgsm",
    "forward",
    "generate",
    "grad_input",
    "grad_params",
    "identity",
    "measure_variation",
    "mr_rotation",
    "mr_scale",
    "mr_shear",
    "mr_translate",
    "read_image",
    "read_mten",
    "read_netpbm",
    "rotation_about_center",
    "scale_about_center",
    "schedule",
    "shear_about_center",
    "split",
    "step_transform",
    "train",
    "translation",
    "warp",
    "write_mten",
    "write_netpbm",
]
