"""End-to-end run: generate, train, attack, calibrate, evaluate.

Everything downstream of the config is deterministic: the dataset comes
from the derived dataset seed, training from the derived training seed,
and all reports are produced from the reloaded on-disk checkpoint so the
saved artifacts and the profile checksums refer to the same weights.

Per-transform calibration/evaluation tasks are independent and may run on
a small thread pool (``jobs``); results are keyed by kind, so the output
bytes do not depend on scheduling.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import attack, evalrep, metamorph, nnet, synthdata
from .config import SPLIT_SEED_KEY, PipelineConfig
from .image import Image, netpbm_bytes
from .rng import derive_seed

logger = logging.getLogger("affineguard")


def image_checksum(img: Image) -> str:
    """SHA-256 of the image's netpbm serialization; matches dataset manifests."""
    return hashlib.sha256(netpbm_bytes(img)).hexdigest()


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run the full flow; returns the summary written to the reports dir."""
    logger.info("generating dataset: %d classes x %d images", cfg.dataset.num_classes, cfg.dataset.per_class)
    data = synthdata.generate(cfg.dataset)
    train_set, test_set = synthdata.split(data, cfg.train_fraction, derive_seed(cfg.seed, SPLIT_SEED_KEY))

    data_dir = Path(cfg.paths.data_dir)
    synthdata.save_dataset(train_set, data_dir / "train", cfg.dataset)
    synthdata.save_dataset(test_set, data_dir / "test", cfg.dataset)

    logger.info("training: %d epochs on %d images", cfg.train.epochs, len(train_set))
    params = nnet.train(train_set, cfg.train, hidden=cfg.hidden)
    Path(cfg.paths.checkpoint).parent.mkdir(parents=True, exist_ok=True)
    nnet.save_checkpoint(params, cfg.paths.checkpoint, cfg.train)
    params = nnet.load_checkpoint(cfg.paths.checkpoint).params
    test_accuracy = nnet.evaluate_accuracy(params, test_set)
    logger.info("test accuracy: %.4f", test_accuracy)

    logger.info("building %d attack pairs at epsilon %g", len(test_set), cfg.attack_epsilon)
    pairs = attack.build_pairs(params, test_set, cfg.attack_epsilon)
    attack.save_pairs(pairs, data_dir / "pairs", params)
    pair_flip_rate = attack.flip_rate(params, pairs)
    logger.info("attack flip rate: %.4f", pair_flip_rate)

    calibration_set = synthdata.stratified_head(train_set, cfg.calibration_size)
    calibration_checksums = [image_checksum(item.image) for item in calibration_set]
    clean_eval = [item.image for item in test_set]
    adv_eval = [pair.adversarial for pair in pairs]
    eval_checksums = {image_checksum(img) for img in clean_eval + adv_eval}

    profiles_dir = Path(cfg.paths.profiles_dir)
    reports_dir = Path(cfg.paths.reports_dir)
    profiles_dir.mkdir(parents=True, exist_ok=True)
    reports_dir.mkdir(parents=True, exist_ok=True)

    def run_kind(kind) -> tuple[str, tuple[int, float, float, float]]:
        profile = metamorph.calibrate(
            params,
            calibration_set,
            kind,
            steps=cfg.steps,
            multiplier=cfg.multiplier,
            created_with={
                "eps": cfg.attack_epsilon,
                "notes": f"calibrated on {len(calibration_set)} training-split images",
                "calibration_checksums": calibration_checksums,
            },
        )
        metamorph.save_profile(profile, profiles_dir / f"{kind.value}.json")
        report = evalrep.evaluate_detector(
            params,
            profile,
            clean_eval,
            adv_eval,
            calibration_checksums=set(calibration_checksums),
            eval_checksums=eval_checksums,
        )
        evalrep.export(report, "csv", reports_dir / f"{kind.value}.csv")
        evalrep.export(report, "json", reports_dir / f"{kind.value}.json")
        final = report.final
        logger.info(
            "%s: clean %.2f%% / adversarial %.2f%% / overall %.2f%% at %d steps",
            kind.value, final[1], final[2], final[3], final[0],
        )
        return kind.value, final

    jobs = cfg.jobs or os.cpu_count() or 1
    if jobs > 1 and len(cfg.kinds) > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(cfg.kinds))) as pool:
            finals = dict(pool.map(run_kind, cfg.kinds))
    else:
        finals = dict(run_kind(kind) for kind in cfg.kinds)

    summary = {
        "dataset": {
            "num_classes": cfg.dataset.num_classes,
            "per_class": cfg.dataset.per_class,
            "train": len(train_set),
            "test": len(test_set),
        },
        "test_accuracy": test_accuracy,
        "attack": {"epsilon": cfg.attack_epsilon, "flip_rate": pair_flip_rate},
        "calibration_size": len(calibration_set),
        "detection": {
            kind: {"max_steps": f[0], "clean_acc": f[1], "adv_acc": f[2], "overall": f[3]}
            for kind, f in sorted(finals.items())
        },
    }
    (reports_dir / "summary.json").write_bytes(json.dumps(summary, indent=2).encode() + b"\n")
    return summary
