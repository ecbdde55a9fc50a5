"""Command-line interface.

One executable, eight subcommands covering the full flow:

    gen-data   render the synthetic shape dataset to a directory
    train      fit the classifier on a dataset directory
    attack     build clean/adversarial example pairs
    sweep      accuracy of the model across attack strengths
    calibrate  fit a detection profile for one transform kind
    detect     judge a single image against a profile
    evaluate   score a profile on clean and adversarial sets
    pipeline   run everything from a JSON config

Exit codes: 0 success (and ``detect`` judging Clean), 2 ``detect`` judging
Adversarial, 1 any error. Standard output carries only verdict lines;
logs and traces go to the error stream, data goes to files.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, attack, evalrep, metamorph, nnet, synthdata
from .config import ConfigError, load_config
from .image import Image, read_image
from .nnet import TrainConfig
from .pipeline import image_checksum, run_pipeline
from .synthdata import DatasetSpec
from .transforms import DEFAULT_STEPS, TransformKind

logger = logging.getLogger("affineguard")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ADVERSARIAL = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise _UsageError(message)


def _load_images(path: Path, role: str) -> tuple[list[Image], set[str]]:
    """Images plus content checksums from a dataset or pairs directory.

    ``role`` picks the clean or adversarial half of a pairs directory;
    dataset directories are always clean.
    """
    if (path / synthdata.MANIFEST_NAME).exists():
        data, _ = synthdata.load_dataset(path)
        images = [item.image for item in data]
    elif (path / attack.PAIRS_MANIFEST).exists():
        pairs, _ = attack.load_pairs(path)
        images = [p.adversarial if role == "adv" else p.clean.image for p in pairs]
    else:
        raise ValueError(f"{path}: neither a dataset nor a pairs directory")
    return images, {image_checksum(img) for img in images}


def _cmd_gen_data(args) -> int:
    spec = DatasetSpec(
        num_classes=args.num_classes,
        per_class=args.per_class,
        image_size=args.image_size,
        seed=args.seed,
        noise_std=args.noise_std,
    )
    data = synthdata.generate(spec)
    synthdata.save_dataset(data, args.out, spec)
    logger.info("wrote %d images to %s", len(data), args.out)
    return EXIT_OK


def _cmd_train(args) -> int:
    data, _ = synthdata.load_dataset(args.data)
    cfg = TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        augment=not args.no_augment,
        seed=args.seed,
    )
    losses: list[float] = []
    params = nnet.train(data, cfg, hidden=args.hidden, epoch_losses=losses)
    checksum = nnet.save_checkpoint(params, args.out, cfg)
    logger.info(
        "trained %d epochs (final loss %.4f, train accuracy %.4f), checkpoint %s",
        cfg.epochs, losses[-1], nnet.evaluate_accuracy(params, data), checksum[:12],
    )
    return EXIT_OK


def _cmd_attack(args) -> int:
    params = nnet.load_checkpoint(args.model).params
    data, _ = synthdata.load_dataset(args.data)
    pairs = attack.build_pairs(params, data, args.eps, n=args.count)
    attack.save_pairs(pairs, args.out, params)
    logger.info(
        "wrote %d pairs at epsilon %g (flip rate %.4f) to %s",
        len(pairs), args.eps, attack.flip_rate(params, pairs), args.out,
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    params = nnet.load_checkpoint(args.model).params
    data, _ = synthdata.load_dataset(args.data)
    eps_list = [float(tok) for tok in args.eps.split(",") if tok]
    rows = attack.epsilon_sweep(params, data, eps_list)
    lines = ["epsilon,accuracy"] + [f"{eps},{acc}" for eps, acc in rows]
    Path(args.out).write_bytes(("\n".join(lines) + "\n").encode())
    for eps, acc in rows:
        logger.info("epsilon %-6g accuracy %.4f", eps, acc)
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    params = nnet.load_checkpoint(args.model).params
    images, checksums = _load_images(Path(args.clean), "clean")
    profile = metamorph.calibrate(
        params,
        images,
        TransformKind(args.kind),
        steps=args.steps,
        multiplier=args.multiplier,
        created_with={
            "notes": f"calibrated on {len(images)} images",
            "calibration_checksums": sorted(checksums),
        },
    )
    metamorph.save_profile(profile, args.out)
    logger.info("calibrated %s over %d steps on %d images -> %s", args.kind, args.steps, len(images), args.out)
    return EXIT_OK


def _cmd_detect(args) -> int:
    params = nnet.load_checkpoint(args.model).params
    profile = metamorph.load_profile(args.profile)
    img = read_image(args.image)
    verdict = metamorph.detect(params, profile, img, max_steps=args.max_steps)
    cutoffs = profile.cutoffs()
    for k, delta in enumerate(verdict.per_step_deltas):
        marker = " <-- trigger" if verdict.triggering_step == k else ""
        sys.stderr.write(
            f"step {k:3d} magnitude {profile.sched.params[k]:<8g} "
            f"delta {delta:8.3f} cutoff {cutoffs[k]:8.3f}{marker}\n"
        )
    if verdict.is_adversarial:
        print(f"ADVERSARIAL step={verdict.triggering_step}")
        return EXIT_ADVERSARIAL
    print("CLEAN")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    params = nnet.load_checkpoint(args.model).params
    profile = metamorph.load_profile(args.profile)
    clean_images, clean_sums = _load_images(Path(args.clean), "clean")
    adv_images, adv_sums = _load_images(Path(args.adv), "adv")
    calibration_checksums = set(profile.created_with.get("calibration_checksums", []))
    report = evalrep.evaluate_detector(
        params,
        profile,
        clean_images,
        adv_images,
        calibration_checksums=calibration_checksums or None,
        eval_checksums=clean_sums | adv_sums,
    )
    evalrep.export(report, "csv", args.out)
    if args.paper_ref:
        with open(args.out, "ab") as fh:
            fh.write(b"\n")
            fh.write(evalrep.reference_block_csv())
    if args.json:
        evalrep.export(report, "json", args.json)
    final = report.final
    logger.info(
        "%s: clean %.2f%% / adversarial %.2f%% / overall %.2f%% at %d steps",
        report.kind.value, final[1], final[2], final[3], final[0],
    )
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    if args.jobs is not None:
        cfg.jobs = args.jobs
    run_pipeline(cfg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="affineguard", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"affineguard {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="render the synthetic shape dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--num-classes", type=int, default=15)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.set_defaults(handler=_cmd_gen_data)

    p = sub.add_parser("train", help="train the classifier on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--hidden", type=int, default=nnet.DEFAULT_HIDDEN)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("attack", help="build FGSM example pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eps", type=float, default=attack.DEFAULT_EPSILON)
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(handler=_cmd_attack)

    p = sub.add_parser("sweep", help="accuracy across attack strengths")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--eps", required=True, help="comma-separated strictly increasing epsilons")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("calibrate", help="fit a detection profile")
    p.add_argument("--model", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--kind", required=True, choices=[k.value for k in TransformKind])
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--multiplier", type=float, default=metamorph.DEFAULT_MULTIPLIER)
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("detect", help="judge one image (exit 2 if adversarial)")
    p.add_argument("--model", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--max-steps", type=int, default=None)
    p.set_defaults(handler=_cmd_detect)

    p = sub.add_parser("evaluate", help="score a profile on clean + adversarial sets")
    p.add_argument("--model", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--adv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", default=None)
    p.add_argument("--paper-ref", action="store_true", help="append the published reference block")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("pipeline", help="run the full flow from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(handler=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except _UsageError:
        return EXIT_ERROR
    except (ValueError, OSError, ConfigError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
