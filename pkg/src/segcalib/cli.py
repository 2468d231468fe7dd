"""Command-line interface: ``segcalib <subcommand> ...``.

Exit codes: 0 ok, 2 bad input (shape, format, flag), 3 probabilities not
normalized, 4 empty mask, 5 output directory not writable.
"""

import argparse
import json
import os
import platform
import sys
from dataclasses import replace

import numpy as np
import scipy

from . import __version__
from .distance import edt, sdf_from_mask
from .fileio import (
    FormatError,
    atomic_write,
    dumps_json,
    read_pgm,
    read_tensor,
    to_csv,
    write_pgm,
    write_tensor,
)
from .grid import DomainError
from .harness import (
    METRICS,
    LossSpec,
    SynthSpec,
    TrainConfig,
    compare_losses,
    generate_dataset,
    lambda_sweep,
    morph_ablation,
)
from .losses import SdcConfig
from .metrics import metric_report
from .morphology import MORPH_OPS, apply_morph, make_se, morph_labels
from .smoothing import SmoothingKernel
from .theory import (
    calibration_transfer_demo,
    check_lipschitz,
    check_sdf_discrepancy,
)

LOSS_KINDS = ("ce", "sdc", "margin", "label_smoothing", "focal")
# flags that locate files rather than define the run; never stored in manifests
NON_RUN_FLAGS = ("out", "manifest", "func")


class CliExit(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _fail(code, message):
    raise CliExit(code, message)


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


# --- metrics / sdf / morph -------------------------------------------------


def cmd_metrics(args):
    try:
        p = read_tensor(args.pred).astype(np.float64)
        y = read_pgm(args.labels)
    except (OSError, FormatError) as exc:
        _fail(2, str(exc))
    if p.ndim == 4:
        if p.shape[0] != 1:
            _fail(2, f"expected a single image, got batch of {p.shape[0]}")
        p = p[0]
    if p.ndim != 3:
        _fail(2, f"prediction must be (C, H, W), got shape {p.shape}")
    num_classes = args.num_classes or p.shape[0]
    if p.shape[0] != num_classes:
        _fail(2, f"prediction has {p.shape[0]} classes, expected {num_classes}")
    if p.shape[1:] != y.shape:
        _fail(2, f"prediction {p.shape[1:]} and labels {y.shape} differ in shape")
    if y.max() >= num_classes:
        _fail(2, f"label value {y.max()} out of range for {num_classes} classes")
    if np.any(p < 0) or np.any(p > 1) or np.abs(p.sum(axis=0) - 1.0).max() > 1e-4:
        _fail(3, "probabilities must lie in [0, 1] and sum to 1 per pixel (tolerance 1e-4)")
    report = metric_report(p, y, args.bins, args.fp_weight, args.threshold)
    sys.stdout.write(dumps_json(report))


def cmd_sdf(args):
    try:
        mask = (read_pgm(args.mask) != 0).astype(np.uint8)
    except (OSError, FormatError) as exc:
        _fail(2, str(exc))
    if not mask.any():
        _fail(4, "mask is empty")
    field = edt(mask) if args.mode == "edt" else sdf_from_mask(mask, args.normalize)
    _write_file(args.out, lambda path: write_tensor(path, field))


def cmd_morph(args):
    try:
        labels = read_pgm(args.mask)
    except (OSError, FormatError) as exc:
        _fail(2, str(exc))
    se = make_se(args.se_shape, args.se_size)
    if labels.max() <= 1:
        out = apply_morph(labels.astype(np.uint8), args.op, se)
    else:
        out = morph_labels(labels, args.op, se, int(labels.max()) + 1)
    _write_file(args.out, lambda path: write_pgm(path, out))


def _write_file(path, writer):
    try:
        writer(path)
    except OSError as exc:
        _fail(5, f"cannot write {path}: {exc}")


# --- experiment drivers ----------------------------------------------------


def _sdc_config(args):
    return SdcConfig(
        alpha=args.alpha,
        lambda_sdf=args.lambda_sdf,
        conf_norm=args.conf_norm,
        sdf_scale=args.sdf_scale,
        sdf_clamp=args.sdf_clamp,
        sdf_normalization=args.normalize,
        kernel=SmoothingKernel(args.kernel, args.kernel_size, args.sigma),
        se_size=args.se_size,
    )


def _synth_spec(args):
    return SynthSpec(image_size=args.image_size, n_images=args.n_images, shape=args.shape,
                     noise_sigma=args.noise, rng_seed=args.seed)


def _train_config(args):
    return TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                       rng_seed=args.seed)


def _seeds(args):
    return [args.seed + i for i in range(args.n_seeds)]


def _loss_spec(kind, args):
    sdc = _sdc_config(args)
    if kind == "margin":
        sdc = replace(sdc, morph_op=args.op, lambda_sdf=0.0)
    return LossSpec(kind, sdc, eps=args.eps, gamma=args.gamma)


def _prepare_out(out):
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write-probe")
        with open(probe, "wb"):
            pass
        os.unlink(probe)
    except OSError as exc:
        _fail(5, f"output directory {out} is not writable: {exc}")


def _manifest(args):
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in NON_RUN_FLAGS}
    return {
        "command": args.command,
        "flags": flags,
        "seed": args.seed,
        "versions": {"segcalib": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
    }


def _emit(args, files):
    """Write ``{name: text}`` plus manifest.json into the output directory."""
    _prepare_out(args.out)
    files = dict(files)
    files["manifest.json"] = dumps_json(_manifest(args))
    try:
        for name, text in files.items():
            atomic_write(os.path.join(args.out, name), text)
    except OSError as exc:
        _fail(5, f"cannot write to {args.out}: {exc}")


def cmd_train_demo(args):
    _prepare_out(args.out)
    losses = [_loss_spec(k, args) for k in args.losses]
    if len(losses) < 2:
        _fail(2, "train-demo needs at least two losses")
    labels = [l.label for l in losses]
    if len(set(labels)) != len(labels):
        losses = [replace(l, name=f"{l.label}_{i}") for i, l in enumerate(losses)]
    out = compare_losses(_synth_spec(args), losses, _train_config(args), _seeds(args))
    summary = [{"loss": k, **v, "friedman_rank": out["ranks"][k]} for k, v in out["median"].items()]
    _emit(args, {
        "runs.csv": to_csv(out["rows"], ["loss", "seed", *METRICS]),
        "summary.csv": to_csv(summary, ["loss", *METRICS, "friedman_rank"]),
        "trace.csv": to_csv(out["traces"], ["loss", "seed", "epoch", "value"]),
    })


def cmd_ablation(args):
    _prepare_out(args.out)
    rows = morph_ablation(_synth_spec(args), _train_config(args), _seeds(args), _sdc_config(args))
    _emit(args, {"ablation.csv": to_csv(rows, ["op", *METRICS])})


def cmd_sweep(args):
    _prepare_out(args.out)
    rows = lambda_sweep(_synth_spec(args), _train_config(args), args.lambda_grid, _seeds(args),
                        _sdc_config(args))
    _emit(args, {"sweep.csv": to_csv(rows, ["lambda_sdf", *METRICS])})


def _theory_masks(args, n):
    spec = SynthSpec(image_size=args.image_size, n_images=n, noise_sigma=0.0, rng_seed=args.seed)
    return [label.astype(np.uint8) for _, label in generate_dataset(spec)]


def cmd_theory(args):
    result = {}
    if args.lemma in ("lipschitz", "all"):
        result["lipschitz"] = [
            check_lipschitz(s, args.samples, args.seed).to_dict() for s in args.scales
        ]
    if args.lemma in ("discrepancy", "all"):
        reports = []
        for i, mask in enumerate(_theory_masks(args, args.n_masks)):
            s_star = sdf_from_mask(mask)
            for delta in args.deltas:
                for s in args.scales:
                    reports.append(check_sdf_discrepancy(s_star, delta, s, args.seed + i))
        worst = max(reports, key=lambda r: r.max_violation)
        result["discrepancy"] = {"checks": len(reports), "all_hold": all(r.holds for r in reports),
                                 "worst": worst.to_dict()}
    if args.lemma in ("transfer", "all"):
        grid = sorted(set([0.0] + list(args.deltas)))
        result["transfer"] = calibration_transfer_demo(
            _theory_masks(args, args.n_masks), grid, args.scales[0], args.bins,
            range(args.seed, args.seed + args.n_seeds))
    text = dumps_json(result)
    if args.out:
        _emit(args, {"theory.json": text})
    sys.stdout.write(text)


# --- parser ----------------------------------------------------------------


def _add_metric_flags(p):
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--fp-weight", type=float, default=2.0)
    p.add_argument("--threshold", type=float, default=1e-3)


def _add_experiment_flags(p, out_required=True):
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--manifest", help="replay the flags recorded in a manifest.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-seeds", type=int, default=1)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--n-images", type=int, default=200)
    p.add_argument("--shape", choices=("disk", "ellipse", "annulus"), default="disk")
    p.add_argument("--noise", type=float, default=0.6)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--lambda-sdf", type=float, default=0.1)
    p.add_argument("--conf-norm", choices=("l1", "l2"), default="l1")
    p.add_argument("--sdf-scale", type=float, default=1.0)
    p.add_argument("--sdf-clamp", type=float, default=3.0)
    p.add_argument("--normalize", choices=("none", "max_abs"), default="none")
    p.add_argument("--kernel", choices=("mean", "gaussian"), default="mean")
    p.add_argument("--kernel-size", type=int, default=3)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--se-size", type=int, default=3)


def build_parser():
    parser = argparse.ArgumentParser(prog="segcalib", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="metric report for a probability tensor vs. a label mask")
    p.add_argument("pred", help="tensor file with probabilities, (C, H, W) or (1, C, H, W)")
    p.add_argument("labels", help="8-bit binary PGM label mask")
    p.add_argument("--num-classes", type=int, default=None)
    _add_metric_flags(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sdf", help="signed distance field of a binary mask")
    p.add_argument("mask")
    p.add_argument("--out", required=True, help="output tensor file")
    p.add_argument("--normalize", choices=("none", "max_abs"), default="none")
    p.add_argument("--mode", choices=("sdf", "edt"), default="sdf")
    p.set_defaults(func=cmd_sdf)

    p = sub.add_parser("morph", help="apply a morphological op to a mask")
    p.add_argument("mask")
    p.add_argument("--op", choices=MORPH_OPS, required=True)
    p.add_argument("--se-size", type=int, default=3)
    p.add_argument("--se-shape", choices=("square", "cross"), default="square")
    p.add_argument("--out", required=True, help="output PGM file")
    p.set_defaults(func=cmd_morph)

    p = sub.add_parser("train-demo", help="compare losses on synthetic shapes")
    _add_experiment_flags(p)
    p.add_argument("--losses", type=lambda s: [t for t in s.split(",") if t],
                   default=["ce", "sdc"], help=f"comma-separated, from {', '.join(LOSS_KINDS)}")
    p.add_argument("--op", choices=MORPH_OPS, default="gradient", help="op for the margin loss")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=3.0)
    p.set_defaults(func=cmd_train_demo)

    p = sub.add_parser("ablation", help="margin loss under all eight morphological ops")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("sweep", help="SDC over a grid of lambda_sdf values")
    _add_experiment_flags(p)
    p.add_argument("--lambda", dest="lambda_grid", type=_float_list,
                   default=[0.0, 0.1, 0.5, 1.0, 1.5, 3.0])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("theory", help="check the sigmoid distance-to-probability bounds")
    p.add_argument("--out", default=None, help="optional output directory")
    p.add_argument("--manifest", help="replay the flags recorded in a manifest.json")
    p.add_argument("--lemma", choices=("lipschitz", "discrepancy", "transfer", "all"),
                   default="all")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--scales", type=_float_list, default=[0.5, 1.0, 2.0, 4.0])
    p.add_argument("--deltas", type=_float_list, default=[0.1, 0.5, 1.0])
    p.add_argument("--n-masks", type=int, default=20)
    p.add_argument("--n-seeds", type=int, default=20)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theory)
    return parser


def _apply_manifest(parser, args):
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
    except (OSError, ValueError) as exc:
        _fail(2, f"cannot read manifest {args.manifest}: {exc}")
    if manifest.get("command") != args.command:
        _fail(2, f"manifest is for {manifest.get('command')!r}, not {args.command!r}")
    for key, value in manifest["flags"].items():
        if key not in NON_RUN_FLAGS and hasattr(args, key):
            setattr(args, key, value)
    return args


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "manifest", None):
            args = _apply_manifest(parser, args)
        args.func(args)
    except CliExit as exc:
        print(f"segcalib {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except DomainError as exc:
        print(f"segcalib {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
