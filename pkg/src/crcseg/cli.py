"""Command-line interface.

Exit codes
----------
0  success
1  unexpected internal error
2  usage error (bad flags, invalid configuration)
3  calibration infeasible at the requested alpha
4  file I/O failure (missing/unreadable/malformed file)
5  data validation failure (bad manifest, dimension mismatch, too few samples)
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

from crcseg import io as cio
from crcseg.calibration import RiskSpec, certified_bound, select_from_losses
from crcseg.core import DEFAULT_GRID_POINTS, lambda_grid
from crcseg.errors import ConfigInvalid, CrcError, IoFailure, ValidationError
from crcseg.experiments import (
    DEFAULT_RATIOS,
    REFERENCE_ALPHA,
    SplitSpec,
    alpha_sweep,
    parse_ratio,
    ratio_sweep,
    split_sizes,
)
from crcseg.losses import LossKind, count_table, exact_column_mean
from crcseg.synthgen import SynthConfig, generate

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4
EXIT_VALIDATION = 5

SUMMARY_COLUMNS = (
    "alpha", "kind", "ratio", "n_trials", "n_infeasible",
    "lambda_hat_mean", "lambda_hat_std",
    "mean_test_fdr_mean", "mean_test_fdr_std",
    "mean_test_fnr_mean", "mean_test_fnr_std",
    "ecr_mean", "ecr_std", "apss_mean", "apss_std",
)
PLOT_COLUMNS = ("alpha", "mean_loss", "std_loss", "companion_mean", "companion_std")
RATIO_PLOT_COLUMNS = ("ratio", "cal_test", "n_cal", "n_test", "feasible", "mean_test_fdr", "mean_test_fnr")
CURVE_COLUMNS = ("sample_id", "lambda", "loss", "convention")
MEAN_ROW_ID = "__mean__"


# -- argument types -----------------------------------------------------------


def _open_unit(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1: {text}")
    return value


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer: {text}")
    return value


def parse_alphas(text: str) -> list[float]:
    """``start:stop:step`` (both ends inclusive, 1e-9 slack) or a comma list."""
    text = text.strip()
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
        if step <= 0 or stop < start:
            raise argparse.ArgumentTypeError(f"empty alpha range {text!r}")
        count = math.floor((stop - start) / step + 1e-9) + 1
        values = [round(start + k * step, 12) for k in range(count)]
    else:
        try:
            values = [float(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None
    if not values or any(not 0.0 < a < 1.0 for a in values):
        raise argparse.ArgumentTypeError(f"every alpha must lie in (0, 1): {text!r}")
    return values


def parse_ratios(text: str) -> list[float]:
    try:
        values = [parse_ratio(part) for part in text.split(",") if part.strip()]
    except (ValueError, ConfigInvalid) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not values:
        raise argparse.ArgumentTypeError("no ratios given")
    return values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return value


def _grid_points(text: str) -> int:
    value = _positive_int(text)
    if value < 2:
        raise argparse.ArgumentTypeError("the lambda grid needs at least 2 points")
    return value


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=0, help="master random seed (u64)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (created if absent)")
    common.add_argument("--grid-points", type=_grid_points, default=DEFAULT_GRID_POINTS,
                        help="number of lambda grid points from 1 down to 0")
    common.add_argument("--quiet", action="store_true", help="suppress non-error output")

    parser = argparse.ArgumentParser(
        prog="crcseg",
        description="Conformal risk control of FDR/FNR for binary segmentation thresholds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--height", type=_positive_int, default=64)
    p.add_argument("--width", type=_positive_int, default=64)
    p.add_argument("--n", type=_positive_int, default=1024)
    p.add_argument("--fg-mean", type=float, default=0.8)
    p.add_argument("--bg-mean", type=float, default=0.2)
    p.add_argument("--noise-std", type=float, default=0.15)
    p.add_argument("--shape", choices=("ellipse", "rectangle"), default="ellipse")
    p.add_argument("--size-min", type=float, default=0.1, help="smallest blob area as a fraction of the image")
    p.add_argument("--size-max", type=float, default=0.3, help="largest blob area as a fraction of the image")

    p = sub.add_parser("curves", parents=[common], help="per-sample loss curves and their mean")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--loss", choices=("fdr", "fnr"), default="fnr")
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    p = sub.add_parser("calibrate", parents=[common], help="select a risk-controlling threshold")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--alpha", type=_open_unit, required=True)
    p.add_argument("--loss", choices=("fdr", "fnr"), default="fnr")
    p.add_argument("--bound-b", type=float, default=1.0, help="a priori upper bound B on the loss")

    p = sub.add_parser("experiment", parents=[common], help="alpha sweep over repeated random splits")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--loss", choices=("fdr", "fnr"), default="fnr")
    p.add_argument("--alphas", type=parse_alphas, default=parse_alphas("0.1:0.9:0.1"),
                   help='"start:stop:step" (inclusive) or a comma list')
    p.add_argument("--trials", type=_positive_int, default=10)
    p.add_argument("--cal-fraction", type=_open_unit, default=0.5)
    p.add_argument("--bound-b", type=float, default=1.0)
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    p = sub.add_parser("ratio-ablation", parents=[common], help="vary the calibration:test ratio")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--alpha", type=_open_unit, default=REFERENCE_ALPHA)
    p.add_argument("--loss", choices=("fdr", "fnr"), default="fnr")
    p.add_argument("--ratios", type=parse_ratios,
                   default=[parse_ratio(f"{c}:{t}") for c, t in DEFAULT_RATIOS],
                   help='comma list such as "9:1,5:5,1:9" or calibration fractions')
    p.add_argument("--bound-b", type=float, default=1.0)
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    p = sub.add_parser("convert-pgm", parents=[common], help="convert an 8-bit P5 PGM mask to MSK1")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path, help="MSK1 file name, relative to --out unless absolute")
    return parser


# -- helpers ------------------------------------------------------------------


class _Console:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *args):
        if not self.quiet:
            print(*args)


def _risk_spec(args, parser) -> RiskSpec:
    alphas = args.alphas if hasattr(args, "alphas") else [args.alpha]
    for a in alphas:
        if not args.bound_b >= a:
            parser.error(f"--bound-b ({args.bound_b}) must be at least alpha ({a})")
    return RiskSpec(alpha=alphas[0], kind=LossKind.parse(args.loss), bound_b=args.bound_b)


def _config_hash(args, manifest_bytes: bytes = b"") -> str:
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
             if k not in ("out", "quiet", "manifest")}
    # the manifest is identified by its content, not its location
    h = hashlib.sha256(json.dumps(flags, sort_keys=True).encode())
    h.update(hashlib.sha256(manifest_bytes).digest())
    return h.hexdigest()[:16]


def _write_meta(path: Path, args, manifest_bytes: bytes, extra: dict) -> None:
    meta = {
        "schema_version": cio.REPORT_SCHEMA_VERSION,
        "command": args.command,
        "config_hash": _config_hash(args, manifest_bytes),
        "seed": args.seed,
        "grid_points": args.grid_points,
    }
    meta.update(extra)
    cio.atomic_write_text(path, json.dumps(meta, indent=1, sort_keys=True) + "\n")


def _summary_rows(report) -> list[dict]:
    rows = []
    for r in report.rows:
        row = {"alpha": r.alpha, "kind": r.kind.value, "ratio": r.ratio,
               "n_trials": r.n_trials, "n_infeasible": r.n_infeasible}
        for name in r.mean:
            row[f"{name}_mean"] = r.mean[name]
            row[f"{name}_std"] = r.std[name]
        rows.append(row)
    return rows


def _load(args):
    manifest_bytes = args.manifest.read_bytes() if args.manifest.is_file() else b""
    samples = cio.load_manifest(args.manifest)
    return samples, manifest_bytes


# -- commands -----------------------------------------------------------------


def cmd_synth(args, parser, say) -> int:
    config = SynthConfig(
        height=args.height, width=args.width, n_samples=args.n,
        fg_mean=args.fg_mean, bg_mean=args.bg_mean, noise_std=args.noise_std,
        shape=args.shape, size_min=args.size_min, size_max=args.size_max, seed=args.seed,
    )
    dataset = generate(config)
    manifest = cio.write_dataset(args.out, dataset.samples)
    say(manifest)
    return EXIT_OK


def cmd_curves(args, parser, say) -> int:
    kind = LossKind.parse(args.loss)
    samples, _ = _load(args)
    grid = lambda_grid(args.grid_points)
    table = count_table(samples, grid)
    losses = table.losses(kind)
    flags = table.empty_flags(kind)
    rows = []
    for i, sid in enumerate(table.ids):
        for j, lam in enumerate(grid):
            rows.append({"sample_id": sid, "lambda": lam, "loss": losses[i, j], "convention": int(flags[i, j])})
    for lam, value in zip(grid, exact_column_mean(losses)):
        rows.append({"sample_id": MEAN_ROW_ID, "lambda": lam, "loss": value, "convention": 0})
    path = cio.write_table(rows, args.out / f"{kind.value}_curves.csv", CURVE_COLUMNS)
    say(path)
    if not args.no_plot:
        from crcseg.plotting import plot_loss_curves

        say(plot_loss_curves(grid, losses, kind, args.out / f"{kind.value}_curves.png"))
    return EXIT_OK


def cmd_calibrate(args, parser, say) -> int:
    spec = _risk_spec(args, parser)
    samples, _ = _load(args)
    grid = lambda_grid(args.grid_points)
    result = select_from_losses(count_table(samples, grid).losses(spec.kind), grid, spec)
    doc = {
        "alpha": spec.alpha,
        "kind": spec.kind.value,
        "bound_b": spec.bound_b,
        "n_cal": result.n_cal,
        "feasible": result.feasible,
        "lambda_hat": result.lambda_hat,
        "threshold": result.threshold,
        "achieved_calibration_loss": result.achieved_calibration_loss,
        "corrected_level": spec.corrected_level(result.n_cal),
        "certified_bound": certified_bound(result) if result.feasible else None,
    }
    path = args.out / "calibration.json"
    cio.atomic_write_text(path, json.dumps(doc, indent=1) + "\n")
    say(path)
    if not result.feasible:
        print(
            f"infeasible: no threshold satisfies alpha={spec.alpha} with n={result.n_cal} "
            f"(corrected level {spec.corrected_level(result.n_cal):.6g})",
            file=sys.stderr,
        )
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_experiment(args, parser, say) -> int:
    spec = _risk_spec(args, parser)
    kind = spec.kind
    split_spec = SplitSpec(cal_fraction=args.cal_fraction, n_trials=args.trials, seed=args.seed)
    samples, manifest_bytes = _load(args)
    split_sizes(len(samples), split_spec.cal_fraction)
    grid = lambda_grid(args.grid_points)
    report = alpha_sweep(samples, split_spec, kind, grid, args.alphas, bound_b=args.bound_b)

    stem = args.out / f"{kind.value}_sweep"
    trial_rows = [t.row() for t in report.trials]
    say(cio.write_report(trial_rows, f"{stem}_trials.csv", "csv"))
    say(cio.write_report(trial_rows, f"{stem}_trials.json", "json"))
    say(cio.write_table(_summary_rows(report), f"{stem}_summary.csv", SUMMARY_COLUMNS))
    plot_rows = []
    for r in report.rows:
        (m, s), (cm, cs) = r.calibrated(), r.companion()
        plot_rows.append({"alpha": r.alpha, "mean_loss": m, "std_loss": s, "companion_mean": cm, "companion_std": cs})
    say(cio.write_table(plot_rows, f"{stem}_plot_data.csv", PLOT_COLUMNS))
    _write_meta(Path(f"{stem}.meta.json"), args, manifest_bytes, {
        "kind": kind.value,
        "alphas": list(args.alphas),
        "cal_fraction": args.cal_fraction,
        "n_trials": args.trials,
        "bound_b": args.bound_b,
        "n_samples": len(samples),
        "n_infeasible_trials": sum(not t.feasible for t in report.trials),
        "reference_alpha": REFERENCE_ALPHA,
    })
    if not args.no_plot:
        from crcseg.plotting import plot_alpha_sweep

        say(plot_alpha_sweep(report, f"{stem}.png"))
    return EXIT_OK


def cmd_ratio_ablation(args, parser, say) -> int:
    spec = _risk_spec(args, parser)
    kind = spec.kind
    samples, manifest_bytes = _load(args)
    for frac in args.ratios:
        split_sizes(len(samples), frac)
    grid = lambda_grid(args.grid_points)
    report = ratio_sweep(samples, args.ratios, kind, grid, alpha=args.alpha,
                         bound_b=args.bound_b, seed=args.seed)

    stem = args.out / f"{kind.value}_ratio"
    trial_rows = [t.row() for t in report.trials]
    say(cio.write_report(trial_rows, f"{stem}_trials.csv", "csv"))
    say(cio.write_report(trial_rows, f"{stem}_trials.json", "json"))
    plot_rows = [
        {"ratio": t.ratio, "cal_test": f"{t.ratio * 10:.4g}:{(1 - t.ratio) * 10:.4g}",
         "n_cal": t.n_cal, "n_test": t.n_test, "feasible": t.feasible,
         "mean_test_fdr": t.mean_test_fdr, "mean_test_fnr": t.mean_test_fnr}
        for t in report.trials
    ]
    say(cio.write_table(plot_rows, f"{stem}_plot_data.csv", RATIO_PLOT_COLUMNS))
    _write_meta(Path(f"{stem}.meta.json"), args, manifest_bytes, {
        "kind": kind.value,
        "alpha": args.alpha,
        "ratios": list(args.ratios),
        "bound_b": args.bound_b,
        "n_samples": len(samples),
        "n_infeasible_trials": sum(not t.feasible for t in report.trials),
    })
    if not args.no_plot:
        from crcseg.plotting import plot_ratio_sweep

        say(plot_ratio_sweep(report, f"{stem}.png", alpha=args.alpha))
    return EXIT_OK


def cmd_convert_pgm(args, parser, say) -> int:
    mask = cio.read_pgm_mask(args.input)
    target = args.output if args.output.is_absolute() else args.out / args.output
    cio.write_mask(target, mask)
    say(target)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "curves": cmd_curves,
    "calibrate": cmd_calibrate,
    "experiment": cmd_experiment,
    "ratio-ablation": cmd_ratio_ablation,
    "convert-pgm": cmd_convert_pgm,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    say = _Console(args.quiet)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, parser, say)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except ConfigInvalid as exc:
        print(f"crcseg: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IoFailure as exc:
        print(f"crcseg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"crcseg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"crcseg: invalid data: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CrcError as exc:
        print(f"crcseg: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
