"""Command-line interface.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import plotting, synth
from .deepnpts import (
    CONTEXT_MULTIPLIER,
    DEEPNPTS_GRID,
    DeepNPTSNetwork,
    InputScaling,
    LossScaling,
    Normalization,
)
from .evaluation import (
    BacktestPlan,
    fmt,
    rolling_backtest,
    tune,
    write_calibration_csv,
    write_metrics_csv,
    write_per_series_csv,
    write_tuning_csv,
)
from .forecaster import DEFAULT_NUM_SAMPLES
from .io import DatasetError, DatasetManifest, forecast_record, histogram, load_dataset, write_dataset, write_forecasts
from .kernels import LAMBDA_GRID
from .models import MODEL_NAMES, NPTS, DeepNPTS, make_model
from .timeseries import Frequency

logger = logging.getLogger("nptsforecast")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ parser


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _freq(text: str) -> Frequency:
    try:
        return Frequency.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_data_args(p: argparse.ArgumentParser, windows: bool = True) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--data", type=Path, help="line-delimited JSON series file")
    g.add_argument("--manifest", type=Path, help="JSON manifest (path, freq, prediction_length, num_windows)")
    g.add_argument("--freq", type=_freq, help="series frequency, e.g. H, 30min, D, W, M")
    g.add_argument("--prediction-length", type=_positive_int, help="forecast horizon P")
    if windows:
        g.add_argument("--num-windows", type=_positive_int, help="number of rolling evaluation windows W")
    g.add_argument("--dataset-name", default=None, help="label used in reports (default: file stem)")


def _add_model_args(p: argparse.ArgumentParser, multiple: bool = False) -> None:
    g = p.add_argument_group("model")
    if multiple:
        g.add_argument("--model", action="append", choices=MODEL_NAMES, required=True,
                       help="model to run; repeat to compare several")
    else:
        g.add_argument("--model", choices=MODEL_NAMES, required=True)
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="exponential kernel rate (default 1.0)")
    g.add_argument("--context-length", type=_positive_int, default=None,
                   help="NPTS: cap on the history used; DeepNPTS: window size (overrides the multiplier)")
    g.add_argument("--context-multiplier", type=_positive_int, default=CONTEXT_MULTIPLIER,
                   help=f"DeepNPTS window as a multiple of the prediction length (default {CONTEXT_MULTIPLIER})")
    g.add_argument("--samples", type=_positive_int, default=DEFAULT_NUM_SAMPLES, help="Monte Carlo sample paths K")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)

    d = p.add_argument_group("DeepNPTS training")
    d.add_argument("--epochs", type=int, default=200)
    d.add_argument("--dropout", type=float, default=0.0)
    d.add_argument("--normalization", choices=[m.value for m in Normalization], default="softmax")
    d.add_argument("--input-scaling", choices=[m.value for m in InputScaling], default="standardization")
    d.add_argument("--loss-scaling", choices=[m.value for m in LossScaling], default="none")
    d.add_argument("--static-feat", action="store_true", help="append a per-series static feature")
    d.add_argument("--no-time-features", action="store_true", help="do not feed calendar features")
    d.add_argument("--learning-rate", type=float, default=1e-3)
    d.add_argument("--batch-size", type=_positive_int, default=64)
    d.add_argument("--model-file", type=Path, default=None, help="load a trained DeepNPTS network instead of training")
    d.add_argument("--save-model", type=Path, default=None, help="write the trained DeepNPTS network here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nptsforecast", description="Non-parametric probabilistic forecasting: NPTS and DeepNPTS."
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--kind", choices=synth.KINDS, required=True)
    p.add_argument("--num-series", type=_positive_int, default=10)
    p.add_argument("--length", type=_positive_int, default=500)
    p.add_argument("--freq", type=_freq, default=None)
    p.add_argument("--period", type=_positive_int, default=24, help="sinusoid period")
    p.add_argument("--noise", type=float, default=0.1, help="sinusoid noise std")
    p.add_argument("--zero-prob", type=float, default=0.7, help="intermittent: probability of a zero")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("forecast", help="forecast P steps past the end of every series")
    _add_data_args(p, windows=False)
    _add_model_args(p)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--save-samples", action="store_true", help="include raw sample paths in the records")

    p = sub.add_parser("backtest", help="rolling-window evaluation")
    _add_data_args(p)
    _add_model_args(p, multiple=True)
    p.add_argument("--tune", action="store_true", help="grid-search hyperparameters on the validation split first")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("tune", help="score the hyperparameter grid on the validation split")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("histogram", help="histogram of pooled training values")
    _add_data_args(p)
    p.add_argument("--bins", type=_positive_int, default=50)
    p.add_argument("--seed", type=int, default=0, help="accepted for interface uniformity; unused")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("probe", help="sampling probabilities for the first forecast step of one series")
    _add_data_args(p, windows=False)
    _add_model_args(p)
    p.add_argument("--series-id", default=None, help="series to probe (default: first in the file)")
    p.add_argument("--out-dir", type=Path, required=True)
    return parser


# ----------------------------------------------------------------- helpers


def _manifest(args) -> DatasetManifest:
    if args.manifest is not None:
        if not args.manifest.is_file():
            raise UsageError(f"manifest {args.manifest} does not exist")
        m = DatasetManifest.from_json(args.manifest)
        overrides = {}
        if args.data is not None:
            overrides["path"] = args.data
        if args.freq is not None:
            overrides["freq"] = args.freq
        if args.prediction_length is not None:
            overrides["prediction_length"] = args.prediction_length
        if getattr(args, "num_windows", None) is not None:
            overrides["num_windows"] = args.num_windows
        if overrides:
            m = DatasetManifest(**{**m.__dict__, **overrides})
    else:
        missing = [flag for flag, v in (("--data", args.data), ("--freq", args.freq),
                                         ("--prediction-length", args.prediction_length)) if v is None]
        if missing:
            raise UsageError(f"missing {', '.join(missing)} (or pass --manifest)")
        m = DatasetManifest(args.data, args.freq, args.prediction_length, getattr(args, "num_windows", None) or 1)
    if not m.path.is_file():
        raise UsageError(f"dataset file {m.path} does not exist")
    return m


def _dataset_name(args, manifest: DatasetManifest) -> str:
    return args.dataset_name or manifest.path.stem


def _model_params(args, name: str, prediction_length: int) -> dict:
    if name in ("npts-exp", "seasonal-npts-exp"):
        return {"lam": args.lam, "context_length": args.context_length}
    if name in ("npts-uniform", "seasonal-npts-uniform"):
        return {"context_length": args.context_length}
    if name == "seasonal-naive":
        return {}
    return {
        "context_length": args.context_length or args.context_multiplier * prediction_length,
        "epochs": args.epochs,
        "dropout": args.dropout,
        "normalization": args.normalization,
        "input_scaling": args.input_scaling,
        "loss_scaling": args.loss_scaling,
        "static_feat": args.static_feat,
        "time_features": not args.no_time_features,
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
        "seed": args.seed,
    }


def _grid(name: str) -> list[dict]:
    if name in ("npts-exp", "seasonal-npts-exp"):
        return [{"lam": lam} for lam in LAMBDA_GRID]
    if name == "deepnpts":
        keys = list(DEEPNPTS_GRID)
        return [dict(zip(keys, combo)) for combo in itertools.product(*DEEPNPTS_GRID.values())]
    return [{}]


def _factory(name: str, base: dict, prediction_length: int):
    def factory(params):
        return make_model(name, prediction_length=prediction_length, **{**base, **params})

    return factory


def _fitted_model(args, name: str, panel, manifest: DatasetManifest):
    params = _model_params(args, name, manifest.prediction_length)
    if name == "deepnpts" and args.model_file is not None:
        if not args.model_file.is_file():
            raise UsageError(f"model file {args.model_file} does not exist")
        return DeepNPTS.from_network(DeepNPTSNetwork.load(args.model_file), manifest.prediction_length)
    model = make_model(name, prediction_length=manifest.prediction_length, **params).fit(panel)
    if name == "deepnpts" and args.save_model is not None:
        model.network.save(args.save_model)
    return model


def _check_flags(args) -> None:
    names = args.model if isinstance(args.model, list) else [args.model]
    if (getattr(args, "model_file", None) or getattr(args, "save_model", None)) and "deepnpts" not in names:
        raise UsageError("--model-file/--save-model only apply to --model deepnpts")
    if getattr(args, "model_file", None) and getattr(args, "save_model", None):
        raise UsageError("--model-file and --save-model are mutually exclusive")
    if not 0.0 <= getattr(args, "dropout", 0.0) < 1.0:
        raise UsageError("--dropout must lie in [0, 1)")
    if getattr(args, "lam", 1.0) <= 0:
        raise UsageError("--lambda must be positive")


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> None:
    panel = synth.generate(args.kind, args.num_series, args.length, freq=args.freq, seed=args.seed,
                           period=args.period, noise=args.noise, zero_prob=args.zero_prob)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(panel, args.out)
    print(f"wrote {len(panel)} series to {args.out}")


def cmd_forecast(args) -> None:
    manifest = _manifest(args)
    panel = load_dataset(manifest)
    model = _fitted_model(args, args.model, panel, manifest)
    P = manifest.prediction_length
    records, first = [], None
    for i, series in enumerate(panel):
        res = model.predict(series, P, args.samples, seed=args.seed + i)
        records.append(forecast_record(series, res, args.save_samples))
        if first is None or series.id < first[0].id:
            first = (series, res)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_forecasts(records, args.out_dir / "forecasts.jsonl")
    plotting.forecast_figure(first[0].values, first[1].quantiles, args.out_dir / "forecast.png",
                             title=f"{args.model}: {first[0].id}")
    print(f"wrote {len(records)} forecasts to {args.out_dir / 'forecasts.jsonl'}")


def cmd_backtest(args) -> None:
    manifest = _manifest(args)
    panel = load_dataset(manifest)
    plan = BacktestPlan(manifest.prediction_length, manifest.num_windows)
    dataset = _dataset_name(args, manifest)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for name in dict.fromkeys(args.model):
        base = _model_params(args, name, plan.prediction_length)
        grid = _grid(name) if args.tune else [{}]
        report = rolling_backtest(panel, _factory(name, base, plan.prediction_length), plan, grid,
                                  model_name=name, dataset_name=dataset, num_samples=args.samples,
                                  seed=args.seed, threads=args.threads)
        reports.append(report)
        write_calibration_csv(report, args.out_dir / f"calibration_{name}.csv")
        if report.tuning is not None:
            write_tuning_csv(name, report.tuning, args.out_dir / f"tuning_{name}.csv")
        print(f"{name}: mean quantile loss {report.mean_quantile_loss:.3f}"
              f"{'' if report.normalized else ' (unnormalized: all actuals are zero)'}, "
              f"max calibration error {report.max_calibration_error:.3f}")
        print(f"{name}: wall clock {report.wall_clock:.2f}s", file=sys.stderr)
    write_metrics_csv(reports, args.out_dir / "metrics.csv")
    write_per_series_csv(reports, args.out_dir / "per_series.csv")
    plotting.calibration_figure(reports, args.out_dir / "calibration.png")


def cmd_tune(args) -> None:
    manifest = _manifest(args)
    panel = load_dataset(manifest)
    plan = BacktestPlan(manifest.prediction_length, manifest.num_windows)
    tau = plan.tau
    short = [s.id for s in panel if len(s) < 2 * tau + 1]
    if short:
        raise ValueError(f"series {short[0]!r} is too short for tuning (needs {2 * tau + 1} observations)")
    train_region = [s.truncate(len(s) - tau) for s in panel]
    base = _model_params(args, args.model, plan.prediction_length)
    result = tune(_factory(args.model, base, plan.prediction_length), _grid(args.model), train_region, plan,
                  args.samples, args.seed, args.threads)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_tuning_csv(args.model, result, args.out_dir / f"tuning_{args.model}.csv")
    print(f"{args.model}: best {result.best} with mean quantile loss {result.best_score:.3f}")


def cmd_histogram(args) -> None:
    manifest = _manifest(args)
    panel = load_dataset(manifest)
    tau = manifest.prediction_length * manifest.num_windows
    counts, edges = histogram(panel, holdout=tau, bins=args.bins)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "histogram.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([fmt(lo), fmt(hi), int(c)])
    plotting.histogram_figure(counts, edges, args.out_dir / "histogram.png", title=_dataset_name(args, manifest))
    print(f"wrote {len(counts)} bins to {args.out_dir / 'histogram.csv'}")


def cmd_probe(args) -> None:
    manifest = _manifest(args)
    panel = load_dataset(manifest)
    if args.series_id is None:
        series = panel[0]
    else:
        matches = [s for s in panel if s.id == args.series_id]
        if not matches:
            raise UsageError(f"series {args.series_id!r} not found in {manifest.path}")
        series = matches[0]
    model = _fitted_model(args, args.model, panel, manifest)
    T = model.context_length_for(series)
    n = len(series)
    window = series.values[None, n - T:]
    probs = np.broadcast_to(np.asarray(model.source(series, 1)(window, n), dtype=float), (1, T))[0]
    stamps = series.timestamps(n - T, n)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "probe.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "value", "probability"])
        for ts, v, p in zip(stamps, window[0], probs):
            # probabilities keep full precision so the column sums to one
            writer.writerow([ts.isoformat(timespec="minutes"), fmt(v), repr(float(p))])
    plotting.probe_figure(stamps, window[0], probs, args.out_dir / "probe.png", title=f"{args.model}: {series.id}")
    top = int(np.argmax(probs))
    print(f"{series.id}: highest probability {probs[top]:.3f} at {stamps[top].isoformat(timespec='minutes')}")


COMMANDS = {
    "synth": cmd_synth,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "tune": cmd_tune,
    "histogram": cmd_histogram,
    "probe": cmd_probe,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 2 on usage errors, 0 for --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if hasattr(args, "model"):
            _check_flags(args)
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except DatasetError as exc:
        print(json.dumps({"error": "dataset", "path": exc.path,
                          "problems": [{"line": n, "message": m} for n, m in exc.problems]}), file=sys.stderr)
        return 1
    except Exception as exc:
        logger.debug("failure", exc_info=True)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
