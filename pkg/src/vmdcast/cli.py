"""Command-line pipeline: synth, ingest, diagnose, decompose, build-dataset,
train, evaluate, and the all-in-one run.

A run directory holds every stage's artifacts under fixed names, so
``run`` and the chained single-stage subcommands produce byte-identical
files given the same config and seed. ``run`` finishes by writing
``manifest.json`` with the effective config and a sha256 per artifact.

Exit codes: 0 ok, 2 usage/config, 3 data, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import evaluation, lstm, swvmd
from .diagnostics import adf_test, hurst_rs
from .errors import ConfigError, DataError, NumericalError, VmdcastError
from .ingest import SplitSpec, ZScoreScaler, load_csv, log_returns, split
from .lstm import NetworkConfig, TrainConfig
from .swvmd import SwVmdConfig
from .vmd import VmdConfig, vmd_decompose

MODEL_IDS = ("swvmd", "baseline")
PRESETS = ("price", "return")


@dataclass(frozen=True)
class RunConfig:
    input: str = ""
    preset: str = "price"
    seed: int = 0
    clip_sigma: float = 3.0
    swvmd: SwVmdConfig = field(default_factory=SwVmdConfig)
    vmd: VmdConfig = field(default_factory=VmdConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}, got {self.preset!r}")


def _nested(cls, doc: dict, key: str):
    sub = doc.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"config section {key!r} must be an object")
    allowed = {f.name for f in fields(cls)}
    unknown = set(sub) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
    return cls(**sub)


def config_from_dict(doc: dict) -> RunConfig:
    """Build a RunConfig from a JSON document; unknown keys are rejected."""
    if "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]  # accept a manifest as config input
    allowed = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {k: doc[k] for k in ("input", "preset", "seed", "clip_sigma") if k in doc}
    # the vmd seed follows the run seed unless the file pins one
    vmd_doc = dict(doc.get("vmd", {}))
    vmd_doc.setdefault("seed", kwargs.get("seed", 0))
    train_doc = dict(doc.get("train", {}))
    train_doc.setdefault("seed", kwargs.get("seed", 0))
    merged = dict(doc)
    merged["vmd"] = vmd_doc
    merged["train"] = train_doc
    return RunConfig(
        **kwargs,
        swvmd=_nested(SwVmdConfig, merged, "swvmd"),
        vmd=_nested(VmdConfig, merged, "vmd"),
        network=_nested(NetworkConfig, merged, "network"),
        train=_nested(TrainConfig, merged, "train"),
        split=_nested(SplitSpec, merged, "split"),
    )


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if "config" in doc and isinstance(doc["config"], dict):
            doc = doc["config"]
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    return config_from_dict(doc)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("VMDCAST_WORKERS", "1")))
    except ValueError:
        return 1


class StageError(VmdcastError):
    def __init__(self, stage: str, original: Exception):
        self.stage = stage
        self.original = original
        super().__init__(f"stage {stage}: {original}")


def _run_stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except VmdcastError as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------- synth

_SYNTH_KINDS = ("white-noise", "random-walk", "ar1", "two-tone", "trend-cycle")


def _ar1_noise(rng, n: int, phi: float, sigma: float) -> np.ndarray:
    eps = rng.normal(0.0, sigma, size=n)
    x = np.zeros(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + eps[t]
    return x


def synth_series(kind: str, length: int, seed: int, params: dict | None = None) -> np.ndarray:
    """Deterministic synthetic close series; always strictly positive."""
    if kind not in _SYNTH_KINDS:
        raise ConfigError(f"unknown kind {kind!r}; choose from {_SYNTH_KINDS}")
    if length < 2:
        raise ConfigError("length must be >= 2")
    p = params or {}
    base = float(p.get("base", 100.0))
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    if kind == "white-noise":
        close = base + float(p.get("sigma", 1.0)) * rng.normal(size=length)
    elif kind == "random-walk":
        steps = float(p.get("sigma", 0.01)) * rng.normal(size=length)
        steps[0] = 0.0
        close = base * np.exp(np.cumsum(steps))
    elif kind == "ar1":
        close = base + _ar1_noise(rng, length, float(p.get("phi", 0.5)),
                                  float(p.get("sigma", 1.0)))
    elif kind == "two-tone":
        freqs = p.get("freqs") or [0.05, 0.25]
        amps = p.get("amps") or [1.0] * len(freqs)
        if len(amps) != len(freqs):
            raise ConfigError("need one amplitude per frequency")
        close = base + sum(
            a * np.cos(2.0 * np.pi * f * t) for f, a in zip(freqs, amps)
        )
    else:  # trend-cycle
        close = (
            base
            + float(p.get("slope", 0.005)) * t
            + float(p.get("amp", 5.0)) * np.sin(2.0 * np.pi * t / float(p.get("period", 250.0)))
            + _ar1_noise(rng, length, float(p.get("phi", 0.6)), float(p.get("sigma", 0.5)))
        )
    if np.any(close <= 0):
        raise DataError(
            f"synthetic {kind} series dipped to {close.min():.4g}; raise base "
            "or shrink the fluctuation parameters"
        )
    return close


def write_series_csv(path, dates, close, pre_close=None, turnover=None) -> None:
    close = np.asarray(close, dtype=np.float64)
    if pre_close is None:
        pre_close = np.concatenate([[close[0]], close[:-1]])
    if turnover is None:
        idx = np.arange(close.shape[0])
        turnover = 1e6 * (1.0 + 0.1 * np.sin(2.0 * np.pi * idx / 50.0))
    with open(path, "w") as handle:
        handle.write("date,close,pre_close,turnover\n")
        for d, c, pc, tv in zip(dates, close, pre_close, turnover):
            handle.write(
                f"{d.isoformat()},{float(c)!r},{float(pc)!r},{float(tv)!r}\n"
            )


def _synthetic_dates(n: int) -> list[dt.date]:
    start = dt.date(2000, 1, 1)
    return [start + dt.timedelta(days=i) for i in range(n)]


def cmd_synth(kind: str, length: int, seed: int, out, params: dict | None = None) -> Path:
    close = synth_series(kind, length, seed, params)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_series_csv(out, _synthetic_dates(length), close)
    return out


# ---------------------------------------------------------------- stages

def stage_ingest(input_csv, outdir: Path) -> None:
    """Validate and canonicalize the input into series.csv + returns.csv."""
    series = load_csv(input_csv)
    write_series_csv(outdir / "series.csv", series.dates, series.close,
                     series.pre_close, series.turnover)
    returns = log_returns(series)
    with open(outdir / "returns.csv", "w") as handle:
        handle.write("date,r\n")
        for d, r in zip(returns.dates, returns.r):
            handle.write(f"{d.isoformat()},{float(r)!r}\n")


def stage_diagnose(series_csv, out_json) -> dict:
    """ADF and Hurst for close levels and log returns."""
    series = load_csv(series_csv)
    returns = log_returns(series)
    report = {}
    for name, values in (("close", series.close), ("log_returns", returns.r)):
        report[name] = {
            "adf": adf_test(values).to_dict(),
            "hurst": hurst_rs(values).to_dict(),
        }
    with open(out_json, "w") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
    return report


def stage_decompose(series_csv, outdir: Path, vmd_config: VmdConfig) -> None:
    """Whole-series decomposition to CSV plus a config sidecar."""
    series = load_csv(series_csv)
    out = vmd_decompose(series.close, vmd_config)
    k = vmd_config.k
    with open(outdir / "decomposition.csv", "w") as handle:
        names = [f"imf_{j + 1}" for j in range(k)] + [f"omega_{j + 1}" for j in range(k)]
        handle.write("date," + ",".join(names) + "\n")
        for i, d in enumerate(series.dates):
            cells = [repr(float(out.modes[j, i])) for j in range(k)]
            cells += [repr(float(w)) for w in out.omegas]
            handle.write(d.isoformat() + "," + ",".join(cells) + "\n")
    with open(outdir / "decompose_config.json", "w") as handle:
        json.dump(asdict(vmd_config), handle, indent=2, sort_keys=True)


def _base_series(cfg: RunConfig, outdir: Path):
    series = load_csv(outdir / "series.csv")
    if cfg.preset == "price":
        return series.dates, series.close
    returns = log_returns(series)
    return returns.dates, returns.r


def stage_build_dataset(cfg: RunConfig, outdir: Path) -> dict:
    """Normalize, decompose with trailing windows, emit the six sample files.

    The scaler is fitted only on values up to the last training target,
    then persisted to scaler.json for reuse at evaluation time.
    """
    dates, values = _base_series(cfg, outdir)
    sw = cfg.swvmd
    n = values.shape[0]
    n_days = (n - sw.window) // sw.step + 1 if n >= sw.window else 0
    n_samples = n_days - sw.horizon - (sw.lookback - 1)
    if n_samples <= 0:
        raise DataError(
            f"{n} observations produce no samples with window={sw.window}, "
            f"lookback={sw.lookback}, horizon={sw.horizon}"
        )
    train_r, val_r, test_r = split(n_samples, cfg.split)

    last_train_day = sw.lookback - 1 + (train_r.stop - 1) + sw.horizon
    fit_end = sw.window - 1 + last_train_day * sw.step
    scaler = ZScoreScaler(clip_sigma=cfg.clip_sigma).fit(values[: fit_end + 1, None])
    normalized = scaler.transform(values[:, None])[:, 0]

    day_idx = list(range(sw.window - 1, n, sw.step))
    if cfg.preset == "price":
        # targets are normalized closes, never winsorized
        target_source = scaler.transform(values[:, None], clip=False)[:, 0]
    else:
        target_source = values  # raw log returns
    targets = target_source[day_idx]

    features = swvmd.sliding_decompose(
        normalized, dates, sw, cfg.vmd, workers=_workers()
    )
    swvmd_samples = swvmd.build_dataset(features, targets, sw)
    baseline_samples = swvmd.build_baseline_dataset(normalized, dates, targets, sw)

    for model_id, samples in (("swvmd", swvmd_samples), ("baseline", baseline_samples)):
        for split_name, rng in (("train", train_r), ("val", val_r), ("test", test_r)):
            subset = samples[rng.start : rng.stop]
            swvmd.write_samples(outdir / f"{model_id}_{split_name}.jsonl", subset)

    (outdir / "scaler.json").write_text(scaler.to_json())
    meta = {
        "preset": cfg.preset,
        "n_observations": n,
        "n_feature_days": n_days,
        "n_samples": n_samples,
        "splits": {
            "train": [train_r.start, train_r.stop],
            "val": [val_r.start, val_r.stop],
            "test": [test_r.start, test_r.stop],
        },
        "scaler_fit_end_index": fit_end,
    }
    with open(outdir / "dataset_meta.json", "w") as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
    return meta


def stage_train(cfg: RunConfig, outdir: Path, model_id: str) -> None:
    """Train one model from its jsonl splits; write checkpoint + loss CSV."""
    if model_id not in MODEL_IDS:
        raise ConfigError(f"model must be one of {MODEL_IDS}, got {model_id!r}")
    train_set = swvmd.read_samples(outdir / f"{model_id}_train.jsonl")
    val_set = swvmd.read_samples(outdir / f"{model_id}_val.jsonl")
    model, history = lstm.train(train_set, val_set, cfg.network, cfg.train)
    lstm.save_model(outdir / f"model_{model_id}", model,
                    extra={"model_id": model_id, "seed": cfg.train.seed})
    lstm.save_history(outdir / f"loss_{model_id}.csv", history)


def _actual_context(cfg: RunConfig, outdir: Path):
    """Per-date actuals needed to score predictions."""
    series = load_csv(outdir / "series.csv")
    close_by_date = dict(zip(series.dates, series.close))
    index_by_date = {d: i for i, d in enumerate(series.dates)}
    returns = log_returns(series)
    return_by_date = dict(zip(returns.dates, returns.r))
    return series, close_by_date, index_by_date, return_by_date


def stage_evaluate(cfg: RunConfig, outdir: Path) -> dict:
    """Score both models on the test split and write the comparison files."""
    series, close_by_date, index_by_date, return_by_date = _actual_context(cfg, outdir)
    scaler = ZScoreScaler.from_json((outdir / "scaler.json").read_text())

    reports = {}
    histories = {}
    for model_id in MODEL_IDS:
        model = lstm.load_model(outdir / f"model_{model_id}")
        test_set = swvmd.read_samples(outdir / f"{model_id}_test.jsonl")
        if not test_set:
            raise DataError(f"{model_id}_test.jsonl holds no samples")
        preds = lstm.predict(model, np.stack([s.input for s in test_set]))
        dates = [s.target_date for s in test_set]
        actual_returns = np.array([return_by_date[d] for d in dates])
        actual_labels = evaluation.classify_trends(actual_returns)

        if cfg.preset == "price":
            prices = scaler.inverse_transform(preds[:, None])[:, 0]
            prior = np.array(
                [series.close[index_by_date[d] - 1] for d in dates]
            )
            predicted_labels = evaluation.price_to_trend(prices, prior)
            actual_values = np.array([close_by_date[d] for d in dates])
            predicted_values = prices
        else:
            predicted_labels = evaluation.classify_trends(preds)
            actual_values = actual_returns
            predicted_values = preds

        report = evaluation.accuracy(predicted_labels, actual_labels, model_id)
        reports[model_id] = report
        histories[model_id] = lstm.load_history(outdir / f"loss_{model_id}.csv")

        evaluation.write_predictions_csv(
            outdir / f"predictions_{model_id}.csv",
            zip(
                (d.isoformat() for d in dates),
                actual_values,
                predicted_values,
                actual_labels,
                predicted_labels,
            ),
        )
        with open(outdir / f"accuracy_{model_id}.json", "w") as handle:
            json.dump(report.to_dict(), handle, indent=2, sort_keys=True)

    evaluation.write_accuracy_json(
        outdir / "accuracy.json", [reports["swvmd"], reports["baseline"]]
    )
    evaluation.write_loss_curves_csv(outdir / "loss_curves.csv", histories)
    doc = evaluation.compare(
        reports["swvmd"], reports["baseline"],
        histories["swvmd"], histories["baseline"],
    )
    with open(outdir / "comparison.json", "w") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
    return doc


def hash_artifacts(outdir: Path) -> dict[str, str]:
    """sha256 of every file in the run directory except the manifest."""
    hashes = {}
    for path in sorted(outdir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            hashes[str(path.relative_to(outdir))] = hashlib.sha256(
                path.read_bytes()
            ).hexdigest()
    return hashes


def cmd_run(cfg: RunConfig, outdir) -> Path:
    """Execute every stage and seal the directory with a manifest."""
    if not cfg.input:
        raise ConfigError("run needs an input CSV (config 'input' or --input)")
    if not Path(cfg.input).exists():
        raise ConfigError(f"input file not found: {cfg.input}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    _run_stage("ingest", stage_ingest, cfg.input, outdir)
    _run_stage("diagnose", stage_diagnose, outdir / "series.csv",
               outdir / "diagnostics.json")
    _run_stage("build-dataset", stage_build_dataset, cfg, outdir)
    # the two trainings are independent jobs; run them in parallel processes
    with ProcessPoolExecutor(max_workers=2) as pool:
        jobs = {
            model_id: pool.submit(stage_train, cfg, outdir, model_id)
            for model_id in MODEL_IDS
        }
        for model_id, job in jobs.items():
            try:
                job.result()
            except VmdcastError as exc:
                raise StageError(f"train[{model_id}]", exc) from exc
    _run_stage("evaluate", stage_evaluate, cfg, outdir)

    manifest = {"config": asdict(cfg), "artifacts": hash_artifacts(outdir),
                "hash_algorithm": "sha256"}
    with open(outdir / "manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
    return outdir


# ---------------------------------------------------------------- argparse

def _add_config_arg(parser):
    parser.add_argument("--config", help="run config JSON (or a manifest.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmdcast",
        description="Sliding-window VMD features vs. raw series for LSTM "
        "trend forecasting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a deterministic synthetic series CSV")
    p.add_argument("--kind", required=True, choices=_SYNTH_KINDS)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--base", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--phi", type=float)
    p.add_argument("--slope", type=float)
    p.add_argument("--amp", type=float)
    p.add_argument("--period", type=float)
    p.add_argument("--freq", type=float, action="append", dest="freqs")
    p.add_argument("--tone-amp", type=float, action="append", dest="amps")

    p = sub.add_parser("ingest", help="validate a CSV into a run directory")
    p.add_argument("--input", required=True)
    p.add_argument("--outdir", required=True)

    p = sub.add_parser("diagnose", help="ADF + Hurst report for a series CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("decompose", help="whole-series VMD to CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--alpha", type=float, default=2000.0)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--init", choices=("uniform", "zero", "random"), default="uniform")
    p.add_argument("--dc-mode", action="store_true")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("build-dataset", help="normalize, decompose, emit samples")
    _add_config_arg(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train one model inside a run directory")
    _add_config_arg(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--model", required=True, choices=MODEL_IDS)
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=PRESETS)

    p = sub.add_parser("evaluate", help="score both models on the test split")
    _add_config_arg(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("run", help="full pipeline plus manifest")
    _add_config_arg(p)
    p.add_argument("--input")
    p.add_argument("--outdir", required=True)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--seed", type=int)

    return parser


def _overrides(args) -> dict:
    return {
        key: getattr(args, key, None)
        for key in ("input", "preset", "seed")
        if getattr(args, key, None) is not None
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            params = {
                k: getattr(args, k)
                for k in ("base", "sigma", "phi", "slope", "amp", "period",
                          "freqs", "amps")
                if getattr(args, k, None) is not None
            }
            out = cmd_synth(args.kind, args.length, args.seed, args.out, params)
            print(out)
        elif args.command == "ingest":
            outdir = Path(args.outdir)
            outdir.mkdir(parents=True, exist_ok=True)
            stage_ingest(args.input, outdir)
            print(outdir)
        elif args.command == "diagnose":
            stage_diagnose(args.input, args.out)
            print(args.out)
        elif args.command == "decompose":
            outdir = Path(args.outdir)
            outdir.mkdir(parents=True, exist_ok=True)
            vcfg = VmdConfig(
                k=args.k, alpha=args.alpha, tau=args.tau, tol=args.tol,
                max_iter=args.max_iter, init=args.init, dc_mode=args.dc_mode,
                seed=args.seed,
            )
            stage_decompose(args.input, outdir, vcfg)
            print(outdir)
        elif args.command in ("build-dataset", "train", "evaluate"):
            cfg = load_run_config(args.config, _overrides(args))
            outdir = Path(args.outdir)
            outdir.mkdir(parents=True, exist_ok=True)
            if args.command == "build-dataset":
                stage_build_dataset(cfg, outdir)
            elif args.command == "train":
                stage_train(cfg, outdir, args.model)
            else:
                stage_evaluate(cfg, outdir)
            print(outdir)
        elif args.command == "run":
            cfg = load_run_config(args.config, _overrides(args))
            print(cmd_run(cfg, args.outdir))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.original, NumericalError):
            return 4
        if isinstance(exc.original, ConfigError):
            return 2
        return 3
    except VmdcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
