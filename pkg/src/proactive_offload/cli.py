"""Command-line entry point: train, predict, simulate and compare.

Configuration is an INI file. Grid axes (``W``, ``E``, ``M``, ``k``,
``w_past``, ``T_DI``, ``r2``) in ``[experiment]`` accept comma-separated
lists; every experiment is the cartesian product of those axes. Every
resolved value is echoed to ``resolved_config`` in the output directory.

Example::

    [experiment]
    W = 50, 100
    E = 500
    k = 3
    w_past = 0.3, 0.7
    repetitions = 100

    [trace]
    source = csv
    path = ENB2012_data.csv
    column = Y1
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import itertools
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .aggregation import AggregationWeights, wgm
from .demand_store import DemandWindow
from .errors import ConfigError, TrainingDivergenceError, ValidationError
from .lstm import TrainingConfig, predict_matrix, save_params
from .rewards import RewardConfig
from .simulator import CostModel, ExperimentConfig, ForecasterSpec, MetricsReport, TraceSpec, \
    forecaster_for, pretrain, run_experiment

log = logging.getLogger(__name__)

METRICS_HEADER = ["experiment_id", "W", "E", "M", "k", "w_past", "T_DI", "r2", "repetition",
                  "tau_mean_s", "delta", "omega"]
COMPARISON_HEADER = ["experiment_id", "delta_proposed", "delta_etsi", "difference"]
PREDICTION_HEADER = ["task_id", "di_past", "di_future", "di_final"]

GRID_AXES = {"W": int, "E": int, "M": int, "k": int, "w_past": float, "T_DI": float, "r2": float}
FULL_GRID = {"W": [50, 100], "E": [500, 1000, 5000], "k": [3], "w_past": [0.3, 0.7],
             "T_DI": [0.5], "r2": [2.0, 10.0, 100.0]}

_EXPERIMENT_SCALARS = {
    "repetitions": int, "seed": int, "l": int, "extra_epochs": int, "arrival_prob": float,
    "service_fraction": float, "trigger_fraction": float, "decisions_per_repetition": int,
    "lambda_scale": float, "peer_count": int,
}
_REWARD_KEYS = {
    "r1": float, "t_lambda": float, "gamma": float, "delta": float, "activation_fraction": float,
    "load_gamma": float, "load_delta": float, "penalty_mode": str,
}
_TRACE_KEYS = {"source": str, "path": str, "column": str, "kind": str, "spread": float,
               "persistence": float}
_TRAINING_KEYS = {
    "epochs": int, "learning_rate": float, "input_len": int, "seed": int, "gradient_clip": float,
    "hidden_dim": int, "input_dim": int, "optimizer": str, "candidate": str,
}
_FORECASTER_KEYS = {"weights": str, "train_tasks": int, "train_horizon": int, "max_samples": int,
                    "seed_offset": int}
_COST_KEYS = {"execution": float, "migration": float, "remote_waiting": float, "response": float}


@dataclass
class RunManifest:
    config_path: str | None
    experiments: list[ExperimentConfig]
    out_dir: Path
    subcommand: str
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    parser: configparser.ConfigParser | None = None


# ---------------------------------------------------------------- config

def _convert(value: str, kind: type, where: str):
    text = value.strip()
    if kind is str:
        return text
    if text.lower() in ("none", ""):
        return None
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {kind.__name__}") from None


def _section(parser: configparser.ConfigParser, name: str, keys: dict) -> dict:
    if not parser.has_section(name):
        return {}
    out = {}
    for key, raw in parser.items(name):
        if key not in keys:
            raise ConfigError(f"[{name}] unknown key {key!r}; expected one of {sorted(keys)}")
        out[key] = _convert(raw, keys[key], f"[{name}] {key}")
    return out


def _axis(raw: str, kind: type, name: str) -> list:
    values = [_convert(v, kind, f"[experiment] {name}") for v in raw.split(",") if v.strip()]
    if not values:
        raise ConfigError(f"[experiment] {name} is empty")
    return values


def read_config(path: str | os.PathLike | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep W / E / T_DI case
    if path is None:
        return parser
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parser


def resolve(parser: configparser.ConfigParser, seed: int | None = None,
            full_grid: bool = False) -> list[ExperimentConfig]:
    """Expand the grid and validate every point before any work starts."""
    exp = dict(parser.items("experiment")) if parser.has_section("experiment") else {}
    axes: dict[str, list] = {}
    scalars: dict = {}
    for key, raw in exp.items():
        if key in GRID_AXES:
            axes[key] = _axis(raw, GRID_AXES[key], key)
        elif key in _EXPERIMENT_SCALARS:
            scalars[key] = _convert(raw, _EXPERIMENT_SCALARS[key], f"[experiment] {key}")
        else:
            raise ConfigError(f"[experiment] unknown key {key!r}")
    if full_grid:
        axes.update({k: list(v) for k, v in FULL_GRID.items()})
        axes.pop("M", None)
        scalars.setdefault("repetitions", 100)
    if seed is not None:
        scalars["seed"] = seed

    reward_kw = _section(parser, "reward", _REWARD_KEYS)
    trace_kw = _section(parser, "trace", _TRACE_KEYS)
    synth = tuple(sorted((k, _synthetic_value(v)) for k, v in parser.items("synthetic"))) \
        if parser.has_section("synthetic") else ()
    training_kw = _section(parser, "lstm", {**_TRAINING_KEYS, **_FORECASTER_KEYS})
    forecaster_kw = {k: training_kw.pop(k) for k in list(training_kw) if k in _FORECASTER_KEYS}
    cost_kw = _section(parser, "cost", _COST_KEYS)

    try:
        trace = TraceSpec(params=synth, **trace_kw)
        training = TrainingConfig(**{k: v for k, v in training_kw.items() if v is not None or k == "gradient_clip"})
        forecaster = ForecasterSpec(training=training, **forecaster_kw)
        cost = CostModel(**cost_kw)
    except (TypeError, ValidationError) as exc:
        raise ConfigError(str(exc)) from None
    if trace.source == "csv" and not Path(trace.path).is_file():
        raise ConfigError(f"trace file not found: {trace.path}")
    if forecaster.weights and not Path(forecaster.weights).is_file():
        raise ConfigError(f"weight file not found: {forecaster.weights}")

    names = list(GRID_AXES)
    grid = [axes.get(n, [None]) for n in names]
    configs = []
    for point in itertools.product(*grid):
        values = dict(zip(names, point))
        try:
            reward = RewardConfig(**{**reward_kw, **({"r2": values["r2"]} if values["r2"] is not None else {})})
            kw = {"reward": reward, "trace": trace, "forecaster": forecaster, "cost": cost, **scalars}
            for axis, attr in (("W", "w"), ("E", "e_total"), ("M", "m"), ("k", "k"),
                               ("w_past", "w_past"), ("T_DI", "t_di")):
                if values[axis] is not None:
                    kw[attr] = values[axis]
            configs.append(ExperimentConfig(**kw))
        except (TypeError, ValidationError) as exc:
            raise ConfigError(f"grid point {values}: {exc}") from None
    ids = [c.experiment_id for c in configs]
    if len(set(ids)) != len(ids):
        raise ConfigError("grid contains duplicate experiment ids")
    return configs


def _synthetic_value(raw: str):
    try:
        return float(raw)
    except ValueError:
        return raw.strip()


def resolved_config_text(configs: Sequence[ExperimentConfig], manifest: RunManifest | None = None) -> str:
    """Every resolved value of every grid point, as INI."""
    out = configparser.ConfigParser()
    out.optionxform = str
    if manifest is not None:
        out["run"] = {"subcommand": manifest.subcommand, "config": str(manifest.config_path),
                      "out": str(manifest.out_dir), "timestamp": manifest.timestamp}
    for cfg in configs:
        section = {}
        for f in fields(cfg):
            value = getattr(cfg, f.name)
            if f.name in ("reward", "trace", "cost"):
                for sub in fields(value):
                    section[f"{f.name}.{sub.name}"] = repr(getattr(value, sub.name))
            elif f.name == "forecaster":
                for sub in fields(value):
                    if sub.name == "training":
                        for tf in fields(value.training):
                            section[f"training.{tf.name}"] = repr(getattr(value.training, tf.name))
                    else:
                        section[f"forecaster.{sub.name}"] = repr(getattr(value, sub.name))
            else:
                section[f.name] = repr(value)
        out[cfg.experiment_id] = section
    buf = io.StringIO()
    out.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------- output

def atomic_write(path: Path, text: str) -> Path:
    """Write UTF-8 text with LF endings via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_bytes(path: Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def metrics_rows(report: MetricsReport) -> list[list]:
    cfg = report.config
    head = [report.experiment_id, cfg.w, cfg.e_total, cfg.m, cfg.k, cfg.w_past, cfg.t_di, cfg.reward.r2]
    rows = [head + [r.repetition, r.tau_mean, r.delta, r.omega] for r in report.repetitions]
    rows.append(head + ["mean", report.tau, report.delta, report.omega])
    return rows


def comparison_rows(reports: Sequence[MetricsReport], order: tuple[str, str] = ("proposed", "etsi")) -> list[list]:
    """Per grid point: both Δ values and their difference, first operand minus second."""
    rows = []
    for rep in reports:
        values = {"proposed": rep.delta, "etsi": rep.delta_etsi}
        a, b = values[order[0]], values[order[1]]
        rows.append([rep.experiment_id, values["proposed"], values["etsi"], a - b])
    return rows


# ---------------------------------------------------------------- commands

def _manifest(args, subcommand: str) -> RunManifest:
    parser = read_config(args.config)
    configs = resolve(parser, seed=args.seed, full_grid=getattr(args, "full_grid", False))
    manifest = RunManifest(args.config, configs, Path(args.out), subcommand, parser=parser)
    return manifest


def cmd_train(args) -> int:
    manifest = _manifest(args, "train")
    cfg = manifest.experiments[0]
    spec = replace(cfg.forecaster, weights=None)
    start = time.perf_counter()
    try:
        params, curve = pretrain(cfg.trace, spec, cfg.seed)
    except TrainingDivergenceError as exc:
        print(f"error: training diverged at epoch {exc.epoch} (loss {exc.loss})", file=sys.stderr)
        return 1
    elapsed = time.perf_counter() - start
    out = manifest.out_dir
    atomic_write_bytes(out / "lstm_weights.txt", save_params(params))
    atomic_write(out / "loss_curve.csv", csv_text(["epoch", "mse"], enumerate(curve)))
    atomic_write(out / "resolved_config", resolved_config_text([cfg], manifest))
    print(f"trained {spec.training.epochs} epochs in {elapsed:.2f} s; final mse {curve[-1]:.6g}")
    return 0


def cmd_predict(args) -> int:
    """Fill a window from the trace and write each task's demand indicators."""
    manifest = _manifest(args, "predict")
    cfg = manifest.experiments[0]
    params = forecaster_for(cfg)
    trace = cfg.trace.build(cfg.m, cfg.w, cfg.seed)
    window = DemandWindow(cfg.w, trace.task_ids)
    for t in range(trace.horizon):
        window.record_array(trace.epoch(t))
    span = max(cfg.l, params.input_len + params.input_dim - 1)
    recent = window.matrix(span).T
    future = predict_matrix(params, recent)
    past = recent[:, span - cfg.l:].mean(axis=1)
    weights = AggregationWeights(cfg.w_past)
    rows = [[tid, float(dp), float(df), wgm(float(dp), float(df), weights)]
            for tid, dp, df in zip(trace.task_ids, past, future)]
    out = manifest.out_dir
    atomic_write(out / "predictions.csv", csv_text(PREDICTION_HEADER, rows))
    atomic_write(out / "resolved_config", resolved_config_text([cfg], manifest))
    print(f"wrote {len(rows)} predictions to {out / 'predictions.csv'}")
    return 0


def _run_grid(manifest: RunManifest) -> tuple[list[MetricsReport], list[str]]:
    reports, failures = [], []
    for cfg in manifest.experiments:
        try:
            log.info("running %s", cfg.experiment_id)
            reports.append(run_experiment(cfg))
        except (ConfigError, ValidationError) as exc:
            failures.append(f"{cfg.experiment_id}: {exc}")
    return reports, failures


def _report_failures(failures: list[str]) -> int:
    for line in failures:
        print(f"failed: {line}", file=sys.stderr)
    return 1 if failures else 0


def cmd_simulate(args) -> int:
    manifest = _manifest(args, "simulate")
    reports, failures = _run_grid(manifest)
    out = manifest.out_dir
    rows = [row for rep in reports for row in metrics_rows(rep)]
    atomic_write(out / "metrics.csv", csv_text(METRICS_HEADER, rows))
    for rep in reports:
        atomic_write(out / f"{rep.experiment_id}_tau.csv", csv_text(["sample_s"], ([s] for s in rep.tau_samples)))
    atomic_write(out / "resolved_config", resolved_config_text(manifest.experiments, manifest))
    for rep in reports:
        print(f"{rep.experiment_id}: delta={rep.delta:.4f} omega={rep.omega:.4f} tau={rep.tau * 1e3:.3f} ms")
    return _report_failures(failures)


def cmd_compare(args) -> int:
    manifest = _manifest(args, "compare")
    order = tuple(args.order.split(","))
    if sorted(order) != ["etsi", "proposed"]:
        raise ConfigError("--order must name proposed and etsi, e.g. 'proposed,etsi'")
    reports, failures = _run_grid(manifest)
    out = manifest.out_dir
    atomic_write(out / "comparison.csv", csv_text(COMPARISON_HEADER, comparison_rows(reports, order)))
    atomic_write(out / "resolved_config", resolved_config_text(manifest.experiments, manifest))
    for rep in reports:
        print(f"{rep.experiment_id}: proposed={rep.delta:.4f} etsi={rep.delta_etsi:.4f}")
    return _report_failures(failures)


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "simulate": cmd_simulate, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="proactive-offload", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI experiment config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override the configured seed")
        if name in ("simulate", "compare"):
            p.add_argument("--full-grid", action="store_true",
                           help="run W={50,100} x E={500,1000,5000} x w_past={0.3,0.7} x r2={2,10,100}, k=3")
        if name == "compare":
            p.add_argument("--order", default="proposed,etsi",
                           help="operand order of the difference column")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
