"""Command-line entry point: ``ngrc {generate,train,forecast,sweep,report-complexity}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, fileio
from .config import ConfigError, RunConfig, load_config, parse_floats
from .errors import FormatError, IncompatibilityError, InvalidInputError, NgrcError
from .forecast import closed_loop_forecast, nrmse, prediction_horizon
from .harness import (BUILTIN_TABLES, SHARED_LABEL, ComplexityEntry, Experiment,
                      complexity_report, generate_recording, load_or_generate, write_complexity_csv)
from .lorenz96 import normalize
from .ridge import RidgeConfig, train

log = logging.getLogger("parallel_ngrc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--preset", help="main, small or flat")
    p.add_argument("--mode", choices=["independent", "shared"])
    p.add_argument("--alpha", type=float, help="ridge parameter")
    p.add_argument("--t-train", type=float, help="training time in MTU")
    p.add_argument("--t-record", type=float, help="recording length in MTU")
    p.add_argument("--seed-train", type=int)
    p.add_argument("--seed-ic", type=int)
    p.add_argument("--workers", type=int, help="worker threads (default: $NGRC_WORKERS or 1)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n-train-sets", type=int, help="training windows in the plan")
    p.add_argument("--n-ics", type=int, help="test windows at the end of the recording")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ngrc", description="Parallel NG-RC forecasting of Lorenz96 chaos")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="integrate the model and save a trajectory file")
    _add_common(p)
    p.add_argument("--csv", action="store_true", help="also write trajectory.csv")

    p = sub.add_parser("train", help="train readouts on a trajectory window")
    _add_common(p)
    p.add_argument("--trajectory", required=True)

    p = sub.add_parser("forecast", help="closed-loop forecast of a test window")
    _add_common(p)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--steps", type=int, help="forecast steps (default: the preset's test window)")

    p = sub.add_parser("sweep", help="alpha or training-time sweep")
    _add_common(p)
    p.add_argument("--axis", choices=["alpha", "ttrain"])
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--alpha-grid", help="comma-separated alphas for per-point optimization")
    p.add_argument("--trajectory", help="recording to use instead of simulating one")
    p.add_argument("--cache-dir", help="where simulated recordings are kept")

    p = sub.add_parser("report-complexity", help="training-cost tables")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--out")
    p.add_argument("--table", choices=["L8", "L40", "all"], default="all")
    p.add_argument("--entry", action="append", default=[],
                   help="custom row 'label,M,d_total[,units[,concat]]'")
    p.add_argument("--reference", help="label of the reference row (default: shared NG-RC)")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "preset": "preset", "mode": "mode", "t_train": "t_train", "t_record": "t_record",
        "seed_train": "seed_train", "seed_ic": "seed_ic", "workers": "workers", "out": "out",
        "steps": "steps", "cache_dir": "cache_dir", "n_train_sets": "n_train_sets", "n_ics": "n_ics",
    }
    for arg, attr in overrides.items():
        val = getattr(args, arg, None)
        if val is not None:
            setattr(cfg, attr, val)
    if getattr(args, "alpha", None) is not None:
        cfg.ridge = RidgeConfig(args.alpha)
    if getattr(args, "axis", None):
        cfg.sweep_axis = args.axis
    if getattr(args, "values", None):
        cfg.sweep_values = parse_floats(args.values)
    if getattr(args, "alpha_grid", None):
        cfg.alpha_grid = parse_floats(args.alpha_grid)
    return cfg.validate()


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _metadata(cfg: RunConfig, **extra) -> dict:
    preset = cfg.resolve_preset()
    meta = {
        "format_version": fileio.FORMAT_VERSION,
        "package_version": __version__,
        "preset": preset.name,
        "model": {k: getattr(preset.params, k) for k in preset.params.__dataclass_fields__},
        "integrator": {"method": "rk4", "h_internal": preset.h_internal, "dt_save": preset.dt_save,
                       "t_transient": preset.t_transient, "t_record": preset.t_record},
        "features": {"k": preset.features.k, "n_nn": preset.features.n_nn, "c": preset.features.c},
        "seeds": {"train": cfg.seed_train, "ic": cfg.seed_ic, "shuffle": cfg.shuffle_seed},
    }
    meta.update(extra)
    return meta


def cmd_generate(cfg: RunConfig, write_csv: bool = False) -> Path:
    preset = cfg.resolve_preset()
    out = _out_dir(cfg)
    grid = generate_recording(preset)
    path = out / "trajectory.l96t"
    fileio.write_trajectory(path, grid)
    fileio.write_json(out / "trajectory.json", _metadata(cfg, shape=[grid.L, grid.n_samples]))
    if write_csv:
        fileio.write_trajectory_csv(out / "trajectory.csv", grid)
    print(f"wrote {path}: {grid.L} x {grid.n_samples} samples, dt_save={grid.dt_save} MTU")
    return path


def _experiment(cfg: RunConfig, recording) -> Experiment:
    return Experiment(cfg.resolve_preset(), recording, cfg.n_train_sets, cfg.n_ics,
                      cfg.shuffle_seed, cfg.workers)


def cmd_train(cfg: RunConfig, trajectory) -> Path:
    preset = cfg.resolve_preset()
    recording = fileio.read_trajectory(trajectory)
    exp = _experiment(cfg, recording)
    window = exp.plan(cfg.t_train).train_window(cfg.seed_train)
    grid = normalize(recording.window(*window))
    start = time.perf_counter()
    w = train(grid, preset.features, RidgeConfig(preset.alpha), cfg.mode, workers=cfg.workers)
    elapsed = time.perf_counter() - start
    out = _out_dir(cfg)
    path = out / "weights.ngrw"
    fileio.write_weights(path, w)
    fileio.write_weights_csv(out / "weights.csv", w)
    M = grid.n_samples - preset.features.k
    fileio.write_json(out / "weights.json", _metadata(
        cfg, mode=cfg.mode, alpha=preset.alpha, t_train=cfg.t_train, train_window=list(window),
        M=M, d_total=preset.features.d_total, training_seconds=elapsed))
    print(f"mode={cfg.mode} readouts={w.weights.shape[0]} d_total={preset.features.d_total} "
          f"M={M} alpha={preset.alpha:g}")
    print(f"training time: {elapsed * 1e3:.1f} ms")
    return path


def check_compatible(w, preset, recording):
    if w.n_locations != recording.L:
        raise IncompatibilityError("L", w.n_locations, recording.L)
    for name in ("k", "n_nn", "c"):
        mine, theirs = getattr(preset.features, name), getattr(w.cfg, name)
        if mine != theirs:
            raise IncompatibilityError(name, theirs, mine)
    if recording.normalized and (recording.norm_mean, recording.norm_std) != (w.norm_mean, w.norm_std):
        raise IncompatibilityError("normalization", (w.norm_mean, w.norm_std),
                                   (recording.norm_mean, recording.norm_std))


def cmd_forecast(cfg: RunConfig, trajectory, weights):
    preset = cfg.resolve_preset()
    recording = fileio.read_trajectory(trajectory)
    w = fileio.read_weights(weights)
    if cfg.features is None:
        preset = dataclasses.replace(preset, features=w.cfg)
    check_compatible(w, preset, recording)
    k = w.cfg.k
    exp = Experiment(preset, recording if not recording.normalized else _raw(recording),
                     cfg.n_train_sets, cfg.n_ics, cfg.shuffle_seed, cfg.workers)
    start, stop = exp.plan(cfg.t_train).test_window(cfg.seed_ic)
    data = (exp.recording.data[:, start:stop] - w.norm_mean) / w.norm_std
    n_steps = data.shape[1] - k if cfg.steps is None else cfg.steps
    if n_steps > data.shape[1] - k:
        raise InvalidInputError(f"at most {data.shape[1] - k} steps of truth are available")

    t0 = time.perf_counter()
    fc = closed_loop_forecast(w, data[:, :k], n_steps)
    elapsed = time.perf_counter() - t0
    n = fc.predicted.shape[1]
    truth = data[:, k:k + n]
    times = preset.dt_save * np.arange(n)
    out = _out_dir(cfg)
    fileio.write_grid_csv(out / "truth.csv", truth, times)
    fileio.write_grid_csv(out / "predicted.csv", fc.predicted, times)
    fileio.write_grid_csv(out / "difference.csv", truth - fc.predicted, times)
    series = nrmse(truth, fc.predicted, preset.dt_save)
    series.truncated = fc.truncated
    fileio.write_nrmse_csv(out / "nrmse.csv", series.values, preset.dt_save)

    if n == 0 and not fc.truncated:
        horizon_time, censored = 0.0, True
    else:
        h = prediction_horizon(series)
        horizon_time, censored = h.time, h.censored
    msg = f"prediction horizon: {horizon_time:.2f} MTU"
    if preset.lyapunov_time:
        msg += f" = {horizon_time / preset.lyapunov_time:.2f} Lyapunov times"
    if censored:
        msg += " (censored: threshold not reached)"
    if fc.truncated:
        msg += f" (forecast diverged at step {fc.diverged_step})"
    print(msg)
    if n:
        print(f"forecast time: {elapsed / (n * w.n_locations) * 1e6:.2f} us per location per step")
    return horizon_time, censored


def _raw(recording):
    from .lorenz96 import denormalize
    return denormalize(recording)


def cmd_sweep(cfg: RunConfig, trajectory=None):
    preset = cfg.resolve_preset()
    if trajectory:
        recording = fileio.read_trajectory(trajectory)
        if recording.normalized:
            recording = _raw(recording)
    elif cfg.cache_dir:
        recording = load_or_generate(preset, preset.t_record, cfg.cache_dir)
    else:
        recording = generate_recording(preset)
    exp = _experiment(cfg, recording)
    out = _out_dir(cfg)
    if cfg.sweep_axis == "alpha":
        values = cfg.sweep_values or cfg.alpha_grid
        result = exp.sweep_alpha(cfg.mode, cfg.t_train, values)
        name = f"sweep_alpha_{preset.name}_{cfg.mode}"
    else:
        values = cfg.sweep_values or [1.0, 2.0, 5.0, 10.0, 20.0]
        fixed = cfg.ridge.alpha if cfg.ridge is not None else None
        result = exp.sweep_train_time(cfg.mode, values, fixed, cfg.alpha_grid)
        name = f"sweep_ttrain_{preset.name}_{cfg.mode}"
    result.write_csv(out / f"{name}.csv")
    result.write_raw_csv(out / f"{name}_raw.csv")
    for v, m, s, a, bad in zip(result.values, result.mean, result.std_of_mean, result.alphas, result.failed):
        status = "FAILED" if bad else f"{m:.3f} +/- {s:.3f} MTU"
        print(f"{result.axis}={v:g} alpha={a:g}: {status}")
    return result


def _parse_entry(raw: str) -> ComplexityEntry:
    parts = [p.strip() for p in raw.split(",")]
    if not 3 <= len(parts) <= 5:
        raise ConfigError(f"entry must be 'label,M,d_total[,units[,concat]]', got {raw!r}")
    try:
        nums = [int(float(p)) for p in parts[1:]]
    except ValueError:
        raise ConfigError(f"non-numeric field in entry {raw!r}") from None
    units = nums[2] if len(nums) > 2 else 1
    concat = nums[3] if len(nums) > 3 else 1
    return ComplexityEntry(parts[0], "custom", nums[0], nums[1], n_units=units, concat=concat)


def cmd_report_complexity(out: str = ".", table: str = "all", entries: Optional[List[str]] = None,
                          reference: Optional[str] = None):
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    custom = [_parse_entry(e) for e in entries or []]
    names = ["L8", "L40"] if table == "all" else [table]
    reports = {}
    for name in names:
        rows_in = list(BUILTIN_TABLES[name]) + custom
        rows = complexity_report(rows_in, reference or SHARED_LABEL)
        write_complexity_csv(out_dir / f"complexity_{name}.csv", rows)
        reports[name] = rows
        print(f"complexity table {name}:")
        for r in rows:
            print(f"  {r.entry.label:<32s} M={r.entry.m_label:<10s} d_total={r.entry.d_total:<5d} "
                  f"units={r.entry.n_units:<3d} speedup={r.speedup:.3g}")
    return reports


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report-complexity":
            cmd_report_complexity(args.out or ".", args.table, args.entry, args.reference)
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "generate":
            cmd_generate(cfg, args.csv)
        elif args.command == "train":
            cmd_train(cfg, args.trajectory)
        elif args.command == "forecast":
            cmd_forecast(cfg, args.trajectory, args.weights)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.trajectory)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InvalidInputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NgrcError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
