"""Binary and CSV persistence.

All floats are IEEE-754 binary64, little-endian.

Trajectory file (``.l96t``)::

    b"L96T" | version u32 | L u64 | M_total u64 | dt_save f64 | t0 f64
    | norm_mean f64 | norm_std f64 | normalized u8 | data f64[L * M_total]

Weight file (``.ngrw``)::

    b"NGRW" | version u32 | mode u8 (0 independent, 1 shared) | L u64
    | d_total u64 | k u64 | n_nn u64 | c f64 | alpha f64 | norm_mean f64
    | norm_std f64 | weights f64[rows * d_total]

Data are row-major (location-major); ``rows`` is L for independent readouts
and 1 for a shared one.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError
from .features import FeatureConfig
from .lorenz96 import TrajectoryGrid
from .ridge import INDEPENDENT, SHARED, ReadoutWeights

TRAJECTORY_MAGIC = b"L96T"
WEIGHTS_MAGIC = b"NGRW"
FORMAT_VERSION = 1

_TRAJ_HEADER = struct.Struct("<4sIQQddddB")
_W_HEADER = struct.Struct("<4sIBQQQQdddd")
_MODE_TAGS = {INDEPENDENT: 0, SHARED: 1}
_TAG_MODES = {v: k for k, v in _MODE_TAGS.items()}

NRMSE_HEADER = ["t", "nrmse"]
SWEEP_HEADER = ["axis", "mean", "std_of_mean", "n"]
RAW_SAMPLES_HEADER = ["axis", "alpha", "train_seed", "ic_seed", "horizon", "censored"]
COMPLEXITY_HEADER = ["label", "ml_model", "M", "d_total", "N_in", "N_out",
                     "parallel_units", "cost", "speedup"]


def _write_atomic(path, payload: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_trajectory(path, grid: TrajectoryGrid):
    data = np.ascontiguousarray(grid.data, dtype="<f8")
    header = _TRAJ_HEADER.pack(TRAJECTORY_MAGIC, FORMAT_VERSION, grid.L, grid.n_samples,
                               grid.dt_save, grid.t0, grid.norm_mean, grid.norm_std,
                               int(bool(grid.normalized)))
    _write_atomic(path, header + data.tobytes())


def read_trajectory(path) -> TrajectoryGrid:
    raw = Path(path).read_bytes()
    if len(raw) < _TRAJ_HEADER.size or raw[:4] != TRAJECTORY_MAGIC:
        raise FormatError(f"{path}: not a trajectory file (bad magic)")
    magic, version, L, M, dt, t0, mean, std, normed = _TRAJ_HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported trajectory version {version}")
    body = raw[_TRAJ_HEADER.size:]
    if len(body) != 8 * L * M:
        raise FormatError(f"{path}: expected {8 * L * M} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f8").reshape(L, M).astype(np.float64)
    return TrajectoryGrid(data, dt_save=dt, t0=t0, norm_mean=mean, norm_std=std, normalized=bool(normed))


def write_weights(path, w: ReadoutWeights):
    cfg = w.cfg
    header = _W_HEADER.pack(WEIGHTS_MAGIC, FORMAT_VERSION, _MODE_TAGS[w.mode], w.n_locations,
                            cfg.d_total, cfg.k, cfg.n_nn, cfg.c, w.alpha, w.norm_mean, w.norm_std)
    _write_atomic(path, header + np.ascontiguousarray(w.weights, dtype="<f8").tobytes())


def read_weights(path) -> ReadoutWeights:
    raw = Path(path).read_bytes()
    if len(raw) < _W_HEADER.size or raw[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: not a weight file (bad magic)")
    magic, version, tag, L, d, k, n_nn, c, alpha, mean, std = _W_HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported weight-file version {version}")
    if tag not in _TAG_MODES:
        raise FormatError(f"{path}: unknown mode tag {tag}")
    mode = _TAG_MODES[tag]
    cfg = FeatureConfig(k=int(k), n_nn=int(n_nn), c=c)
    if cfg.d_total != d:
        raise FormatError(f"{path}: d_total {d} inconsistent with k={k}, n_nn={n_nn}")
    rows = L if mode == INDEPENDENT else 1
    body = raw[_W_HEADER.size:]
    if len(body) != 8 * rows * d:
        raise FormatError(f"{path}: expected {8 * rows * d} weight bytes, found {len(body)}")
    weights = np.frombuffer(body, dtype="<f8").reshape(rows, d).astype(np.float64)
    return ReadoutWeights(mode, weights, cfg, alpha, int(L), mean, std)


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def grid_header(L: int):
    return ["t"] + [f"x_{l + 1}" for l in range(L)]


def write_grid_csv(path, data: np.ndarray, times: np.ndarray):
    """One row per time sample: ``t, x_1, ..., x_L``."""
    data = np.asarray(data)
    _write_rows(path, grid_header(data.shape[0]),
                ([repr(float(t))] + [repr(float(v)) for v in data[:, m]] for m, t in enumerate(times)))


def write_trajectory_csv(path, grid: TrajectoryGrid):
    write_grid_csv(path, grid.data, grid.times())


def write_weights_csv(path, w: ReadoutWeights):
    header = ["row"] + [f"w_{q}" for q in range(w.cfg.d_total)]
    _write_rows(path, header, ([r] + [repr(float(v)) for v in row] for r, row in enumerate(w.weights)))


def write_nrmse_csv(path, values: np.ndarray, dt_save: float):
    _write_rows(path, NRMSE_HEADER,
                ((repr(n * dt_save), repr(float(v))) for n, v in enumerate(values)))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
