"""Closed-loop forecasting with parallel NG-RCs and its scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ForecastDivergenceError, InvalidInputError
from .features import quadratic_pairs, stencil_index
from .ridge import ReadoutWeights

DIVERGENCE_THRESHOLD = 1e3
DEFAULT_THRESHOLD = 0.3


class _Stepper:
    """Precomputed gather indices for evaluating all L readouts at once.

    ``history`` is ``(L, k)`` with the newest sample in the last column.
    """

    def __init__(self, w: ReadoutWeights):
        cfg = w.cfg
        L = w.n_locations
        self.cfg = cfg
        self.L = L
        idx = stencil_index(L, cfg)  # (L, n_in)
        cols = [idx * cfg.k + (cfg.k - 1 - tau) for tau in range(cfg.k)]
        self.gather = np.concatenate(cols, axis=1)  # into history.ravel()
        self.pi, self.pj = quadratic_pairs(cfg.d_lin)
        W = w.per_location()
        self.w_const = W[:, 0] * cfg.c
        self.w_lin = W[:, 1:1 + cfg.d_lin]
        self.w_quad = W[:, 1 + cfg.d_lin:]

    def __call__(self, history: np.ndarray) -> np.ndarray:
        lin = history.ravel()[self.gather]
        # overflow surfaces as inf/nan and is handled by the callers
        with np.errstate(over="ignore", invalid="ignore"):
            quad = lin[:, self.pi] * lin[:, self.pj]
            # row-wise reductions: every location is evaluated with identical
            # arithmetic, which keeps shared-mode forecasts exactly shift-covariant
            return self.w_const + (self.w_lin * lin).sum(axis=1) + (self.w_quad * quad).sum(axis=1)


def _check_history(w: ReadoutWeights, history: np.ndarray) -> np.ndarray:
    history = np.asarray(history, dtype=np.float64)
    if history.shape != (w.n_locations, w.cfg.k):
        raise InvalidInputError(
            f"history must have shape ({w.n_locations}, {w.cfg.k}), got {history.shape}"
        )
    return np.ascontiguousarray(history)


def one_step_predict(w: ReadoutWeights, history: np.ndarray) -> np.ndarray:
    """Predict ``x(t_{m+1})`` for all locations from the last ``k`` states."""
    history = _check_history(w, history)
    out = _Stepper(w)(history)
    if not np.all(np.isfinite(out)):
        raise ForecastDivergenceError("readout produced non-finite output")
    return out


@dataclass
class Forecast:
    """Closed-loop output; ``diverged_step`` is set when the run was cut short."""

    predicted: np.ndarray
    n_requested: int
    diverged_step: Optional[int] = None

    @property
    def truncated(self) -> bool:
        return self.diverged_step is not None


def closed_loop_forecast(w: ReadoutWeights, warmup: np.ndarray, n_steps: int,
                         divergence: float = DIVERGENCE_THRESHOLD) -> Forecast:
    """Run the L readouts autonomously for ``n_steps`` steps.

    Each step's outputs are written into the history so neighbouring stencils
    read them on the next step.  If any value leaves ``[-divergence,
    divergence]`` (or is non-finite) the forecast stops and only the steps
    before it are returned.
    """
    if n_steps < 0:
        raise InvalidInputError("n_steps must be non-negative")
    history = _check_history(w, warmup).copy()
    step = _Stepper(w)
    out = np.empty((w.n_locations, n_steps))
    for n in range(n_steps):
        nxt = step(history)
        if not np.all(np.abs(nxt) <= divergence):
            return Forecast(out[:, :n].copy(), n_steps, diverged_step=n)
        out[:, n] = nxt
        history[:, :-1] = history[:, 1:]
        history[:, -1] = nxt
    return Forecast(out, n_steps)


@dataclass
class NrmseSeries:
    values: np.ndarray
    dt_save: float
    truncated: bool = False

    def times(self) -> np.ndarray:
        return self.dt_save * np.arange(len(self.values))


def nrmse(truth: np.ndarray, pred: np.ndarray, dt_save: float = 0.01) -> NrmseSeries:
    """Per-step root-mean-square error across locations (normalized units)."""
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape or truth.ndim != 2:
        raise InvalidInputError(f"shape mismatch: truth {truth.shape} vs prediction {pred.shape}")
    return NrmseSeries(np.sqrt(np.mean((truth - pred) ** 2, axis=0)), dt_save)


@dataclass(frozen=True)
class Horizon:
    """Prediction horizon in MTU.

    ``censored`` means the threshold was never reached inside the series.
    A forecast cut short by divergence is not censored: its horizon is the
    truncation time.
    """

    time: float
    index: int
    censored: bool

    def __float__(self):
        return self.time

    def in_lyapunov_times(self, lyapunov_time: float) -> float:
        return self.time / lyapunov_time


def prediction_horizon(series: NrmseSeries, threshold: float = DEFAULT_THRESHOLD) -> Horizon:
    """Time of the first sample with NRMSE >= threshold (no interpolation).

    Sample ``n`` is at time ``n * dt_save``.
    """
    if not threshold > 0:
        raise InvalidInputError("threshold must be positive")
    values = np.asarray(series.values)
    if values.size == 0 and not series.truncated:
        raise InvalidInputError("empty NRMSE series")
    hits = np.flatnonzero(~(values < threshold))  # NaN counts as crossed
    if hits.size:
        n = int(hits[0])
        return Horizon(n * series.dt_save, n, censored=False)
    n = values.size
    return Horizon(n * series.dt_save, n, censored=not series.truncated)


@dataclass
class ForecastResult:
    predicted: np.ndarray
    truth: np.ndarray
    dt_save: float
    diverged_step: Optional[int] = None

    def __post_init__(self):
        if self.predicted.shape != self.truth.shape:
            raise InvalidInputError("predicted and truth grids must share a shape")

    @property
    def difference(self) -> np.ndarray:
        return self.truth - self.predicted

    def nrmse(self) -> NrmseSeries:
        s = nrmse(self.truth, self.predicted, self.dt_save)
        s.truncated = self.diverged_step is not None
        return s

    def horizon(self, threshold: float = DEFAULT_THRESHOLD) -> Horizon:
        return prediction_horizon(self.nrmse(), threshold)


def evaluate(w: ReadoutWeights, test: np.ndarray, dt_save: float) -> ForecastResult:
    """Warm up on the first ``k`` columns of ``test`` and forecast the rest."""
    k = w.cfg.k
    test = np.asarray(test, dtype=np.float64)
    if test.ndim != 2 or test.shape[1] < k:
        raise InvalidInputError(f"test window needs at least k={k} samples")
    fc = closed_loop_forecast(w, test[:, :k], test.shape[1] - k)
    n = fc.predicted.shape[1]
    return ForecastResult(fc.predicted, test[:, k:k + n], dt_save, fc.diverged_step)
