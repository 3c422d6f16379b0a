"""Experiment protocols: presets, windowed trials, sweeps and cost accounting.

A trial trains on one window of a long (unnormalized) recording and forecasts
from a disjoint test window.  The recording is split into a training pool and,
at its end, a test pool of ``n_ics`` back-to-back test windows (``k`` warm-up
samples followed by ``test_length`` MTU of truth).  Training windows are
disjoint slots of the training pool when enough fit; otherwise they are
spread evenly over the pool and may overlap each other (never the test pool).
``train_seed``/``ic_seed`` index into deterministically shuffled slot lists.
Each trial normalizes with the global mean/std of its own training window.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import fileio
from .errors import InvalidInputError, InvalidWindowError, NgrcError
from .features import FeatureConfig
from .forecast import evaluate
from .lorenz96 import ModelParams, TrajectoryGrid, default_init, normalize, simulate
from .ridge import (INDEPENDENT, MODES, SHARED, accumulate_independent, accumulate_shared,
                    weights_from_independent, weights_from_shared)

log = logging.getLogger(__name__)

DEFAULT_ALPHA_GRID = tuple(float(a) for a in np.logspace(-7, 1, 13))


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    params: ModelParams
    features: FeatureConfig = FeatureConfig()
    dt_save: float = 0.01
    h_internal: float = 0.001
    t_transient: float = 10.0
    t_record: float = 2100.0
    test_length: float = 5.0
    lyapunov_time: Optional[float] = None
    alpha: float = 1e-2

    @property
    def n_test_steps(self) -> int:
        return round(self.test_length / self.dt_save)


PRESETS: Dict[str, ExperimentPreset] = {
    "main": ExperimentPreset("main", ModelParams(L=36, J=10, I=10, F=20.0)),
    "small": ExperimentPreset("small", ModelParams(L=8, J=8, I=8, F=20.0), alpha=1e-1),
    # 10 MTU of truth (~17 Lyapunov times) so ~8-Lyapunov-time horizons are rarely censored
    "flat": ExperimentPreset("flat", ModelParams(L=40, J=0, I=0, F=8.0), test_length=10.0,
                             lyapunov_time=1 / 1.68, alpha=1e-5),
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise InvalidInputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def generate_recording(preset: ExperimentPreset, t_record: Optional[float] = None) -> TrajectoryGrid:
    p = preset
    return simulate(p.params, default_init(p.params), p.t_transient,
                    p.t_record if t_record is None else t_record, p.h_internal, p.dt_save)


def load_or_generate(preset: ExperimentPreset, t_record: float, cache_dir) -> TrajectoryGrid:
    """Recording from ``cache_dir`` if present, otherwise simulate and store it."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{preset.name}_{t_record:g}mtu_{_params_tag(preset)}.l96t"
    if path.exists():
        return fileio.read_trajectory(path)
    log.info("simulating %s recording of %g MTU", preset.name, t_record)
    grid = generate_recording(preset, t_record)
    fileio.write_trajectory(path, grid)
    return grid


def _params_tag(preset: ExperimentPreset) -> str:
    p = preset.params
    return f"L{p.L}J{p.J}I{p.I}F{p.F:g}h{p.h:g}{p.fine_ring[0]}_dt{preset.dt_save:g}_h{preset.h_internal:g}"


@dataclass(frozen=True)
class WindowPlan:
    """Sample ranges ``[start, stop)`` for training sets and test windows."""

    n_samples: int
    train_samples: int
    test_samples: int
    n_train_sets: int = 10
    n_ics: int = 10
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.train_samples > self.test_pool_start:
            raise InvalidWindowError(
                f"recording of {self.n_samples} samples cannot hold a {self.train_samples}-sample "
                f"training window plus {self.n_ics} test windows of {self.test_samples}"
            )

    @property
    def test_pool_start(self) -> int:
        return self.n_samples - self.n_ics * self.test_samples

    @property
    def n_disjoint_slots(self) -> int:
        return self.test_pool_start // self.train_samples

    @property
    def overlapping_training(self) -> bool:
        return self.n_disjoint_slots < self.n_train_sets

    def _order(self, n: int, salt: int) -> np.ndarray:
        return np.random.default_rng([self.shuffle_seed, salt]).permutation(n)

    def train_window(self, train_seed: int) -> Tuple[int, int]:
        if not 0 <= train_seed < self.n_train_sets:
            raise InvalidInputError(f"train_seed must be in [0, {self.n_train_sets})")
        if self.overlapping_training:
            starts = np.linspace(0, self.test_pool_start - self.train_samples, self.n_train_sets)
            start = int(round(starts[self._order(self.n_train_sets, 1)[train_seed]]))
        else:
            start = int(self._order(self.n_disjoint_slots, 1)[train_seed]) * self.train_samples
        return start, start + self.train_samples

    def test_window(self, ic_seed: int) -> Tuple[int, int]:
        if not 0 <= ic_seed < self.n_ics:
            raise InvalidInputError(f"ic_seed must be in [0, {self.n_ics})")
        start = self.test_pool_start + int(self._order(self.n_ics, 2)[ic_seed]) * self.test_samples
        return start, start + self.test_samples


def _disjoint(a: Tuple[int, int], b: Tuple[int, int]) -> bool:
    return a[1] <= b[0] or b[1] <= a[0]


@dataclass(frozen=True)
class TrialResult:
    mode: str
    alpha: float
    t_train: float
    train_seed: int
    ic_seed: int
    horizon: float
    censored: bool
    truncated: bool
    train_window: Tuple[int, int]
    test_window: Tuple[int, int]


def summarize(samples) -> Tuple[float, float]:
    """Sample mean and standard deviation of the mean (``n - 1`` denominator)."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise InvalidInputError("need at least two samples")
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


@dataclass
class SweepResult:
    """Horizon samples per axis value, shape ``(n_values, n_train_sets * n_ics)``.

    Sample ``q`` of a row belongs to ``train_seed = q // n_ics`` and
    ``ic_seed = q % n_ics``.  Failed cells hold NaN.
    """

    axis: str
    values: List[float]
    alphas: List[float]
    samples: np.ndarray
    censored: np.ndarray
    failed: List[bool]
    mode: str
    preset: str
    n_ics: int
    held_out_mean: Optional[List[float]] = None
    held_out_std_of_mean: Optional[List[float]] = None
    errors: List[Optional[str]] = field(default_factory=list)

    def _stats(self):
        out = []
        for row, bad in zip(self.samples, self.failed):
            out.append((math.nan, math.nan) if bad else summarize(row))
        return out

    @property
    def mean(self) -> np.ndarray:
        return np.array([m for m, _ in self._stats()])

    @property
    def std_of_mean(self) -> np.ndarray:
        return np.array([s for _, s in self._stats()])

    @property
    def n(self) -> List[int]:
        return [0 if bad else row.size for row, bad in zip(self.samples, self.failed)]

    def best(self) -> float:
        """Axis value with the largest mean horizon; ties go to the larger value."""
        return self.values[_argmax_prefer_last(self.mean)]

    def write_csv(self, path):
        fileio._write_rows(path, fileio.SWEEP_HEADER,
                           ([repr(v), repr(float(m)), repr(float(s)), n]
                            for v, m, s, n in zip(self.values, self.mean, self.std_of_mean, self.n)))

    def write_raw_csv(self, path):
        rows = []
        for v, a, row, cens in zip(self.values, self.alphas, self.samples, self.censored):
            for q, (h, c) in enumerate(zip(row, cens)):
                rows.append([repr(v), repr(a), q // self.n_ics, q % self.n_ics, repr(float(h)), int(c)])
        fileio._write_rows(path, fileio.RAW_SAMPLES_HEADER, rows)


def _argmax_prefer_last(values) -> int:
    v = np.asarray(values, dtype=np.float64)
    v = np.where(np.isnan(v), -np.inf, v)
    return int(len(v) - 1 - np.argmax(v[::-1]))


class Experiment:
    """Trials for one preset on one long recording.

    ``recording`` must be unnormalized; every trial normalizes with its own
    training-window statistics.  Training sets are processed by a pool of
    ``workers`` threads and results are always gathered in seed order.
    """

    def __init__(self, preset: ExperimentPreset, recording: TrajectoryGrid,
                 n_train_sets: int = 10, n_ics: int = 10, shuffle_seed: int = 0,
                 workers: int = 1):
        if recording.normalized:
            raise InvalidInputError("the recording must be unnormalized")
        if recording.L != preset.params.L:
            raise InvalidInputError(f"recording has L={recording.L}, preset expects {preset.params.L}")
        if not math.isclose(recording.dt_save, preset.dt_save):
            raise InvalidInputError("recording dt_save differs from the preset")
        self.preset = preset
        self.recording = recording
        self.n_train_sets = n_train_sets
        self.n_ics = n_ics
        self.shuffle_seed = shuffle_seed
        self.workers = max(1, int(workers))

    @property
    def cfg(self) -> FeatureConfig:
        return self.preset.features

    def n_pairs(self, t_train: float) -> int:
        return round(t_train / self.preset.dt_save)

    def plan(self, t_train: float) -> WindowPlan:
        M = self.n_pairs(t_train)
        if M < 1:
            raise InvalidWindowError(
                f"t_train={t_train} MTU gives no training pairs (need at least k+1={self.cfg.k + 1} samples)"
            )
        return WindowPlan(self.recording.n_samples, M + self.cfg.k, self.cfg.k + self.preset.n_test_steps,
                          self.n_train_sets, self.n_ics, self.shuffle_seed)

    def _training_set(self, mode: str, plan: WindowPlan, train_seed: int):
        window = plan.train_window(train_seed)
        grid = normalize(self.recording.window(*window))
        if mode == INDEPENDENT:
            accs = accumulate_independent(grid, self.cfg)
            build = lambda a: weights_from_independent(accs, grid, self.cfg, a)  # noqa: E731
        elif mode == SHARED:
            acc = accumulate_shared(grid, self.cfg)
            build = lambda a: weights_from_shared(acc, grid, self.cfg, a)  # noqa: E731
        else:
            raise InvalidInputError(f"unknown mode {mode!r}")
        return window, grid, build

    def _test_data(self, plan: WindowPlan, ic_seed: int, mean: float, std: float):
        window = plan.test_window(ic_seed)
        return window, (self.recording.data[:, window[0]:window[1]] - mean) / std

    def _run_training_set(self, mode, alphas, t_train, train_seed, ic_seeds) -> List[List[TrialResult]]:
        plan = self.plan(t_train)
        train_w, grid, build = self._training_set(mode, plan, train_seed)
        tests = [self._test_data(plan, ic, grid.norm_mean, grid.norm_std) for ic in ic_seeds]
        for test_w, _ in tests:
            if not _disjoint(train_w, test_w):
                raise InvalidWindowError(f"training window {train_w} overlaps test window {test_w}")
        results = []
        for alpha in alphas:
            w = build(alpha)
            row = []
            for ic, (test_w, data) in zip(ic_seeds, tests):
                res = evaluate(w, data, self.preset.dt_save)
                h = res.horizon()
                row.append(TrialResult(mode, alpha, t_train, train_seed, ic, h.time, h.censored,
                                       res.diverged_step is not None, train_w, test_w))
            results.append(row)
        return results

    def run_trial(self, mode: str, alpha: float, t_train: float, train_seed: int, ic_seed: int) -> TrialResult:
        """Train on window ``train_seed``, forecast test window ``ic_seed``."""
        _check_mode(mode)
        return self._run_training_set(mode, [alpha], t_train, train_seed, [ic_seed])[0][0]

    def run_cell(self, mode: str, alphas: Sequence[float], t_train: float) -> List[List[TrialResult]]:
        """All ``n_train_sets x n_ics`` trials for each alpha.

        Returns ``results[alpha_index][train_seed * n_ics + ic_seed]``.  The
        Gram matrices of a training set are shared by all alphas.
        """
        _check_mode(mode)
        ic_seeds = list(range(self.n_ics))

        def job(seed):
            return self._run_training_set(mode, list(alphas), t_train, seed, ic_seeds)

        seeds = range(self.n_train_sets)
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                per_set = list(pool.map(job, seeds))
        else:
            per_set = [job(s) for s in seeds]
        return [[t for rows in per_set for t in rows[a]] for a in range(len(alphas))]

    def sweep_alpha(self, mode: str, t_train: float, alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID) -> SweepResult:
        _check_mode(mode)
        alpha_grid = [float(a) for a in alpha_grid]
        if not alpha_grid or any(a <= 0 for a in alpha_grid):
            raise InvalidInputError("alpha grid must be non-empty and positive")
        n = self.n_train_sets * self.n_ics
        samples = np.full((len(alpha_grid), n), np.nan)
        censored = np.zeros((len(alpha_grid), n), dtype=bool)
        failed = [False] * len(alpha_grid)
        errors: List[Optional[str]] = [None] * len(alpha_grid)
        try:
            cells = self.run_cell(mode, alpha_grid, t_train)
        except NgrcError as exc:
            # a shared training failure: retry alpha by alpha to isolate bad cells
            cells = []
            for i, a in enumerate(alpha_grid):
                try:
                    cells.append(self.run_cell(mode, [a], t_train)[0])
                except NgrcError as cell_exc:
                    failed[i], errors[i] = True, str(cell_exc)
                    cells.append(None)
            log.warning("alpha sweep had failures: %s", exc)
        for i, trials in enumerate(cells):
            if trials is not None:
                samples[i] = [t.horizon for t in trials]
                censored[i] = [t.censored for t in trials]
        return SweepResult("alpha", alpha_grid, alpha_grid, samples, censored, failed, mode,
                           self.preset.name, self.n_ics, errors=errors)

    def sweep_train_time(self, mode: str, t_train_grid: Sequence[float], alpha: Optional[float] = None,
                         alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID) -> SweepResult:
        """Mean horizon against training time.

        With ``alpha=None`` alpha is optimized per point over ``alpha_grid``
        (argmax of the mean, ties to larger alpha) and the reported samples are
        in-sample.  ``held_out_*`` then holds a variant where alpha is selected
        on even ``ic_seed`` trials and scored on odd ones.
        """
        t_train_grid = [float(t) for t in t_train_grid]
        if list(t_train_grid) != sorted(t_train_grid):
            raise InvalidInputError("t_train grid must be sorted ascending")
        grid_alphas = [float(alpha)] if alpha is not None else [float(a) for a in alpha_grid]
        n = self.n_train_sets * self.n_ics
        samples = np.full((len(t_train_grid), n), np.nan)
        censored = np.zeros((len(t_train_grid), n), dtype=bool)
        failed, errors, chosen = [], [], []
        held_mean, held_sem = [], []
        even = np.arange(n) % self.n_ics % 2 == 0
        for i, t in enumerate(t_train_grid):
            sweep = self.sweep_alpha(mode, t, grid_alphas)
            ok = [not f for f in sweep.failed]
            if not any(ok):
                failed.append(True)
                errors.append("; ".join(e for e in sweep.errors if e))
                chosen.append(math.nan)
                held_mean.append(math.nan)
                held_sem.append(math.nan)
                continue
            best = _argmax_prefer_last(sweep.mean)
            samples[i] = sweep.samples[best]
            censored[i] = sweep.censored[best]
            failed.append(False)
            errors.append(None)
            chosen.append(grid_alphas[best])
            sel = _argmax_prefer_last(np.where(sweep.failed, np.nan, np.nanmean(sweep.samples[:, even], axis=1)))
            if (~even).sum() >= 2:
                m, s = summarize(sweep.samples[sel][~even])
            else:
                m, s = math.nan, math.nan
            held_mean.append(m)
            held_sem.append(s)
        return SweepResult("t_train", t_train_grid, chosen, samples, censored, failed, mode,
                           self.preset.name, self.n_ics,
                           held_out_mean=held_mean if alpha is None else None,
                           held_out_std_of_mean=held_sem if alpha is None else None,
                           errors=errors)


def _check_mode(mode: str):
    if mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}, got {mode!r}")


# Training cost accounting ------------------------------------------------

@dataclass(frozen=True)
class ComplexityEntry:
    """One row of a training-cost table; cost = units * M * concat * d_total^2.

    ``concat`` is the number of locations whose data were concatenated into a
    single training set (shared readout), written as ``M x concat``.
    """

    label: str
    ml_model: str
    M: int
    d_total: int
    n_in: Optional[int] = None
    n_out: Optional[int] = None
    n_units: int = 1
    concat: int = 1

    @property
    def cost(self) -> float:
        return float(self.n_units) * self.M * self.concat * float(self.d_total) ** 2

    @property
    def m_label(self) -> str:
        return f"{self.M} x {self.concat}" if self.concat > 1 else str(self.M)


@dataclass(frozen=True)
class ComplexityRow:
    entry: ComplexityEntry
    cost: float
    speedup: float


def complexity_report(entries: Sequence[ComplexityEntry], reference_label: str) -> List[ComplexityRow]:
    """Cost of each entry and its ratio to the reference entry's cost."""
    ref = [e for e in entries if e.label == reference_label]
    if not ref:
        raise InvalidInputError(f"reference {reference_label!r} not among the entries")
    ref_cost = ref[0].cost
    if ref_cost <= 0:
        raise InvalidInputError("reference cost must be positive")
    return [ComplexityRow(e, e.cost, e.cost / ref_cost) for e in entries]


def write_complexity_csv(path, rows: Sequence[ComplexityRow]):
    def fmt(v):
        return "-" if v is None else v

    fileio._write_rows(path, fileio.COMPLEXITY_HEADER, (
        [r.entry.label, r.entry.ml_model, r.entry.m_label, r.entry.d_total, fmt(r.entry.n_in),
         fmt(r.entry.n_out), r.entry.n_units, repr(r.cost), repr(r.speedup)] for r in rows))


SHARED_LABEL = "NG-RC, single shared W"
INDEPENDENT_LABEL = "NG-RC, L independent W_l"

# Literature rows are published hyperparameters, not executed models.
COMPLEXITY_L8 = (
    ComplexityEntry(SHARED_LABEL, "NG-RC", 400, 136, 5, 1, concat=8),
    ComplexityEntry(INDEPENDENT_LABEL, "NG-RC", 4000, 136, 5, 1, n_units=8),
    ComplexityEntry("Chattopadhyay et al. (2019)", "RC", 500_000, 5000, 8, 8),
    ComplexityEntry("Pyle et al. (2021)", "NG-RC", 500_000, 495, 8, 8),
)
COMPLEXITY_L40 = (
    ComplexityEntry(SHARED_LABEL, "NG-RC", 100, 136, 5, 1, concat=40),
    ComplexityEntry(INDEPENDENT_LABEL, "NG-RC", 6000, 136, 5, 1, n_units=40),
    ComplexityEntry("Vlachas et al. (2019)", "RC", 100_000, 3000, 10, 2, n_units=20),
    ComplexityEntry("Platt et al. (2022)", "RC", 40_000, 720, 6, 2, n_units=20),
)
BUILTIN_TABLES = {"L8": COMPLEXITY_L8, "L40": COMPLEXITY_L40}
