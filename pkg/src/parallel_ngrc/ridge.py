"""Ridge-regression readouts for the parallel NG-RCs.

Each readout ``W`` minimises ``||W O - y||^2 + alpha ||W||^2`` over the
training columns of its design matrix ``O`` (``d_total x M``).  The solution
satisfies the normal equations ``(O O^T + alpha I) W^T = O y^T``; we build
``O O^T`` and ``O y^T`` in chunks so memory stays ``O(d_total^2)``.
The constant feature is regularised like every other weight.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import DegenerateDataError, InvalidInputError, InvalidWindowError, RankDeficiencyError
from .features import FeatureConfig, design_block
from .lorenz96 import TrajectoryGrid

INDEPENDENT = "independent"
SHARED = "shared"
MODES = (INDEPENDENT, SHARED)

# columns per Gram update; bounds the (chunk, d_total) feature buffer
CHUNK = 2048


@dataclass(frozen=True)
class RidgeConfig:
    alpha: float = 1e-2

    def __post_init__(self):
        if not self.alpha >= 0:
            raise InvalidInputError(f"alpha must be >= 0, got {self.alpha}")


@dataclass
class ReadoutWeights:
    """Trained readouts.

    ``weights`` is ``(L, d_total)`` in independent mode and ``(1, d_total)`` in
    shared mode; ``n_locations`` records how many sites the model serves.
    """

    mode: str
    weights: np.ndarray
    cfg: FeatureConfig
    alpha: float
    n_locations: int
    norm_mean: float = 0.0
    norm_std: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        rows = self.n_locations if self.mode == INDEPENDENT else 1
        if self.weights.shape != (rows, self.cfg.d_total):
            raise InvalidInputError(
                f"{self.mode} weights must have shape ({rows}, {self.cfg.d_total}), got {self.weights.shape}"
            )
        if not np.all(np.isfinite(self.weights)):
            raise InvalidInputError("weights contain non-finite entries")

    def per_location(self) -> np.ndarray:
        """``(L, d_total)`` view, broadcasting the shared row."""
        if self.mode == SHARED:
            return np.broadcast_to(self.weights, (self.n_locations, self.cfg.d_total))
        return self.weights


class GramAccumulator:
    """Running sums ``G = sum o o^T`` and ``b = sum o y`` for one readout."""

    def __init__(self, d: int):
        self.gram = np.zeros((d, d))
        self.cross = np.zeros(d)
        self.count = 0

    def add(self, feats: np.ndarray, targets: np.ndarray):
        """Add rows of ``feats`` (``n x d``) with matching ``targets`` (``n``)."""
        feats = np.asarray(feats, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        if feats.shape[0] != targets.shape[0]:
            raise InvalidInputError("feature/target count mismatch")
        self.gram += feats.T @ feats
        self.cross += feats.T @ targets
        self.count += feats.shape[0]
        return self

    def merge(self, other: "GramAccumulator"):
        self.gram += other.gram
        self.cross += other.cross
        self.count += other.count
        return self

    def solve(self, alpha: float) -> np.ndarray:
        if self.count == 0:
            raise InvalidWindowError("no training pairs accumulated")
        return solve_normal(self.gram, self.cross, alpha)


def solve_normal(gram: np.ndarray, cross: np.ndarray, alpha: float) -> np.ndarray:
    """Solve ``(gram + alpha I) w = cross``.

    Uses a Cholesky factorisation and falls back to a symmetric
    eigendecomposition.  At ``alpha == 0`` a singular ``gram`` raises
    RankDeficiencyError instead of returning a minimum-norm guess.
    """
    if alpha < 0:
        raise InvalidInputError(f"alpha must be >= 0, got {alpha}")
    d = gram.shape[0]
    a = gram + alpha * np.eye(d)
    if alpha == 0:
        evals, evecs = np.linalg.eigh(a)
        if evals[0] <= d * np.finfo(float).eps * max(evals[-1], 0.0):
            raise RankDeficiencyError(
                "normal matrix is singular (rank-deficient design); use alpha > 0"
            )
        return evecs @ ((evecs.T @ cross) / evals)
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        return scipy.linalg.cho_solve(factor, cross, check_finite=False)
    except np.linalg.LinAlgError:
        evals, evecs = np.linalg.eigh(a)
        keep = evals > d * np.finfo(float).eps * evals[-1]
        return evecs[:, keep] @ ((evecs[:, keep].T @ cross) / evals[keep])


def ridge_solve(O: np.ndarray, y: np.ndarray, alpha: float) -> np.ndarray:
    """Ridge readout for a ``(d_total, M)`` design matrix and ``M`` targets."""
    O = np.asarray(O, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if O.ndim != 2 or O.shape[1] != y.shape[0]:
        raise InvalidInputError(f"design {O.shape} and targets {y.shape} disagree")
    if O.shape[1] < 1:
        raise InvalidWindowError("need at least one training column")
    acc = GramAccumulator(O.shape[0])
    for start in range(0, O.shape[1], CHUNK):
        acc.add(O[:, start:start + CHUNK].T, y[start:start + CHUNK])
    return acc.solve(alpha)


def stationarity_residual(O: np.ndarray, y: np.ndarray, w: np.ndarray, alpha: float) -> float:
    """Relative residual of the normal equations for a candidate ``w``."""
    rhs = O @ np.reshape(y, -1)
    lhs = O @ (O.T @ w) + alpha * w
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))


def _training_range(grid: TrajectoryGrid, cfg: FeatureConfig, window) -> Tuple[int, int]:
    """First and last feature index of the training pairs inside ``window``."""
    start, stop = (0, grid.n_samples) if window is None else window
    if not 0 <= start <= stop <= grid.n_samples:
        raise InvalidWindowError(f"window ({start}, {stop}) outside the grid")
    m_first = start + cfg.k - 1
    m_last = stop - 2
    if m_last < m_first:
        raise InvalidWindowError(
            f"window of {stop - start} samples gives no training pairs (need >= k+1 = {cfg.k + 1})"
        )
    return m_first, m_last


def _chunks(m_first: int, m_last: int) -> Iterable[Tuple[int, int]]:
    for a in range(m_first, m_last + 1, CHUNK):
        yield a, min(a + CHUNK - 1, m_last)


def accumulate_independent(grid: TrajectoryGrid, cfg: FeatureConfig, window=None,
                           workers: int = 1) -> Sequence[GramAccumulator]:
    """One Gram accumulator per location (time-major accumulation)."""
    cfg.check_locations(grid.L)
    m_first, m_last = _training_range(grid, cfg, window)
    data = grid.data
    accs = [GramAccumulator(cfg.d_total) for _ in range(grid.L)]
    for a, b in _chunks(m_first, m_last):
        block = _block(data, cfg, a, b)  # (L, n, d)
        targets = data[:, a + 1: b + 2]

        def update(l):
            accs[l].add(block[l], targets[l])

        _run(update, range(grid.L), workers)
    return accs


def accumulate_shared(grid: TrajectoryGrid, cfg: FeatureConfig, window=None) -> GramAccumulator:
    """A single accumulator over all locations (time chunks, location-major within each chunk)."""
    cfg.check_locations(grid.L)
    m_first, m_last = _training_range(grid, cfg, window)
    data = grid.data
    acc = GramAccumulator(cfg.d_total)
    for a, b in _chunks(m_first, m_last):
        block = _block(data, cfg, a, b)
        acc.add(block.reshape(-1, cfg.d_total), data[:, a + 1: b + 2].reshape(-1))
    return acc


def _block(data: np.ndarray, cfg: FeatureConfig, a: int, b: int) -> np.ndarray:
    # slice first so feature assembly only touches the rows it needs
    h = cfg.k - 1
    return design_block(data[:, a - h: b + 1], cfg, h, h + b - a)


def _run(fn, items, workers: int):
    if workers <= 1:
        for it in items:
            fn(it)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(fn, items))


def _norm_stats(grid: TrajectoryGrid):
    return (grid.norm_mean, grid.norm_std) if grid.normalized else (0.0, 1.0)


def train_independent(grid: TrajectoryGrid, cfg: FeatureConfig, ridge: RidgeConfig,
                      window=None, workers: int = 1) -> ReadoutWeights:
    """Fit one readout per location on the samples ``window = (start, stop)``.

    Readout ``l`` maps the features at ``m`` to ``x_l(m + 1)``; the first
    ``k - 1`` samples of the window only serve as history.
    """
    accs = accumulate_independent(grid, cfg, window, workers)
    return weights_from_independent(accs, grid, cfg, ridge.alpha)


def weights_from_independent(accs, grid, cfg, alpha) -> ReadoutWeights:
    rows = []
    for l, acc in enumerate(accs):
        try:
            rows.append(acc.solve(alpha))
        except RankDeficiencyError as exc:
            raise RankDeficiencyError(f"location {l}: {exc}") from exc
    mean, std = _norm_stats(grid)
    return ReadoutWeights(INDEPENDENT, np.array(rows), cfg, alpha, grid.L, mean, std)


def train_shared(grid: TrajectoryGrid, cfg: FeatureConfig, ridge: RidgeConfig,
                 window=None) -> ReadoutWeights:
    """Fit a single readout on the features of every location concatenated."""
    acc = accumulate_shared(grid, cfg, window)
    return weights_from_shared(acc, grid, cfg, ridge.alpha)


def weights_from_shared(acc, grid, cfg, alpha) -> ReadoutWeights:
    mean, std = _norm_stats(grid)
    return ReadoutWeights(SHARED, acc.solve(alpha)[None, :], cfg, alpha, grid.L, mean, std)


def train(grid: TrajectoryGrid, cfg: FeatureConfig, ridge: RidgeConfig, mode: str,
          window=None, workers: int = 1) -> ReadoutWeights:
    if mode == INDEPENDENT:
        return train_independent(grid, cfg, ridge, window, workers)
    if mode == SHARED:
        return train_shared(grid, cfg, ridge, window)
    raise InvalidInputError(f"unknown mode {mode!r}")


def weight_correlation(w) -> float:
    """Mean pairwise overlap of the per-location readouts.

    ``C = 1/(L(L-1)) sum_l sum_{l' != l} (W_l . W_l') / ||W_l||^2``; note the
    normalisation uses only ``||W_l||``, so C is not symmetric in row scale
    and can exceed 1.
    """
    W = w.weights if isinstance(w, ReadoutWeights) else np.atleast_2d(np.asarray(w, dtype=np.float64))
    if isinstance(w, ReadoutWeights) and w.mode != INDEPENDENT:
        raise InvalidInputError("weight correlation needs per-location readouts")
    L = W.shape[0]
    if L < 2:
        raise InvalidInputError("need at least two readouts")
    norms2 = np.einsum("ij,ij->i", W, W)
    if np.any(norms2 == 0):
        raise DegenerateDataError("a readout has zero norm")
    dots = W @ W.T
    off = dots.sum(axis=1) - np.diag(dots)
    return float(np.sum(off / norms2) / (L * (L - 1)))

