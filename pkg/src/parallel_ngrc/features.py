"""NG-RC feature vectors built from a local space-time stencil.

For location ``l`` at time index ``m`` the feature vector is::

    [c] + linear taps + unique quadratic monomials of the linear taps

Canonical ordering (frozen; weight files depend on it):

=========  =====================================================================
position   content
=========  =====================================================================
0          constant ``c``
1..d_lin   ``x_{l+o}(t_{m-tau})`` for ``tau = 0..k-1`` (newest first), then
           ``o = -N_nn..+N_nn`` (left to right), i.e. time-major
rest       ``lin[i] * lin[j]`` for ``i <= j``, row-major upper triangle
           (``(0,0), (0,1), ..., (0,d-1), (1,1), ...``)
=========  =====================================================================
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np

from .errors import InvalidInputError, InvalidWindowError
from .lorenz96 import TrajectoryGrid

GridLike = Union[TrajectoryGrid, np.ndarray]


@dataclass(frozen=True)
class FeatureConfig:
    """Stencil geometry: ``k`` time taps, ``n_nn`` neighbours per side."""

    k: int = 3
    n_nn: int = 2
    c: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError(f"k must be >= 1, got {self.k}")
        if self.n_nn < 0:
            raise InvalidInputError(f"n_nn must be >= 0, got {self.n_nn}")

    @property
    def n_in(self) -> int:
        return 2 * self.n_nn + 1

    @property
    def d_lin(self) -> int:
        return self.k * self.n_in

    @property
    def d_nonlin(self) -> int:
        return self.d_lin * (self.d_lin + 1) // 2

    @property
    def d_total(self) -> int:
        return 1 + self.d_lin + self.d_nonlin

    def check_locations(self, L: int):
        if self.n_in > L:
            raise InvalidInputError(f"stencil width {self.n_in} exceeds L={L}")


def feature_dims(cfg: FeatureConfig) -> Tuple[int, int, int]:
    """Return ``(d_lin, d_nonlin, d_total)``."""
    return cfg.d_lin, cfg.d_nonlin, cfg.d_total


@lru_cache(maxsize=None)
def quadratic_pairs(d_lin: int) -> Tuple[np.ndarray, np.ndarray]:
    """Index pairs ``(i, j)``, ``i <= j``, in canonical monomial order."""
    i, j = np.triu_indices(d_lin)
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


def stencil_index(L: int, cfg: FeatureConfig) -> np.ndarray:
    """``(L, n_in)`` array of cyclic neighbour indices ``(l + o) mod L``."""
    cfg.check_locations(L)
    offsets = np.arange(-cfg.n_nn, cfg.n_nn + 1)
    return (np.arange(L)[:, None] + offsets[None, :]) % L


def _as_data(grid: GridLike) -> np.ndarray:
    data = grid.data if isinstance(grid, TrajectoryGrid) else np.asarray(grid, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidInputError(f"expected an L x M array, got shape {data.shape}")
    return data


def _check_history(m, cfg: FeatureConfig, n_samples: int):
    m = np.asarray(m)
    if m.size and (m.min() < cfg.k - 1 or m.max() >= n_samples):
        raise InvalidWindowError(
            f"time index range [{m.min()}, {m.max()}] needs k-1={cfg.k - 1} samples of history "
            f"and must lie below M_total={n_samples}"
        )


def linear_block(grid: GridLike, cfg: FeatureConfig, ms) -> np.ndarray:
    """Linear taps for every location and each index in ``ms``.

    Returns an array of shape ``(L, len(ms), d_lin)``.
    """
    data = _as_data(grid)
    ms = np.atleast_1d(np.asarray(ms, dtype=np.intp))
    _check_history(ms, cfg, data.shape[1])
    neigh = data[stencil_index(data.shape[0], cfg)]  # (L, n_in, M_total)
    taps = [neigh[:, :, ms - tau] for tau in range(cfg.k)]  # each (L, n_in, M)
    return np.concatenate(taps, axis=1).transpose(0, 2, 1)


def expand(lin: np.ndarray, c: float = 1.0) -> np.ndarray:
    """Append constant and quadratic monomials along the last axis."""
    lin = np.asarray(lin, dtype=np.float64)
    i, j = quadratic_pairs(lin.shape[-1])
    const = np.full(lin.shape[:-1] + (1,), float(c))
    return np.concatenate([const, lin, lin[..., i] * lin[..., j]], axis=-1)


def linear_features(grid: GridLike, l: int, m: int, cfg: FeatureConfig) -> np.ndarray:
    data = _as_data(grid)
    L = data.shape[0]
    return linear_block(data, cfg, [m])[l % L, 0]


def total_features(grid: GridLike, l: int, m: int, cfg: FeatureConfig) -> np.ndarray:
    return expand(linear_features(grid, l, m, cfg), cfg.c)


def design_matrix(grid: GridLike, l: int, cfg: FeatureConfig, m_start: int, m_end: int) -> np.ndarray:
    """Feature columns for ``m_start <= m <= m_end`` at location ``l``.

    Returns a ``(d_total, M)`` array; column ``q`` is the feature vector at
    ``m_start + q``.  For training, the matching target is ``x_l(m + 1)``.
    """
    if m_end < m_start:
        raise InvalidWindowError(f"empty range [{m_start}, {m_end}]")
    data = _as_data(grid)
    ms = np.arange(m_start, m_end + 1)
    _check_history(ms, cfg, data.shape[1])
    rows = data[stencil_index(data.shape[0], cfg)[l % data.shape[0]]]  # (n_in, M_total)
    lin = np.concatenate([rows[:, ms - tau].T for tau in range(cfg.k)], axis=1)
    return expand(lin, cfg.c).T


def design_block(grid: GridLike, cfg: FeatureConfig, m_start: int, m_end: int) -> np.ndarray:
    """Feature vectors of all locations, shape ``(L, M, d_total)``."""
    if m_end < m_start:
        raise InvalidWindowError(f"empty range [{m_start}, {m_end}]")
    return expand(linear_block(grid, cfg, np.arange(m_start, m_end + 1)), cfg.c)
