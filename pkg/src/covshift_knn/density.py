"""k-nearest-neighbour density estimation.

The estimate at ``x`` is ``ell / (n * R_ell(x)**d)`` where ``R_ell(x)`` is
the distance to the ``ell``-th nearest sample point.  By default there is
no unit-ball volume factor, so the estimate tracks the density only up to
the constant ``Vol(B(0, 1))``; pass ``normalize_volume=True`` for a
consistent estimate.
"""

from __future__ import annotations

import math

import numpy as np

from .neighbors import NeighborIndex, PointCloud, build_index

__all__ = ["DensityEstimator", "ConstantDensity", "estimate_density", "recommended_ell", "unit_ball_volume"]

DEFAULT_ELL_MULTIPLIER = 3.0


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def recommended_ell(n: int, multiplier: float = DEFAULT_ELL_MULTIPLIER) -> int:
    """``min(n, max(1, ceil(multiplier * log n)))`` with the natural log."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if not multiplier > 0:
        raise ValueError(f"multiplier must be positive, got {multiplier}")
    return min(n, max(1, math.ceil(multiplier * math.log(n))))


class DensityEstimator:
    """``ell``-NN density estimate over a fixed sample."""

    def __init__(self, index: NeighborIndex | PointCloud | np.ndarray, ell: int, normalize_volume: bool = False):
        if not isinstance(index, NeighborIndex):
            index = build_index(index)
        if int(ell) != ell or not 1 <= ell <= index.n:
            raise ValueError(f"ell={ell} outside 1..{index.n}")
        self.index = index
        self.ell = int(ell)
        self.normalize_volume = normalize_volume

    @property
    def n(self) -> int:
        return self.index.n

    @property
    def dim(self) -> int:
        return self.index.dim

    def radii(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64).reshape(-1, self.dim)
        res = self.index.query_many(xs, self.ell)
        return np.array([r.radius for r in res])

    def from_radii(self, radii: np.ndarray) -> np.ndarray:
        radii = np.asarray(radii, dtype=np.float64)
        vol = radii ** self.dim
        if self.normalize_volume:
            vol = vol * unit_ball_volume(self.dim)
        with np.errstate(divide="ignore"):
            return self.ell / (self.n * vol)

    def __call__(self, xs) -> np.ndarray:
        """Estimates at each row of ``xs``; ``+inf`` where ``R_ell(x) == 0``."""
        return self.from_radii(self.radii(xs))


class ConstantDensity:
    """Stand-in density that ignores the query; turns a local schedule into a constant k."""

    def __init__(self, value: float, n: int, dim: int):
        if not value >= 0:
            raise ValueError(f"density must be nonnegative, got {value}")
        self.value = float(value)
        self.n = int(n)
        self.dim = int(dim)

    def __call__(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64).reshape(-1, self.dim)
        return np.full(len(xs), self.value)


def estimate_density(est: DensityEstimator, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (est.dim,):
        raise ValueError(f"query has shape {x.shape}, expected ({est.dim},)")
    return float(est(x[None, :])[0])
