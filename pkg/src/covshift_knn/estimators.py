"""Standard and local k-NN regression, one- and two-sample.

A regressor averages the labels of the ``k(x)`` canonical nearest neighbours
of ``x``.  The standard estimator uses a constant ``k``; the local estimator
picks ``k(x)`` from a k-NN density estimate at ``x`` so that sparse regions
average fewer points.  The two-sample estimator pools ``k_P(x)`` source
neighbours with ``k_Q(x)`` target neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .density import ConstantDensity, DensityEstimator, recommended_ell, DEFAULT_ELL_MULTIPLIER
from .neighbors import NeighborIndex, PointCloud, build_index

__all__ = [
    "LabeledDataset",
    "ConstantK",
    "LocalAdaptiveK",
    "OneSampleRegressor",
    "TwoSampleRegressor",
    "local_neighbor_count",
    "standard_k_schedule",
    "source_rate_standard",
    "log_floor",
    "local_regressor",
    "standard_regressor",
]


@dataclass(frozen=True)
class LabeledDataset:
    cloud: PointCloud
    labels: np.ndarray

    def __post_init__(self):
        cloud = self.cloud if isinstance(self.cloud, PointCloud) else PointCloud(self.cloud)
        labels = np.array(self.labels, dtype=np.float64, copy=True).reshape(-1)
        if len(labels) != cloud.n:
            raise ValueError(f"{len(labels)} labels for {cloud.n} points")
        if not np.all(np.isfinite(labels)):
            raise ValueError("labels must be finite")
        labels.setflags(write=False)
        object.__setattr__(self, "cloud", cloud)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.cloud.n

    @property
    def dim(self) -> int:
        return self.cloud.dim


def log_floor(n: int) -> int:
    """``max(1, ceil(log n))``; the smallest neighbour count any schedule may use."""
    return max(1, math.ceil(math.log(n)))


class NeighborFunction(Protocol):
    n: int

    def __call__(self, xs: np.ndarray) -> np.ndarray: ...


class ConstantK:
    def __init__(self, k: int, n: int):
        if int(k) != k or not 1 <= k <= n:
            raise ValueError(f"k={k} outside 1..{n}")
        self.k = int(k)
        self.n = int(n)

    def __call__(self, xs) -> np.ndarray:
        return np.full(len(np.atleast_1d(xs)), self.k, dtype=np.int64)

    def __repr__(self):
        return f"ConstantK(k={self.k}, n={self.n})"


def _local_count(density, n, kappa, beta, dim, log_arg, floor):
    """Vectorised ``min(n, max(ceil(kappa log(L)^(d/(2b+d)) (n p)^(2b/(2b+d))), floor))``."""
    density = np.asarray(density, dtype=np.float64)
    s = 2.0 * beta + dim
    with np.errstate(over="ignore", invalid="ignore"):
        raw = kappa * math.log(log_arg) ** (dim / s) * (n * density) ** (2.0 * beta / s)
        k = np.ceil(raw)
    k = np.where(np.isnan(k), n, k)  # only reachable from inf * 0 when log_arg == 1
    k = np.minimum(float(n), np.maximum(k, float(floor)))
    return k.astype(np.int64)


class LocalAdaptiveK:
    """Density-adaptive neighbour count.

    ``k(x) = min(n, max(ceil(kappa * log(L)^(d/(2 beta + d)) * (n p(x))^(2 beta/(2 beta + d))), floor))``
    where ``p`` is the density estimate, ``L`` the log argument (``n`` for
    one sample, ``n + m`` for two) and ``floor = max(1, ceil(log n))``.
    """

    def __init__(self, density: DensityEstimator | ConstantDensity, beta: float, kappa: float = 1.0,
                 log_arg: float | None = None):
        if not (beta > 0 and kappa > 0):
            raise ValueError("beta and kappa must be positive")
        self.density = density
        self.n = density.n
        self.dim = density.dim
        self.beta = float(beta)
        self.kappa = float(kappa)
        self.log_arg = float(self.n if log_arg is None else log_arg)
        if self.log_arg < 1:
            raise ValueError(f"log argument must be >= 1, got {self.log_arg}")
        self.floor = log_floor(self.n) if self.n >= 2 else 1

    def count_from_density(self, density) -> np.ndarray:
        return _local_count(density, self.n, self.kappa, self.beta, self.dim, self.log_arg, self.floor)

    def __call__(self, xs) -> np.ndarray:
        return self.count_from_density(self.density(xs))

    def __repr__(self):
        return (f"LocalAdaptiveK(n={self.n}, beta={self.beta}, kappa={self.kappa}, "
                f"log_arg={self.log_arg}, floor={self.floor})")


def local_neighbor_count(nf: LocalAdaptiveK, x) -> int:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (nf.dim,):
        raise ValueError(f"query has shape {x.shape}, expected ({nf.dim},)")
    return int(nf(x[None, :])[0])


def source_rate_standard(beta: float, dim: int, gamma: float) -> float:
    """``min(gamma / (gamma + 1), 2 beta / (2 beta + d))``."""
    smooth = 2 * beta / (2 * beta + dim)
    if math.isinf(gamma):
        return smooth
    return min(gamma / (gamma + 1), smooth)


def standard_k_schedule(n: int, aux_log: float, beta: float, dim: int, gamma: float,
                        kappa: float = 1.0, rate: float | None = None) -> int:
    """Constant neighbour count ``ceil(kappa * log(A)^(1 - r) * n^r)`` clamped to ``1..n``.

    ``r`` defaults to the standard-estimator source rate; pass ``rate`` to
    use another exponent (the target-side rate for ``k_Q``).
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    for name, v in (("aux_log", aux_log), ("beta", beta), ("dim", dim), ("gamma", gamma), ("kappa", kappa)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    r = source_rate_standard(beta, dim, gamma) if rate is None else rate
    k = math.ceil(kappa * math.log(aux_log) ** (1 - r) * n ** r)
    return min(n, max(1, k))


def _label_sums(index: NeighborIndex, labels: np.ndarray, xs: np.ndarray, ks: np.ndarray) -> np.ndarray:
    results = index.query_many(xs, ks)
    return np.array([labels[r.indices].sum() for r in results])


def _as_queries(xs, dim: int) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim <= 1 and dim == 1:
        xs = xs.reshape(-1, 1)
    elif xs.ndim == 1:
        xs = xs[None, :]
    if xs.shape[-1] != dim:
        raise ValueError(f"queries have dimension {xs.shape[-1]}, expected {dim}")
    return xs


class OneSampleRegressor:
    """``f(x) = mean of the labels of the k(x) nearest neighbours``."""

    def __init__(self, data: LabeledDataset, neighbor_fn: NeighborFunction, index: NeighborIndex | None = None):
        self.data = data
        self.neighbor_fn = neighbor_fn
        if index is None:
            density = getattr(neighbor_fn, "density", None)
            index = getattr(density, "index", None) or build_index(data.cloud)
        if index.cloud is not data.cloud and not np.array_equal(index.points, data.cloud.points):
            raise ValueError("index was built over a different sample")
        self.index = index

    @property
    def dim(self) -> int:
        return self.data.dim

    def neighbor_counts(self, xs) -> np.ndarray:
        return self.neighbor_fn(_as_queries(xs, self.dim))

    def label_sums(self, xs, ks=None) -> tuple[np.ndarray, np.ndarray]:
        xs = _as_queries(xs, self.dim)
        ks = self.neighbor_fn(xs) if ks is None else np.asarray(ks)
        return _label_sums(self.index, self.data.labels, xs, ks), ks

    def predict(self, xs) -> np.ndarray:
        sums, ks = self.label_sums(xs)
        return sums / ks


class TwoSampleRegressor:
    """Pooled average of ``k_P(x)`` source labels and ``k_Q(x)`` target labels.

    With no target sample this is exactly the one-sample source regressor.
    """

    def __init__(self, source: OneSampleRegressor, target: OneSampleRegressor | None = None):
        if target is not None and target.dim != source.dim:
            raise ValueError("source and target dimensions differ")
        self.source = source
        self.target = target

    @property
    def dim(self) -> int:
        return self.source.dim

    def weights(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """``(w_P, w_Q)`` with ``w_P = k_P / (k_P + k_Q)``."""
        xs = _as_queries(xs, self.dim)
        kp = self.source.neighbor_counts(xs).astype(np.float64)
        kq = np.zeros_like(kp) if self.target is None else self.target.neighbor_counts(xs).astype(np.float64)
        wp = kp / (kp + kq)
        return wp, 1.0 - wp

    def predict(self, xs) -> np.ndarray:
        xs = _as_queries(xs, self.dim)
        sp, kp = self.source.label_sums(xs)
        if self.target is None:
            return sp / kp
        sq, kq = self.target.label_sums(xs)
        return (sp + sq) / (kp + kq)


def predict_one_sample(reg: OneSampleRegressor, x) -> float:
    return float(reg.predict(_as_queries(x, reg.dim))[0])


def predict_two_sample(reg: TwoSampleRegressor, x) -> float:
    return float(reg.predict(_as_queries(x, reg.dim))[0])


def local_regressor(data: LabeledDataset, beta: float, kappa: float = 1.0,
                    ell_multiplier: float = DEFAULT_ELL_MULTIPLIER, log_arg: float | None = None,
                    ell_log_arg: float | None = None, density_override: float | None = None,
                    normalize_volume: bool = False) -> OneSampleRegressor:
    """Local k-NN regressor with the density-adaptive schedule over ``data``.

    ``ell_log_arg`` sets the sample size fed to :func:`recommended_ell`
    (``n + m`` in the two-sample case); it defaults to ``n``.
    """
    index = build_index(data.cloud)
    if density_override is not None:
        density = ConstantDensity(density_override, data.n, data.dim)
    else:
        size = data.n if ell_log_arg is None else ell_log_arg
        ell = min(data.n, recommended_ell(size, ell_multiplier)) if size >= 2 else 1
        density = DensityEstimator(index, ell, normalize_volume=normalize_volume)
    nf = LocalAdaptiveK(density, beta=beta, kappa=kappa, log_arg=log_arg)
    return OneSampleRegressor(data, nf, index=index)


def standard_regressor(data: LabeledDataset, k: int) -> OneSampleRegressor:
    return OneSampleRegressor(data, ConstantK(k, data.n))
