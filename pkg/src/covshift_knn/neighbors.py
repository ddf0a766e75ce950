"""Exact Euclidean nearest-neighbour search with a canonical tie order.

Neighbours of a query are ordered by distance, and equal distances are
broken by ascending sample index.  The tree (scipy's ``cKDTree``) is only
used to shortlist candidates; every distance reported to the caller is
recomputed with :func:`pairwise_distances`, the same routine the
linear-scan oracle uses, so tree answers and oracle answers agree bit for
bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "PointCloud",
    "NeighborQueryResult",
    "NeighborIndex",
    "build_index",
    "k_nearest",
    "kth_radius",
    "batched_variable_k",
    "linear_scan",
    "pairwise_distances",
    "load_cloud_csv",
]

# Candidate radius inflation when re-querying the tree; scipy's own distance
# arithmetic differs from ours by a few ulps at most.
_RADIUS_SLACK = 1e-9
_CHUNK = 256


@dataclass(frozen=True)
class PointCloud:
    """``n`` points in ``R^d`` stored as a read-only ``(n, d)`` float array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-d array, got shape {pts.shape}")
        if pts.shape[0] == 0:
            raise ValueError("point cloud is empty")
        if pts.shape[1] == 0:
            raise ValueError("point dimension must be at least 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[float]]) -> "PointCloud":
        rows = [list(r) for r in rows]
        if not rows:
            raise ValueError("point cloud is empty")
        dims = {len(r) for r in rows}
        if len(dims) != 1:
            raise ValueError(f"inconsistent point dimensions: {sorted(dims)}")
        return cls(np.asarray(rows, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class NeighborQueryResult:
    indices: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def radius(self) -> float:
        """Distance to the last returned neighbour, i.e. ``R_k(x)``."""
        return float(self.distances[-1])


def pairwise_distances(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Euclidean distances from ``x`` to each row of ``points``.

    ``points`` may carry extra leading axes; ``x`` broadcasts against the
    last axis.  Coordinates are accumulated in a fixed order so the result
    does not depend on the array layout.
    """
    x = np.asarray(x, dtype=np.float64)
    sq = (points[..., 0] - x[..., 0, None] if x.ndim > 1 else points[..., 0] - x[0]) ** 2
    for j in range(1, points.shape[-1]):
        diff = points[..., j] - x[..., j, None] if x.ndim > 1 else points[..., j] - x[j]
        sq = sq + diff * diff
    return np.sqrt(sq)


def _canonical_order(dist: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary
    return np.lexsort((idx, dist), axis=-1)


def linear_scan(cloud: PointCloud, x, k: int) -> NeighborQueryResult:
    """Exhaustive reference search; the oracle every tree answer must match."""
    x = _check_query(x, cloud.dim)
    _check_k(k, cloud.n)
    dist = pairwise_distances(cloud.points, x)
    idx = np.arange(cloud.n)
    order = _canonical_order(dist, idx)[:k]
    return NeighborQueryResult(idx[order], dist[order])


def _check_query(x, dim: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (dim,):
        raise ValueError(f"query has shape {x.shape}, expected ({dim},)")
    return x


def _check_k(k, n: int) -> int:
    if isinstance(k, (bool, np.bool_)) or int(k) != k:
        raise ValueError(f"k must be an integer, got {k!r}")
    k = int(k)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    return k


class NeighborIndex:
    """Immutable exact k-NN index over a :class:`PointCloud`.

    Safe to share between threads: construction freezes all state and
    queries only read it.
    """

    def __init__(self, cloud: PointCloud):
        if not isinstance(cloud, PointCloud):
            cloud = PointCloud(cloud)
        self._cloud = cloud
        # balanced_tree/compact_nodes keep construction deterministic in the input order
        self._tree = cKDTree(cloud.points, leafsize=16, balanced_tree=True, compact_nodes=True)

    @property
    def cloud(self) -> PointCloud:
        return self._cloud

    @property
    def points(self) -> np.ndarray:
        return self._cloud.points

    @property
    def n(self) -> int:
        return self._cloud.n

    @property
    def dim(self) -> int:
        return self._cloud.dim

    def query(self, x, k: int) -> NeighborQueryResult:
        x = _check_query(x, self.dim)
        k = _check_k(k, self.n)
        return self._query_many(x[None, :], np.array([k]))[0]

    def query_many(self, xs, ks) -> list[NeighborQueryResult]:
        """Variable-``k`` batch query; element ``i`` equals ``query(xs[i], ks[i])``."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 1 and self.dim == 1:
            xs = xs[:, None]
        if len(xs) == 0:
            return []
        if xs.ndim != 2 or xs.shape[1] != self.dim:
            raise ValueError(f"queries have shape {xs.shape}, expected (q, {self.dim})")
        ks = np.broadcast_to(np.asarray(ks), (len(xs),))
        for pos, (x, k) in enumerate(zip(xs, ks)):
            try:
                _check_k(k, self.n)
                if not np.all(np.isfinite(x)):
                    raise ValueError("query has non-finite coordinates")
            except ValueError as exc:
                raise ValueError(f"query {pos}: {exc}") from None
        return self._query_many(xs, ks.astype(np.int64))

    def _query_many(self, xs: np.ndarray, ks: np.ndarray) -> list[NeighborQueryResult]:
        out: list[NeighborQueryResult | None] = [None] * len(xs)
        # group queries of similar k so one fetch width serves the whole chunk
        order = np.argsort(ks, kind="stable")
        for start in range(0, len(order), _CHUNK):
            sel = order[start:start + _CHUNK]
            for pos, res in zip(sel, self._query_chunk(xs[sel], ks[sel])):
                out[pos] = res
        return out  # type: ignore[return-value]

    def _query_chunk(self, xs: np.ndarray, ks: np.ndarray) -> list[NeighborQueryResult]:
        n = self.n
        kmax = int(ks.max())
        fetch = min(n, kmax + 8)
        tree_d, tree_i = self._tree.query(xs, k=fetch)
        tree_d = tree_d.reshape(len(xs), fetch)
        tree_i = tree_i.reshape(len(xs), fetch)
        exact = pairwise_distances(self.points[tree_i], xs)
        order = _canonical_order(exact, tree_i)
        exact = np.take_along_axis(exact, order, axis=-1)
        cand = np.take_along_axis(tree_i, order, axis=-1)
        results = []
        for row, k in enumerate(ks):
            k = int(k)
            rk = exact[row, k - 1]
            # every point left out of the fetch lies at tree distance >= its last entry
            if fetch == n or rk < tree_d[row, -1] * (1.0 - _RADIUS_SLACK):
                results.append(NeighborQueryResult(cand[row, :k].copy(), exact[row, :k].copy()))
            else:
                results.append(self._query_by_radius(xs[row], k, rk))
        return results

    def _query_by_radius(self, x: np.ndarray, k: int, radius: float) -> NeighborQueryResult:
        # tie at the fetch boundary: pull every point that could share R_k(x)
        r = radius * (1.0 + _RADIUS_SLACK) + 1e-300
        idx = np.asarray(self._tree.query_ball_point(x, r), dtype=np.int64)
        if len(idx) < k:
            idx = np.arange(self.n)
        dist = pairwise_distances(self.points[idx], x)
        order = _canonical_order(dist, idx)[:k]
        return NeighborQueryResult(idx[order], dist[order])


def build_index(cloud: PointCloud | np.ndarray) -> NeighborIndex:
    return NeighborIndex(cloud if isinstance(cloud, PointCloud) else PointCloud(cloud))


def k_nearest(index: NeighborIndex, x, k: int) -> NeighborQueryResult:
    return index.query(x, k)


def kth_radius(index: NeighborIndex, x, k: int) -> float:
    """``R_k(x)``: distance from ``x`` to its ``k``-th nearest sample point."""
    return index.query(x, k).radius


def batched_variable_k(index: NeighborIndex, queries: Sequence[tuple]) -> list[NeighborQueryResult]:
    if len(queries) == 0:
        return []
    xs = np.array([np.atleast_1d(np.asarray(q[0], dtype=np.float64)) for q in queries])
    ks = np.array([q[1] for q in queries])
    return index.query_many(xs, ks)


def load_cloud_csv(path: str | Path) -> PointCloud:
    """Read one point per row, ``d`` numeric columns; a non-numeric header row is skipped."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                raise ValueError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
    return PointCloud.from_rows(rows)
