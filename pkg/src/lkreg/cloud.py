"""Point-cloud container, normalization, subsampling, and alignment metrics.

Chamfer convention used throughout: mean of unsquared Euclidean nearest
distances, averaged over both directions, i.e. 0.5 * (mean_ab + mean_ba).
Hausdorff is the symmetric worst-case nearest distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .se3 import RigidTransform, transform_points

Points = NDArray[np.float64]


class DegenerateCloud(ValueError):
    """Cloud has zero spatial extent (all points identical)."""


class BadCount(ValueError):
    """Requested sample count outside [1, N]."""


@dataclass(frozen=True)
class PointCloud:
    """Ordered, immutable list of finite 3D points (N >= 1)."""

    points: Points

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64, order="C")
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("point cloud must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def centroid(self) -> NDArray[np.float64]:
        return self.points.mean(axis=0)


def apply(g: RigidTransform, pc: PointCloud) -> PointCloud:
    """Transform every point by g, preserving order."""
    return PointCloud(transform_points(g, pc.points))


@dataclass(frozen=True)
class NormalizeRecord:
    """Centroid shift plus isotropic scale mapping a cloud to the unit ball.

    normalized = (original - centroid) / scale, where scale is the maximum
    distance from the centroid in the original cloud.
    """

    centroid: NDArray[np.float64]
    scale: float

    def to_normalized(self, points: Points) -> Points:
        return (np.asarray(points, dtype=np.float64) - self.centroid) / self.scale

    def to_original(self, points: Points) -> Points:
        return np.asarray(points, dtype=np.float64) * self.scale + self.centroid


def normalize(pc: PointCloud) -> tuple[PointCloud, NormalizeRecord]:
    """Center at the centroid and scale so the max radius is exactly 1."""
    centroid = pc.centroid()
    centered = pc.points - centroid
    scale = float(np.sqrt((centered * centered).sum(axis=1).max()))
    if scale <= 0.0:
        raise DegenerateCloud("cloud has zero spatial extent")
    record = NormalizeRecord(centroid=centroid, scale=scale)
    return PointCloud(centered / scale), record


def _farthest_point_indices(points: Points, m: int, start: int) -> NDArray[np.int64]:
    n = points.shape[0]
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = start
    dist = np.sqrt(((points - points[start]) ** 2).sum(axis=1))
    for i in range(1, m):
        nxt = int(np.argmax(dist))  # ties: lowest index
        chosen[i] = nxt
        dist = np.minimum(dist, np.sqrt(((points - points[nxt]) ** 2).sum(axis=1)))
    return chosen


def subsample(pc: PointCloud, m: int, method: str = "random", seed=0) -> PointCloud:
    """Pick m points: uniformly at random or by farthest-point traversal.

    Both methods are deterministic given the seed; for farthest-point the
    seed picks the starting point, which is included in the sample.
    """
    n = len(pc)
    if not 1 <= m <= n:
        raise BadCount(f"m must be in [1, {n}], got {m}")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    if method == "random":
        idx = rng.choice(n, size=m, replace=False)
    elif method == "farthest-point":
        start = int(rng.integers(n))
        idx = _farthest_point_indices(pc.points, m, start)
    else:
        raise ValueError(f"unknown subsample method: {method!r}")
    return PointCloud(pc.points[idx])


class NnIndex:
    """Exact nearest-neighbor search over a fixed cloud.

    Chunked brute force rather than a spatial tree: at the cloud sizes this
    package targets (N <= a few thousand) vectorized exhaustive search is
    fast, bitwise deterministic, and breaks distance ties by lowest index.
    """

    _CHUNK = 256

    def __init__(self, target: PointCloud | Points):
        pts = target.points if isinstance(target, PointCloud) else np.asarray(target, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("NnIndex needs an (N, 3) array with N >= 1")
        self._points = pts

    def nearest(self, queries: Points) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
        """Per query: (unsquared distance, index) of the closest target point."""
        q = np.asarray(queries, dtype=np.float64)
        squeeze = q.ndim == 1
        q = np.atleast_2d(q)
        nq = q.shape[0]
        dists = np.empty(nq, dtype=np.float64)
        idx = np.empty(nq, dtype=np.int64)
        for lo in range(0, nq, self._CHUNK):
            hi = min(lo + self._CHUNK, nq)
            diff = q[lo:hi, None, :] - self._points[None, :, :]
            d2 = (diff * diff).sum(axis=2)
            best = np.argmin(d2, axis=1)  # first occurrence wins ties
            idx[lo:hi] = best
            dists[lo:hi] = np.sqrt(d2[np.arange(hi - lo), best])
        if squeeze:
            return dists[0], idx[0]
        return dists, idx


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Symmetric mean nearest-neighbor distance: 0.5 * (mean_ab + mean_ba)."""
    d_ab, _ = NnIndex(b).nearest(a.points)
    d_ba, _ = NnIndex(a).nearest(b.points)
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


def hausdorff_distance(a: PointCloud, b: PointCloud) -> float:
    """Symmetric worst-case nearest-neighbor distance."""
    d_ab, _ = NnIndex(b).nearest(a.points)
    d_ba, _ = NnIndex(a).nearest(b.points)
    return max(float(np.max(d_ab)), float(np.max(d_ba)))
