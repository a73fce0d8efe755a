"""Visible-surface extraction: Möller-Trumbore ray casting of a triangle
mesh from a pinhole camera, and depth-map reprojection.

Rays go through pixel centers (u + 0.5, v + 0.5).  Camera-frame ray
directions carry z = 1, so the ray parameter t equals camera-frame depth;
the depth map therefore stores t directly and the reprojection reproduces
ray-cast points through the identical arithmetic path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .cloud import PointCloud
from .se3 import RigidTransform

# t values at or below this are treated as self-hits and rejected.
T_EPS = 1e-9
# |det| below this means the ray is parallel to the triangle plane.
DET_EPS = 1e-12

NO_HIT = np.inf


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle mesh; degenerate (zero-area) faces are dropped."""

    vertices: NDArray[np.float64]
    faces: NDArray[np.int64]

    def __post_init__(self) -> None:
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.min(initial=0) < 0 or faces.max(initial=-1) >= verts.shape[0]:
            raise ValueError("face indices out of range")
        v0, v1, v2 = (verts[faces[:, i]] for i in range(3))
        areas = 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
        faces = faces[areas > 1e-14]
        verts.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def triangle_corners(self) -> tuple[NDArray, NDArray, NDArray]:
        return tuple(self.vertices[self.faces[:, i]] for i in range(3))

    def bounds(self) -> tuple[NDArray, NDArray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics (pixels) plus camera-to-world pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "pose": self.pose.to_flat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(
            fx=d["fx"],
            fy=d["fy"],
            cx=d["cx"],
            cy=d["cy"],
            width=d["width"],
            height=d["height"],
            pose=RigidTransform.from_flat(d["pose"]),
        )


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel camera-frame depth; NO_HIT (+inf) marks empty pixels."""

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError("depth map must be 2-D")
        finite = vals[np.isfinite(vals)]
        if finite.size and finite.min() <= 0:
            raise ValueError("finite depths must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def hit_mask(self) -> NDArray[np.bool_]:
        return np.isfinite(self.values)


# ---------------------------------------------------------------------------
# Möller-Trumbore
# ---------------------------------------------------------------------------

def moller_trumbore(origin, direction, tri) -> tuple[float, float, float] | None:
    """Ray/triangle intersection; returns (t, u, v) or None on a miss.

    Accepts hits with t > T_EPS and barycentrics u, v >= 0, u + v <= 1.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    v0, v1, v2 = (np.asarray(t, dtype=np.float64) for t in tri)
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(d, e2)
    det = float(e1 @ pvec)
    if abs(det) < DET_EPS:
        return None
    inv = 1.0 / det
    tvec = o - v0
    u = float(tvec @ pvec) * inv
    if u < 0.0 or u > 1.0:
        return None
    qvec = np.cross(tvec, e1)
    v = float(d @ qvec) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    t = float(e2 @ qvec) * inv
    if t <= T_EPS:
        return None
    return t, u, v


def _intersect_block(
    origins: NDArray, dirs: NDArray, v0: NDArray, e1: NDArray, e2: NDArray
) -> tuple[NDArray, NDArray]:
    """Min hit t per ray over all triangles (vectorized MT).

    origins, dirs: (R, 3); v0, e1, e2: (F, 3).  Returns (t_min (R,),
    face index (R,)); NO_HIT where nothing was hit.
    """
    pvec = np.cross(dirs[:, None, :], e2[None, :, :])  # (R, F, 3)
    det = np.einsum("fk,rfk->rf", e1, pvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        tvec = origins[:, None, :] - v0[None, :, :]
        u = np.einsum("rfk,rfk->rf", tvec, pvec) * inv
        qvec = np.cross(tvec, e1[None, :, :])
        v = np.einsum("rk,rfk->rf", dirs, qvec) * inv
        t = np.einsum("fk,rfk->rf", e2, qvec) * inv
    valid = (
        (np.abs(det) >= DET_EPS)
        & (u >= 0.0)
        & (u <= 1.0)
        & (v >= 0.0)
        & (u + v <= 1.0)
        & (t > T_EPS)
    )
    t = np.where(valid, t, NO_HIT)
    face = np.argmin(t, axis=1)
    t_min = t[np.arange(t.shape[0]), face]
    return t_min, face


def _pixel_dirs_cam(cam: CameraModel) -> NDArray[np.float64]:
    """Camera-frame direction (z = 1) through every pixel center, row-major."""
    us = (np.arange(cam.width) + 0.5 - cam.cx) / cam.fx
    vs = (np.arange(cam.height) + 0.5 - cam.cy) / cam.fy
    xx, yy = np.meshgrid(us, vs)  # (H, W)
    return np.stack([xx, yy, np.ones_like(xx)], axis=-1).reshape(-1, 3)


def _ray_hits_aabb(origins, dirs, lo, hi) -> NDArray[np.bool_]:
    """Slab test: which rays can intersect the axis-aligned box at t > 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo[None, :] - origins) / dirs
        t2 = (hi[None, :] - origins) / dirs
    tmin = np.minimum(t1, t2).max(axis=1)
    tmax = np.maximum(t1, t2).min(axis=1)
    return (tmax >= tmin) & (tmax > 0.0)


def camera_frame_points(depth_flat: NDArray, pixel_idx: NDArray, cam: CameraModel) -> NDArray:
    """Unproject flat-index pixels with given depth to camera-frame points."""
    dirs = _pixel_dirs_cam(cam)[pixel_idx]
    return depth_flat[:, None] * dirs


_RAY_CHUNK = 512


def raycast_visible(mesh: TriangleMesh, cam: CameraModel) -> tuple[PointCloud | None, DepthMap]:
    """One ray per pixel, keeping the nearest triangle hit per ray.

    Returns (cloud of world-frame hit points in row-major pixel order, depth
    map of camera-frame z).  The cloud is None when no pixel hits the mesh.
    """
    dirs_cam = _pixel_dirs_cam(cam)
    r = cam.pose.r
    origin = cam.pose.t
    dirs_world = dirs_cam @ r.T
    n_rays = dirs_cam.shape[0]
    v0, v1, v2 = mesh.triangle_corners()
    e1 = v1 - v0
    e2 = v2 - v0
    lo, hi = mesh.bounds()
    pad = 1e-9 * (1.0 + np.abs(np.concatenate([lo, hi])).max())
    lo = lo - pad
    hi = hi + pad
    t_all = np.full(n_rays, NO_HIT)
    origins = np.broadcast_to(origin, (n_rays, 3))
    candidates = _ray_hits_aabb(origins, dirs_world, lo, hi)
    cand_idx = np.nonzero(candidates)[0]
    for s in range(0, cand_idx.size, _RAY_CHUNK):
        sel = cand_idx[s : s + _RAY_CHUNK]
        t_min, _ = _intersect_block(origins[sel], dirs_world[sel], v0, e1, e2)
        t_all[sel] = t_min
    depth = DepthMap(t_all.reshape(cam.height, cam.width))
    hit_idx = np.nonzero(np.isfinite(t_all))[0]
    if hit_idx.size == 0:
        return None, depth
    local = camera_frame_points(t_all[hit_idx], hit_idx, cam)
    world = local @ r.T + origin
    return PointCloud(world), depth


def reproject_depth(depth: DepthMap, cam: CameraModel) -> PointCloud | None:
    """Unproject every finite-depth pixel to a world-frame point.

    Pixel order (row-major) and arithmetic match raycast_visible, so a
    ray-cast depth map reprojects onto the ray-cast cloud exactly.
    """
    flat = depth.values.reshape(-1)
    hit_idx = np.nonzero(np.isfinite(flat))[0]
    if hit_idx.size == 0:
        return None
    local = camera_frame_points(flat[hit_idx], hit_idx, cam)
    world = local @ cam.pose.r.T + cam.pose.t
    return PointCloud(world)
