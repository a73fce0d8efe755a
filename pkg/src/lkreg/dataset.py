"""Perturbed-pair dataset assembly and the on-disk interchange layout.

A dataset directory contains `manifest.json` plus one `pair_NNNNN/`
directory per pair holding `source.ply`, `target.ply` and `gt_pose.json`
(the aligning transform as a row-major 4x4 matrix).  Pairs are stored in
normalized coordinates: the target's centroid/scale normalization is
applied to both clouds, so translation metrics are dimensionless.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .io import load_points, save_points
from .meshes import mesh_by_name
from .raycast import CameraModel, TriangleMesh, raycast_visible, reproject_depth
from .se3 import RigidTransform, sample_perturbation, transform_points


class EmptyView(RuntimeError):
    """Camera sees no part of the mesh."""


class SparseView(EmptyView):
    """View has fewer visible points than the requested budget."""


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-to-world pose with +z looking from eye toward target."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward = forward / np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if abs(forward @ up) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(up, forward)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    r = np.stack([right, down, forward], axis=1)
    return RigidTransform(r=r, t=eye)


def load_trajectory(path) -> list[CameraModel]:
    """Camera trajectory JSON: a list of {"intrinsics": {fx, fy, cx, cy,
    width, height}, "pose": [16 row-major camera-to-world numbers]}."""
    entries = json.loads(Path(path).read_text())
    cams = []
    for e in entries:
        intr = e["intrinsics"]
        cams.append(
            CameraModel(
                fx=intr["fx"],
                fy=intr["fy"],
                cx=intr["cx"],
                cy=intr["cy"],
                width=intr["width"],
                height=intr["height"],
                pose=RigidTransform.from_flat(e["pose"]),
            )
        )
    return cams


def save_trajectory(cams: list[CameraModel], path) -> None:
    entries = [
        {
            "intrinsics": {
                "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
                "width": c.width, "height": c.height,
            },
            "pose": c.pose.to_flat(),
        }
        for c in cams
    ]
    Path(path).write_text(json.dumps(entries, sort_keys=True, indent=1) + "\n")


def orbit_cameras(
    mesh: TriangleMesh,
    n: int,
    resolution: int = 96,
    fov_deg: float = 60.0,
    distance_factor: float = 2.2,
) -> list[CameraModel]:
    """Deterministic golden-spiral orbit around the mesh, looking at its center."""
    lo, hi = mesh.bounds()
    center = 0.5 * (lo + hi)
    radius = distance_factor * 0.5 * float(np.linalg.norm(hi - lo))
    f = 0.5 * resolution / math.tan(math.radians(fov_deg) / 2.0)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    cams = []
    for i in range(n):
        z = 1.0 - 2.0 * (i + 0.5) / n
        rho = math.sqrt(max(0.0, 1.0 - z * z))
        theta = golden * i
        direction = np.array([rho * math.cos(theta), rho * math.sin(theta), z])
        eye = center + radius * direction
        cams.append(
            CameraModel(
                fx=f,
                fy=f,
                cx=resolution / 2.0,
                cy=resolution / 2.0,
                width=resolution,
                height=resolution,
                pose=look_at(eye, center),
            )
        )
    return cams


def make_pair(
    mesh: TriangleMesh,
    cam: CameraModel,
    noise_sigma: float,
    perturb: RigidTransform,
    seed,
    m_points: int = 1024,
    strict_budget: bool = False,
) -> tuple[PointCloud, PointCloud, RigidTransform]:
    """One (P_S, P_T, G_gt) triple from a single viewpoint.

    P_T is the ray-cast visible surface; P_S is the depth-map reprojection
    of the same view (identical points), plus Gaussian noise of sigma in
    normalized units, displaced by `perturb`.  G_gt = perturb^{-1} maps P_S
    back onto P_T.  Both clouds share one subsample and one normalization.

    With strict_budget, a view with fewer than m_points visible points
    raises SparseView (the generator skips to another viewpoint so that all
    stored clouds have identical size).
    """
    cloud_t, depth = raycast_visible(mesh, cam)
    if cloud_t is None:
        raise EmptyView("camera sees no mesh")
    if strict_budget and len(cloud_t) < m_points:
        raise SparseView(f"view has {len(cloud_t)} points, budget is {m_points}")
    source = reproject_depth(depth, cam)
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    n = len(cloud_t)
    keep = min(m_points, n)
    idx = np.sort(rng.choice(n, size=keep, replace=False))
    pts_t = cloud_t.points[idx]
    pts_s = source.points[idx]
    centroid = pts_t.mean(axis=0)
    scale = float(np.sqrt(((pts_t - centroid) ** 2).sum(axis=1).max()))
    if scale <= 0.0:
        raise EmptyView("view degenerates to a single point")
    pts_t = (pts_t - centroid) / scale
    pts_s = (pts_s - centroid) / scale
    if noise_sigma > 0.0:
        pts_s = pts_s + noise_sigma * rng.normal(size=pts_s.shape)
    pts_s = transform_points(perturb, pts_s)
    return PointCloud(pts_s), PointCloud(pts_t), perturb.inverse()


# ---------------------------------------------------------------------------
# directory layout
# ---------------------------------------------------------------------------

def pair_dir_name(index: int) -> str:
    return f"pair_{index:05d}"


def save_pair(
    dirpath, p_s: PointCloud, p_t: PointCloud, g_gt: RigidTransform, meta: dict | None = None
) -> None:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    save_points(p_s, dirpath / "source.ply")
    save_points(p_t, dirpath / "target.ply")
    payload = {"matrix": g_gt.to_flat()}
    if meta:
        payload["meta"] = meta
    (dirpath / "gt_pose.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_pair(dirpath) -> tuple[PointCloud, PointCloud, RigidTransform]:
    dirpath = Path(dirpath)
    p_s = load_points(dirpath / "source.ply")
    p_t = load_points(dirpath / "target.ply")
    payload = json.loads((dirpath / "gt_pose.json").read_text())
    return p_s, p_t, RigidTransform.from_flat(payload["matrix"])


@dataclass
class GenConfig:
    mesh: str = "bent-tube"
    n_pairs: int = 100
    resolution: int = 96
    mesh_res: int = 16
    m_points: int = 1024
    noise_sigma: float = 0.005
    max_angle_deg: float = 90.0
    max_trans: float = 0.1
    fov_deg: float = 60.0
    seed: int = 0
    trajectory: str | None = None  # camera JSON; default is a procedural orbit

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def generate_dataset(out_dir, config: GenConfig) -> dict:
    """Write `config.n_pairs` pair directories plus manifest.json.

    Candidate viewpoints that see fewer than m_points mesh points are
    skipped so every stored cloud has exactly m_points points.  Byte-
    identical across reruns with the same config: every random draw derives
    from SeedSequence((seed, pair_index)).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh = mesh_by_name(config.mesh, res=config.mesh_res)
    if config.trajectory is not None:
        cams = load_trajectory(config.trajectory)
    else:
        n_candidates = max(3 * config.n_pairs, config.n_pairs + 16)
        cams = orbit_cameras(
            mesh, n_candidates, resolution=config.resolution, fov_deg=config.fov_deg
        )
    names = []
    cam_iter = iter(cams)
    for i in range(config.n_pairs):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, i)))
        perturb = sample_perturbation(config.max_angle_deg, config.max_trans, rng)
        while True:
            try:
                cam = next(cam_iter)
            except StopIteration:
                raise EmptyView(
                    f"exhausted {n_candidates} candidate viewpoints before "
                    f"collecting {config.n_pairs} pairs of {config.m_points} points; "
                    "lower m_points or raise resolution"
                ) from None
            try:
                p_s, p_t, g_gt = make_pair(
                    mesh, cam, config.noise_sigma, perturb, rng,
                    m_points=config.m_points, strict_budget=True,
                )
                break
            except SparseView:
                continue
        name = pair_dir_name(i)
        save_pair(out_dir / name, p_s, p_t, g_gt, meta={"pair_index": i})
        names.append(name)
    manifest = {
        "format": "pairs-v1",
        "seed": config.seed,
        "n_pairs": config.n_pairs,
        "config": config.to_dict(),
        "pairs": names,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def load_manifest(dataset_dir) -> dict:
    return json.loads((Path(dataset_dir) / "manifest.json").read_text())


def load_dataset(dataset_dir) -> list[tuple[PointCloud, PointCloud, RigidTransform]]:
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir)
    return [load_pair(dataset_dir / name) for name in manifest["pairs"]]


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled train/test split shared by train and sweep."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5B117)))
    perm = rng.permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])
