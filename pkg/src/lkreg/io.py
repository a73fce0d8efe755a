"""Readers/writers for point clouds (PLY ascii, OFF, CSV) and triangle meshes.

Format is chosen by file extension.  Floats are written with %.17g so that
write -> read round-trips are exact and repeated runs are byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .cloud import PointCloud

_FMT = "%.17g"


def _format_row(row) -> str:
    return " ".join(_FMT % v for v in row)


# ---------------------------------------------------------------------------
# PLY (ascii)
# ---------------------------------------------------------------------------

def _read_ply(path: Path) -> tuple[NDArray[np.float64], NDArray[np.int64] | None]:
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_vertex = 0
    n_face = 0
    vertex_props: list[str] = []
    in_vertex_element = False
    i = 1
    while i < len(lines):
        tok = lines[i].split()
        i += 1
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise ValueError(f"{path}: only ascii PLY is supported")
        elif tok[0] == "element":
            in_vertex_element = tok[1] == "vertex"
            if tok[1] == "vertex":
                n_vertex = int(tok[2])
            elif tok[1] == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and in_vertex_element:
            vertex_props.append(tok[-1])
        elif tok[0] == "end_header":
            break
    try:
        cols = [vertex_props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ValueError(f"{path}: PLY vertex element lacks x/y/z properties")
    verts = np.empty((n_vertex, 3), dtype=np.float64)
    for r in range(n_vertex):
        vals = lines[i + r].split()
        verts[r] = [float(vals[c]) for c in cols]
    i += n_vertex
    faces = None
    if n_face > 0:
        rows = []
        for r in range(n_face):
            vals = [int(v) for v in lines[i + r].split()]
            count = vals[0]
            poly = vals[1 : 1 + count]
            for k in range(1, count - 1):  # fan-triangulate polygons
                rows.append((poly[0], poly[k], poly[k + 1]))
        faces = np.asarray(rows, dtype=np.int64)
    return verts, faces


def _write_ply(path: Path, points: np.ndarray, faces: np.ndarray | None = None) -> None:
    out = ["ply", "format ascii 1.0", f"element vertex {points.shape[0]}"]
    out += [f"property double {c}" for c in ("x", "y", "z")]
    if faces is not None:
        out.append(f"element face {faces.shape[0]}")
        out.append("property list uchar int vertex_indices")
    out.append("end_header")
    out += [_format_row(p) for p in points]
    if faces is not None:
        out += ["3 %d %d %d" % tuple(f) for f in faces]
    path.write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# OFF
# ---------------------------------------------------------------------------

def _read_off(path: Path) -> tuple[NDArray[np.float64], NDArray[np.int64] | None]:
    raw = [ln.split("#", 1)[0].strip() for ln in path.read_text().splitlines()]
    toks: list[str] = []
    for ln in raw:
        toks.extend(ln.split())
    if not toks or toks[0] != "OFF":
        raise ValueError(f"{path}: not an OFF file")
    nv, nf = int(toks[1]), int(toks[2])
    pos = 4  # skip n_edges
    verts = np.array(toks[pos : pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
    pos += 3 * nv
    faces = None
    if nf > 0:
        rows = []
        for _ in range(nf):
            count = int(toks[pos])
            poly = [int(t) for t in toks[pos + 1 : pos + 1 + count]]
            pos += 1 + count
            for k in range(1, count - 1):
                rows.append((poly[0], poly[k], poly[k + 1]))
        faces = np.asarray(rows, dtype=np.int64)
    return verts, faces


def _write_off(path: Path, points: np.ndarray, faces: np.ndarray | None = None) -> None:
    nf = 0 if faces is None else faces.shape[0]
    out = ["OFF", f"{points.shape[0]} {nf} 0"]
    out += [_format_row(p) for p in points]
    if faces is not None:
        out += ["3 %d %d %d" % tuple(f) for f in faces]
    path.write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# CSV (x,y,z per line, no header)
# ---------------------------------------------------------------------------

def _read_csv(path: Path) -> NDArray[np.float64]:
    rows = []
    for ln in path.read_text().splitlines():
        ln = ln.strip()
        if ln:
            rows.append([float(v) for v in ln.split(",")])
    return np.asarray(rows, dtype=np.float64)


def _write_csv(path: Path, points: np.ndarray) -> None:
    path.write_text("\n".join(",".join(_FMT % v for v in p) for p in points) + "\n")


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def load_points(path) -> PointCloud:
    """Load a point cloud; .ply / .off (vertices only) / .csv by extension."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".ply":
        verts, _ = _read_ply(path)
    elif ext == ".off":
        verts, _ = _read_off(path)
    elif ext == ".csv":
        verts = _read_csv(path)
    else:
        raise ValueError(f"unsupported point-cloud extension: {ext!r}")
    return PointCloud(verts)


def save_points(pc: PointCloud, path) -> None:
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".ply":
        _write_ply(path, pc.points)
    elif ext == ".off":
        _write_off(path, pc.points)
    elif ext == ".csv":
        _write_csv(path, pc.points)
    else:
        raise ValueError(f"unsupported point-cloud extension: {ext!r}")


def load_mesh_arrays(path) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Load mesh vertices and triangulated faces from .off or ascii .ply."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".off":
        verts, faces = _read_off(path)
    elif ext == ".ply":
        verts, faces = _read_ply(path)
    else:
        raise ValueError(f"unsupported mesh extension: {ext!r}")
    if faces is None or faces.shape[0] == 0:
        raise ValueError(f"{path}: mesh file has no faces")
    return verts, faces


def save_mesh_arrays(vertices, faces, path) -> None:
    path = Path(path)
    ext = path.suffix.lower()
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if ext == ".off":
        _write_off(path, vertices, faces)
    elif ext == ".ply":
        _write_ply(path, vertices, faces)
    else:
        raise ValueError(f"unsupported mesh extension: {ext!r}")
