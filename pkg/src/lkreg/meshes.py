"""Procedural watertight test meshes: sphere, torus, bent tube.

These stand in for scanned anatomy when exercising the pair-generation
pipeline; the bent tube approximates tubular structures.
"""

from __future__ import annotations

import math

import numpy as np

from .io import load_mesh_arrays
from .raycast import TriangleMesh


def sphere_mesh(res: int = 16) -> TriangleMesh:
    """Unit UV sphere: `res` latitude bands, 2*res longitude steps."""
    n_lat, n_lon = res, 2 * res
    verts = [np.array([0.0, 0.0, 1.0])]
    for i in range(1, n_lat):
        phi = math.pi * i / n_lat
        for j in range(n_lon):
            theta = 2.0 * math.pi * j / n_lon
            verts.append(
                np.array(
                    [
                        math.sin(phi) * math.cos(theta),
                        math.sin(phi) * math.sin(theta),
                        math.cos(phi),
                    ]
                )
            )
    verts.append(np.array([0.0, 0.0, -1.0]))
    south = len(verts) - 1

    def ring(i: int, j: int) -> int:
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
        faces.append((south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    return TriangleMesh(vertices=np.asarray(verts), faces=np.asarray(faces, dtype=np.int64))


def torus_mesh(
    major: float = 1.0, minor: float = 0.35, res_major: int = 32, res_minor: int = 16
) -> TriangleMesh:
    verts = np.empty((res_major * res_minor, 3))
    for i in range(res_major):
        u = 2.0 * math.pi * i / res_major
        for j in range(res_minor):
            v = 2.0 * math.pi * j / res_minor
            r = major + minor * math.cos(v)
            verts[i * res_minor + j] = (
                r * math.cos(u),
                r * math.sin(u),
                minor * math.sin(v),
            )
    faces = []
    for i in range(res_major):
        for j in range(res_minor):
            a = i * res_minor + j
            b = i * res_minor + (j + 1) % res_minor
            c = ((i + 1) % res_major) * res_minor + j
            d = ((i + 1) % res_major) * res_minor + (j + 1) % res_minor
            faces.append((a, c, d))
            faces.append((a, d, b))
    return TriangleMesh(vertices=verts, faces=np.asarray(faces, dtype=np.int64))


def bent_tube_mesh(
    bend_radius: float = 1.0,
    tube_radius: float = 0.3,
    arc_deg: float = 150.0,
    res_axial: int = 32,
    res_circ: int = 16,
) -> TriangleMesh:
    """Tube swept along a circular arc, closed with end-cap fans.

    The centerline is the arc s -> bend_radius * (cos s, sin s, 0) for
    s in [0, arc]; ring frames use the arc's inward normal and the
    constant binormal (0, 0, 1), so there is no frame twist.
    """
    arc = math.radians(arc_deg)
    binormal = np.array([0.0, 0.0, 1.0])
    verts = []
    centers = []
    for i in range(res_axial + 1):
        s = arc * i / res_axial
        center = bend_radius * np.array([math.cos(s), math.sin(s), 0.0])
        normal = -np.array([math.cos(s), math.sin(s), 0.0])
        centers.append(center)
        for j in range(res_circ):
            phi = 2.0 * math.pi * j / res_circ
            verts.append(center + tube_radius * (math.cos(phi) * normal + math.sin(phi) * binormal))
    start_cap = len(verts)
    verts.append(centers[0])
    end_cap = len(verts)
    verts.append(centers[-1])

    def ring(i: int, j: int) -> int:
        return i * res_circ + (j % res_circ)

    faces = []
    for i in range(res_axial):
        for j in range(res_circ):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    for j in range(res_circ):
        faces.append((start_cap, ring(0, j + 1), ring(0, j)))
        faces.append((end_cap, ring(res_axial, j), ring(res_axial, j + 1)))
    return TriangleMesh(vertices=np.asarray(verts), faces=np.asarray(faces, dtype=np.int64))


def procedural_meshes(res: int = 16) -> dict[str, TriangleMesh]:
    """The named mesh set used by the dataset generator."""
    return {
        "sphere": sphere_mesh(res=res),
        "torus": torus_mesh(res_major=2 * res, res_minor=res),
        "bent-tube": bent_tube_mesh(res_axial=2 * res, res_circ=res),
    }


def mesh_by_name(name: str, res: int = 16) -> TriangleMesh:
    named = procedural_meshes(res=res)
    if name in named:
        return named[name]
    verts, faces = load_mesh_arrays(name)  # treat as a file path
    return TriangleMesh(vertices=verts, faces=faces)
