"""Procedural test solids and scene generators."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.transform import Rotation

from .mesh_core import RawMesh, topology_pass

BOX_QUADS = [
    (0, 3, 2, 1),  # z-
    (4, 5, 6, 7),  # z+
    (0, 1, 5, 4),  # y-
    (2, 3, 7, 6),  # y+
    (0, 4, 7, 3),  # x-
    (1, 2, 6, 5),  # x+
]


def box(lo=(0, 0, 0), hi=(1, 1, 1)):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    corners = np.array(
        [
            [lo[0], lo[1], lo[2]],
            [hi[0], lo[1], lo[2]],
            [hi[0], hi[1], lo[2]],
            [lo[0], hi[1], lo[2]],
            [lo[0], lo[1], hi[2]],
            [hi[0], lo[1], hi[2]],
            [hi[0], hi[1], hi[2]],
            [lo[0], hi[1], hi[2]],
        ]
    )
    return RawMesh(corners, list(BOX_QUADS))


def cube(center=(0, 0, 0), size=1.0):
    c = np.asarray(center, dtype=float)
    return box(c - size / 2, c + size / 2)


def tetrahedron():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    return RawMesh(v, [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)])


def icosphere(radius=1.0, subdivisions=2, center=(0, 0, 0)):
    t = (1 + 5**0.5) / 2
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return RawMesh(v, faces)


def torus(major=1.0, minor=0.3, nu=24, nv=12, center=(0, 0, 0), axis=None, phase=0.0):
    """Quad torus around ``axis`` (default z). Every quad is an isosceles trapezoid, hence planar."""
    u = 2 * math.pi * np.arange(nu) / nu + phase
    v = 2 * math.pi * np.arange(nv) / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    r = major + minor * np.cos(vv)
    pts = np.stack([r * np.cos(uu), r * np.sin(uu), minor * np.sin(vv)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = ((i + 1) % nu) * nv + (j + 1) % nv
            d = i * nv + (j + 1) % nv
            faces.append((a, b, c, d))
    if axis is not None:
        rot = rotation_to(np.asarray(axis, dtype=float))
        pts = pts @ rot.T
    return RawMesh(pts + np.asarray(center, dtype=float), faces)


def rotation_to(axis):
    """Rotation matrix taking +z to ``axis``."""
    axis = axis / np.linalg.norm(axis)
    z = np.array([0.0, 0.0, 1.0])
    c = np.cross(z, axis)
    s = np.linalg.norm(c)
    if s < 1e-15:
        return np.eye(3) if axis[2] > 0 else np.diag([1.0, -1.0, -1.0])
    ang = math.atan2(s, float(z @ axis))
    return Rotation.from_rotvec(c / s * ang).as_matrix()


def transform_raw(raw, rotation=None, translation=(0, 0, 0), scale=1.0):
    pts = np.asarray(raw.vertices, dtype=float) * scale
    if rotation is not None:
        pts = pts @ np.asarray(rotation).T
    return RawMesh(pts + np.asarray(translation, dtype=float), list(raw.facets))


def subdivide(raw):
    """Split every quad into four and every triangle into four, keeping planarity."""
    verts = [np.asarray(p, dtype=float) for p in raw.vertices]
    cache = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            verts.append(0.5 * (verts[a] + verts[b]))
            cache[key] = len(verts) - 1
        return cache[key]

    faces = []
    for f in raw.facets:
        if len(f) == 3:
            a, b, c = f
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        elif len(f) == 4:
            a, b, c, d = f
            ab, bc, cd, da = mid(a, b), mid(b, c), mid(c, d), mid(d, a)
            verts.append(0.25 * (verts[a] + verts[b] + verts[c] + verts[d]))
            m = len(verts) - 1
            faces += [(a, ab, m, da), (ab, b, bc, m), (m, bc, c, cd), (da, m, cd, d)]
        else:
            raise ValueError("subdivide handles triangles and quads")
    return RawMesh(np.array(verts), faces)


def random_rotation(rng):
    return Rotation.random(random_state=rng).as_matrix()


def random_convex(rng, n_points=12, radius=1.0, center=(0, 0, 0)):
    """Convex hull of random points on an ellipsoid, as a triangle mesh."""
    from scipy.spatial import ConvexHull

    pts = rng.normal(size=(n_points, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts *= radius * rng.uniform(0.6, 1.0, size=3)
    pts = pts @ random_rotation(rng).T
    hull = ConvexHull(pts)
    used = np.unique(hull.simplices)
    remap = {int(v): k for k, v in enumerate(used)}
    faces = []
    for simplex, eq in zip(hull.simplices, hull.equations):
        a, b, c = (int(v) for v in simplex)
        n = np.cross(pts[b] - pts[a], pts[c] - pts[a])
        if n @ eq[:3] < 0:
            b, c = c, b
        faces.append((remap[a], remap[b], remap[c]))
    return RawMesh(pts[used] + np.asarray(center, dtype=float), faces)


def random_torus(rng, scale=1.0, nu=16, nv=8, center=(0, 0, 0)):
    axis = rng.normal(size=3)
    major = scale * rng.uniform(0.5, 0.8)
    minor = major * rng.uniform(0.2, 0.4)
    return torus(major, minor, nu, nv, center=center, axis=axis, phase=rng.uniform(0, 1))


def t1_scene(n_meshes=50, nu=24, nv=12, seed=0, spread=3.0, subdivisions=0):
    """Random tori in a box; the usual operation is the first half minus the second."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_meshes):
        c = rng.uniform(-spread, spread, size=3)
        raw = random_torus(rng, scale=1.0, nu=nu, nv=nv, center=c)
        for _ in range(subdivisions):
            raw = subdivide(raw)
        out.append(raw)
    return out


def t1_expr(n_meshes=50):
    half = n_meshes // 2
    return f"union(P0..P{half - 1}) - union(P{half}..P{n_meshes - 1})"


def t2_scene(n_meshes=50, nu=14, nv=5, seed=0, minor=0.05):
    """Narrow tori centred at the origin along random great circles of the
    unit sphere, so that every pair crosses twice."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_meshes):
        axis = rng.normal(size=3)
        out.append(torus(1.0, minor, nu, nv, axis=axis, phase=rng.uniform(0, 1)))
    return out


def meshes_of(raws):
    return [topology_pass(r) for r in raws]
