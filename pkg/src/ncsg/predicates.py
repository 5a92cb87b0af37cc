"""Geometric constructions: facet/facet and segment/facet intersection,
ray shooting and convex polygon clipping."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyFlag, IndicatorUndecided

DET_TOL = 1e-12
RAY_RETRIES = 8
_RAY_EPS = 1e-9


@dataclass(frozen=True)
class FacetRef:
    mesh: int
    facet: int
    normal: np.ndarray
    offset: float

    @classmethod
    def of(cls, meshes, mesh, facet):
        m = meshes[mesh]
        return cls(mesh, facet, m.normals[facet], float(m.offsets[facet]))


@dataclass
class Segment:
    """Common part of two convex facets. ``ends[k]`` names the cut that made
    endpoint k: (0, e) for edge e of the first facet, (1, e) for the second."""

    p: np.ndarray
    q: np.ndarray
    ends: tuple


def _scale(*arrays):
    return max(1.0, max(float(np.max(np.abs(a))) for a in arrays))


def _crossings(pts, dist):
    """Points where the loop crosses the zero level of ``dist``: [(edge, point)]."""
    k = len(pts)
    out = []
    for e in range(k):
        d0, d1 = dist[e], dist[(e + 1) % k]
        if (d0 < 0) != (d1 < 0):
            t = d0 / (d0 - d1)
            out.append((e, pts[e] + t * (pts[(e + 1) % k] - pts[e])))
    return out


def intersect2facets(pa, na, oa, pb, nb, ob):
    """Segment shared by two convex planar polygons, or None.

    ``pa`` (k,3) loop, ``na`` unit normal, ``oa`` plane offset (n.x = o).
    Raises DegeneracyFlag for coplanar facets, a vertex lying on the other
    plane, or coinciding endpoints.
    """
    scale = _scale(pa, pb)
    tol = DET_TOL * scale
    da = pa @ nb - ob
    if np.all(da > tol) or np.all(da < -tol):
        return None
    db = pb @ na - oa
    if np.all(db > tol) or np.all(db < -tol):
        return None
    line = np.cross(na, nb)
    if float(line @ line) < DET_TOL * DET_TOL:
        raise DegeneracyFlag("coplanar facets")
    if np.any(np.abs(da) <= tol) or np.any(np.abs(db) <= tol):
        raise DegeneracyFlag("vertex on the other facet's plane")
    ca = _crossings(pa, da)
    cb = _crossings(pb, db)
    if len(ca) != 2 or len(cb) != 2:
        raise DegeneracyFlag("non-convex crossing")
    ta = [(float(p @ line), 0, e, p) for e, p in ca]
    tb = [(float(p @ line), 1, e, p) for e, p in cb]
    ta.sort(key=lambda r: r[0])
    tb.sort(key=lambda r: r[0])
    lo = max(ta[0], tb[0], key=lambda r: r[0])
    hi = min(ta[1], tb[1], key=lambda r: r[0])
    span = tol * float(np.sqrt(line @ line))
    if hi[0] - lo[0] <= span:
        if hi[0] - lo[0] > -span:
            raise DegeneracyFlag("facets touch at a point")
        return None
    if abs(ta[0][0] - tb[0][0]) <= span or abs(ta[1][0] - tb[1][0]) <= span:
        raise DegeneracyFlag("edges of both facets meet the line at one point")
    return Segment(lo[3], hi[3], ((lo[1], lo[2]), (hi[1], hi[2])))


def point_in_convex(x, pts, normal, tol):
    """1 inside, 0 outside, raises DegeneracyFlag when within tol of an edge."""
    nxt = np.roll(pts, -1, axis=0)
    side = np.cross(nxt - pts, x - pts) @ normal
    if np.any(side < -tol):
        return 0
    if np.any(side <= tol):
        raise DegeneracyFlag("point on a facet edge")
    return 1


def intersect_segment_facet(p, q, pts, normal, offset):
    """Point where segment pq crosses the convex facet, or None."""
    if tuple(p) > tuple(q):
        p, q = q, p
    scale = _scale(p, q, pts)
    tol = DET_TOL * scale
    dp = float(p @ normal) - offset
    dq = float(q @ normal) - offset
    if abs(dp) <= tol and abs(dq) <= tol:
        raise DegeneracyFlag("segment lies in the facet plane")
    if abs(dp) <= tol or abs(dq) <= tol:
        raise DegeneracyFlag("segment endpoint on the facet plane")
    if (dp < 0) == (dq < 0):
        return None
    x = p + (dp / (dp - dq)) * (q - p)
    if not point_in_convex(x, pts, normal, tol * scale):
        return None
    return x


def _hash_seed(x):
    return int.from_bytes(hashlib.blake2b(np.asarray(x, dtype=np.float64).tobytes(), digest_size=8).digest(), "little")


def _random_dir(rng):
    d = rng.normal(size=3)
    return d / np.linalg.norm(d)


def _ray_tri(origins, direction, tris):
    """Moller-Trumbore for many origins against many triangles, one direction.

    Returns (hit count, graze flag) per origin. Barycentric slack is
    dimensionless; the distance slack scales with the coordinates.
    """
    v0 = tris[:, 0]
    e1 = tris[:, 1] - v0
    e2 = tris[:, 2] - v0
    t_eps = 1e-12 * max(1.0, float(np.max(np.abs(tris))), float(np.max(np.abs(origins))))
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14 * np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    counts = np.zeros(len(origins), dtype=np.int64)
    graze = np.zeros(len(origins), dtype=bool)
    chunk = max(1, 2_000_000 // max(1, len(tris)))
    for s in range(0, len(origins), chunk):
        o = origins[s : s + chunk]
        tvec = o[:, None, :] - v0[None, :, :]
        u = np.einsum("ptj,tj->pt", tvec, pvec) * inv
        qvec = np.cross(tvec, e1[None, :, :])
        v = (qvec @ direction) * inv
        t = np.einsum("ptj,tj->pt", qvec, e2) * inv
        w = 1.0 - u - v
        inside = ok & (u > -_RAY_EPS) & (v > -_RAY_EPS) & (w > -_RAY_EPS) & (t > -t_eps)
        near_edge = inside & ((u < _RAY_EPS) | (v < _RAY_EPS) | (w < _RAY_EPS) | (np.abs(t) <= t_eps))
        counts[s : s + chunk] = np.sum(inside & (t > t_eps), axis=1)
        graze[s : s + chunk] = np.any(near_edge, axis=1)
    return counts, graze


def points_inside(points, mesh, seed=0):
    """Parity ray test for many points against one closed mesh.

    Returns an int array of 0/1 and a boolean array marking points whose
    bit stayed undecided after all retries.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(len(points), dtype=np.int64)
    undecided = np.zeros(len(points), dtype=bool)
    if len(points) == 0:
        return out, undecided
    lo, hi = mesh.bounds
    cand = np.all((points >= lo) & (points <= hi), axis=1)
    idx = np.nonzero(cand)[0]
    if len(idx) == 0:
        return out, undecided
    tris, _ = mesh.fan_triangles
    rng = np.random.default_rng(seed)
    direction = _random_dir(rng)
    counts, graze = _ray_tri(points[idx], direction, tris)
    out[idx] = counts & 1
    for j in idx[graze]:
        bit = None
        prng = np.random.default_rng(_hash_seed(points[j]))
        for _ in range(RAY_RETRIES):
            c, g = _ray_tri(points[j : j + 1], _random_dir(prng), tris)
            if not g[0]:
                bit = int(c[0] & 1)
                break
        if bit is None:
            undecided[j] = True
        else:
            out[j] = bit
    return out, undecided


def shoot_ray_global(x, mesh):
    """1 iff x is inside the closed mesh."""
    bits, undecided = points_inside(np.asarray(x)[None, :], mesh, seed=_hash_seed(x))
    if undecided[0]:
        raise IndicatorUndecided(f"rays from {x} keep grazing the surface")
    return int(bits[0])


def _ray_polygon(x, direction, pts, normal, tol):
    den = float(normal @ direction)
    if abs(den) < 1e-14:
        return None
    t = float(normal @ (pts[0] - x)) / den
    if t <= tol:
        return None
    hit = x + t * direction
    nxt = np.roll(pts, -1, axis=0)
    side = np.cross(nxt - pts, hit - pts) @ normal
    if np.any(side < -tol * tol):
        return None
    return t, den


def shoot_ray_local(x, fragments, target=0):
    """Inside bit of x from the nearest crossing with a set of surface pieces.

    ``fragments`` is a list of (points (k,3), unit normal) that together hold
    every piece of one surface inside a convex region containing x. The ray
    is aimed at the centroid of fragment ``target``, so it hits at least one.
    """
    x = np.asarray(x, dtype=np.float64)
    order = [target] + [i for i in range(len(fragments)) if i != target]
    for attempt in order[: max(1, min(len(order), 4))]:
        pts, _ = fragments[attempt]
        direction = pts.mean(axis=0) - x
        length = float(np.linalg.norm(direction))
        if length == 0.0:
            raise DegeneracyFlag("ray origin on a fragment centroid")
        direction = direction / length
        scale = _scale(x, pts)
        tol = 1e-12 * scale
        hits = []
        for fpts, normal in fragments:
            h = _ray_polygon(x, direction, fpts, normal, tol)
            if h is not None:
                hits.append(h)
        if not hits:
            continue
        hits.sort(key=lambda h: h[0])
        t0, den0 = hits[0]
        if abs(den0) < 1e-12:
            continue
        if len(hits) > 1 and hits[1][0] - t0 <= tol and (hits[1][1] > 0) != (den0 > 0):
            continue
        return 1 if den0 > 0 else 0
    raise DegeneracyFlag(f"local ray from {x} undecided")


def clip_polygon_to_halfspace(pts, normal, offset):
    """Split a convex loop by the plane n.x = offset.

    Returns (below, above): the parts with n.x <= offset and n.x >= offset,
    either None when empty. Vertices on the plane go to both parts.
    """
    dist = pts @ normal - offset
    return _split(pts, dist)


def _split(pts, dist):
    below, above = [], []
    k = len(pts)
    for e in range(k):
        p, d = pts[e], dist[e]
        q, dq = pts[(e + 1) % k], dist[(e + 1) % k]
        if d <= 0:
            below.append(p)
        if d >= 0:
            above.append(p)
        if (d < 0 and dq > 0) or (d > 0 and dq < 0):
            # canonical endpoint order: neighbours sharing the edge get the same point
            a, da, b, db = (p, d, q, dq) if tuple(p) <= tuple(q) else (q, dq, p, d)
            x = a + (da / (da - db)) * (b - a)
            below.append(x)
            above.append(x)
    below = np.array(below) if len(below) >= 3 else None
    above = np.array(above) if len(above) >= 3 else None
    if below is not None and np.all(dist >= 0):
        below = None
    if above is not None and np.all(dist <= 0):
        above = None
    return below, above


def split_axis(pts, axis, value):
    """Axis-aligned split for kd cells. Returns (below, above)."""
    dist = pts[:, axis] - value
    below, above = _split(pts, dist)
    if below is not None:
        below = below.copy()
        below[:, axis] = np.minimum(below[:, axis], value)
    if above is not None:
        above = above.copy()
        above[:, axis] = np.maximum(above[:, axis], value)
    return below, above


def polygon_area(pts, normal=None):
    from .mesh_core import newell_normal

    n = newell_normal(np.asarray(pts))
    if normal is None:
        return 0.5 * float(np.linalg.norm(n))
    return 0.5 * float(n @ normal)
