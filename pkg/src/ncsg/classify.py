"""Candidate vertex classification: indicator vectors and the finality tests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boolfn import ONE, S, U, ZERO, flip_probe
from .errors import DegeneracyFlag, IndicatorUndecided
from .predicates import _hash_seed, points_inside, shoot_ray_global


@dataclass
class FinalVertex:
    """Output vertex candidate.

    ``key`` is the provenance tuple (see ``mesh_core.point_from_provenance``),
    ``flips`` the owning mesh indices in increasing order, ``classification``
    the flip-probe vector over ``flips``.
    """

    key: tuple
    coords: np.ndarray
    indicator: tuple = ()
    classification: tuple = ()

    @property
    def order(self):
        return self.key[0]

    @property
    def flips(self):
        return owners_of(self.key)


def owners_of(key):
    if key[0] == 1:
        return (key[1],)
    if key[0] == 2:
        return tuple(sorted((key[1], key[4])))
    return (key[1], key[3], key[5])


def _pack(bits):
    out = 0
    for idx, b in enumerate(bits):
        out |= b << idx
    return out


def is_final1(bits):
    return bits[0] != bits[1]


def is_final2(bits):
    b = _pack(bits)
    return (b & 0b0011) != (b >> 2 & 0b0011) and (b & 0b0101) != (b >> 1 & 0b0101)


def is_final3(bits):
    b = _pack(bits)
    return (
        (b & 0x0F) != (b >> 4 & 0x0F)
        and (b & 0x33) != (b >> 2 & 0x33)
        and (b & 0x55) != (b >> 1 & 0x55)
    )


IS_FINAL = {1: is_final1, 2: is_final2, 3: is_final3}


def symmetric_axes(bits):
    """Axes (0 = first flipped slot) along which the classification is symmetric."""
    k = len(bits).bit_length() - 1
    out = []
    for axis in range(k):
        step = 1 << (k - 1 - axis)
        if all(bits[i] == bits[i | step] for i in range(len(bits)) if not i & step):
            out.append(axis)
    return out


def _keep(v, f, indicator, order):
    if v.order != order:
        raise ValueError(f"expected an order-{order} candidate, got order {v.order}")
    owners = owners_of(v.key)
    for i, t in enumerate(indicator):
        if (t == S) != (i in owners):
            raise ValueError(f"indicator slot {i} inconsistent with owners {owners}")
    bits = flip_probe(f, indicator, owners)
    if not IS_FINAL[order](bits):
        return None
    return FinalVertex(v.key, v.coords, tuple(indicator), bits)


def isFinal1(v, f, indicator):
    return _keep(v, f, indicator, 1)


def isFinal2(v, f, indicator):
    return _keep(v, f, indicator, 2)


def isFinal3(v, f, indicator):
    return _keep(v, f, indicator, 3)


@dataclass
class CellContext:
    """Indicator of a kd cell plus the surface pieces of its undecided inputs.

    ``fragments[k]`` is a list of (points, normal) for input k.
    """

    indicator: tuple
    fragments: dict = field(default_factory=dict)
    _tris: dict = field(default_factory=dict)

    def triangles(self, k):
        hit = self._tris.get(k)
        if hit is None:
            tri, nrm, cen = [], [], []
            for pts, n in self.fragments[k]:
                cen.append(pts.mean(axis=0))
                for j in range(1, len(pts) - 1):
                    tri.append((pts[0], pts[j], pts[j + 1]))
                    nrm.append(n)
            hit = (np.array(tri), np.array(nrm), np.array(cen))
            self._tris[k] = hit
        return hit


def local_bit(x, ctx, k):
    """Inside bit of x for input k from the nearest crossing of a ray aimed at
    a fragment centroid; every piece of input k in the cell is in ``ctx``."""
    tris, normals, centroids = ctx.triangles(k)
    v0 = tris[:, 0]
    e1 = tris[:, 1] - v0
    e2 = tris[:, 2] - v0
    scale = max(1.0, float(np.max(np.abs(tris))))
    order = np.argsort(np.linalg.norm(centroids - x, axis=1))
    for target in order[:4]:
        d = centroids[target] - x
        length = float(np.linalg.norm(d))
        if length == 0.0:
            continue
        d = d / length
        pvec = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, pvec)
        ok = np.abs(det) > 1e-14 * np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = x - v0
        u = np.einsum("ij,ij->i", tvec, pvec) * inv
        qvec = np.cross(tvec, e1)
        v = (qvec @ d) * inv
        t = np.einsum("ij,ij->i", qvec, e2) * inv
        eps = 1e-10
        hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps) & (t > 1e-12 * scale)
        if not np.any(hit):
            continue
        idx = np.nonzero(hit)[0]
        ts = t[idx]
        best = idx[np.argmin(ts)]
        dots = normals[idx] @ d
        near = np.abs(ts - t[best]) <= 1e-11 * scale
        signs = np.sign(dots[near])
        if np.any(signs == 0) or np.any(signs != signs[0]):
            continue
        if abs(float(normals[best] @ d)) < 1e-12:
            continue
        return 1 if dots[near][0] > 0 else 0
    raise DegeneracyFlag(f"local ray from {x} undecided for input {k}")


def point_indicator(x, meshes, owners, ctx=None):
    """Indicator slots at x: s for the owners, inherited or ray-shot elsewhere."""
    out = []
    for k in range(len(meshes)):
        if k in owners:
            out.append(S)
        elif ctx is not None and ctx.indicator[k] != U:
            out.append(ctx.indicator[k])
        elif ctx is not None:
            out.append(local_bit(x, ctx, k))
        else:
            out.append(shoot_ray_global(x, meshes[k]))
    return tuple(out)


def classify_candidates(cands, meshes, f, ctx, tally):
    """Keep the final vertices among ``cands`` (list of (key, coords)).

    Indicator bits come from the cell context when given, else from batched
    global ray shooting. Candidates whose bits cannot be decided are dropped
    and counted.
    """
    n = len(meshes)
    if not cands:
        return []
    pts = np.array([c for _, c in cands])
    slots = np.full((len(cands), n), -1, dtype=np.int64)
    owners = [owners_of(k) for k, _ in cands]
    for row, own in enumerate(owners):
        for k in own:
            slots[row, k] = S
    bad = np.zeros(len(cands), dtype=bool)
    for k in range(n):
        rows = np.nonzero(slots[:, k] < 0)[0]
        if len(rows) == 0:
            continue
        if ctx is not None and ctx.indicator[k] != U:
            slots[rows, k] = ctx.indicator[k]
        elif ctx is not None:
            for r in rows:
                try:
                    slots[r, k] = local_bit(pts[r], ctx, k)
                except DegeneracyFlag:
                    tally["local_ray_fallback"] += 1
                    try:
                        slots[r, k] = shoot_ray_global(pts[r], meshes[k])
                    except IndicatorUndecided:
                        tally["IndicatorUndecided"] += 1
                        bad[r] = True
        else:
            bits, undecided = points_inside(pts[rows], meshes[k], seed=_hash_seed(pts[rows[:1]]))
            slots[rows, k] = bits
            if np.any(undecided):
                tally["IndicatorUndecided"] += int(np.sum(undecided))
                bad[rows[undecided]] = True
    out = []
    for row, ((key, coords), own) in enumerate(zip(cands, owners)):
        if bad[row]:
            continue
        ind = tuple(int(s) for s in slots[row])
        bits = flip_probe(f, ind, own)
        if IS_FINAL[key[0]](bits):
            out.append(FinalVertex(key, coords, ind, bits))
    return out


def trit_char(t):
    return {ZERO: "0", ONE: "1", U: "u", S: "s"}[t]
