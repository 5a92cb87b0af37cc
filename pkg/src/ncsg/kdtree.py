"""Output-sensitive kd exploration of the scene for final vertices."""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .boolfn import S, U, eval_ternary, flip_probe
from .bruteforce import gather_candidates
from .classify import CellContext, FinalVertex, classify_candidates
from .errors import ArityMismatch, OrientationUndecided, error_total
from .mesh_io import StatsRecord
from .predicates import shoot_ray_global, split_axis


@dataclass
class ExplorationConfig:
    fmax: int = 20
    seq_threshold: float = 80
    max_depth: int = 64
    tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.fmax <= self.seq_threshold:
            raise ValueError(f"need 1 <= fmax ({self.fmax}) <= seq_threshold ({self.seq_threshold})")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")


@dataclass
class Fragments:
    """Facet pieces held by a cell, one row each. ``poly`` is -1 for an uncut
    input facet, else an index into the exploration's polygon store."""

    mesh: np.ndarray
    facet: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    poly: np.ndarray

    def __len__(self):
        return len(self.mesh)

    def take(self, mask):
        return Fragments(self.mesh[mask], self.facet[mask], self.lo[mask], self.hi[mask], self.poly[mask])

    @staticmethod
    def concat(parts):
        return Fragments(*(np.concatenate([getattr(p, n) for p in parts]) for n in ("mesh", "facet", "lo", "hi", "poly")))


@dataclass
class KDCell:
    lo: np.ndarray
    hi: np.ndarray
    frags: Fragments
    indicator: tuple
    depth: int = 0

    def inputs(self):
        return sorted(set(self.frags.mesh.tolist()))


@dataclass
class Exploration:
    """State shared by the cells of one exploration task."""

    meshes: list
    f: object
    config: ExplorationConfig
    store: list = field(default_factory=list)
    tally: Counter = field(default_factory=Counter)
    counters: Counter = field(default_factory=Counter)

    def points(self, frags, row):
        p = int(frags.poly[row])
        if p < 0:
            return self.meshes[int(frags.mesh[row])].facet_points(int(frags.facet[row]))
        return self.store[p]


def root_cell(meshes):
    """Cell around the whole scene with every facet uncut, all slots u."""
    parts = []
    for i, m in enumerate(meshes):
        lo, hi = m.facet_bounds
        n = m.n_facets
        parts.append(Fragments(np.full(n, i, dtype=np.int64), np.arange(n, dtype=np.int64), lo, hi, np.full(n, -1, dtype=np.int64)))
    frags = Fragments.concat(parts)
    lo = frags.lo.min(axis=0)
    hi = frags.hi.max(axis=0)
    pad = 1e-3 * max(1e-300, float(np.max(hi - lo)))
    return KDCell(lo - pad, hi + pad, frags, tuple(U for _ in meshes))


def classify_cell(cell, f):
    return eval_ternary(f, cell.indicator)


# splitting


def _clip_rows(ex, frags, rows, axis, mid):
    """Clip the given straddling rows; returns (below pieces, above pieces) as
    lists of (row, pts)."""
    below, above = [], []
    for r in rows:
        b, a = split_axis(ex.points(frags, r), axis, mid)
        if b is not None:
            below.append((r, b))
        if a is not None:
            above.append((r, a))
    return below, above


def _pieces(ex, frags, items):
    if not items:
        return None
    rows = np.array([r for r, _ in items], dtype=np.int64)
    start = len(ex.store)
    ex.store.extend(p for _, p in items)
    lo = np.array([p.min(axis=0) for _, p in items])
    hi = np.array([p.max(axis=0) for _, p in items])
    return Fragments(frags.mesh[rows], frags.facet[rows], lo, hi, np.arange(start, start + len(items), dtype=np.int64))


def split(cell, ex, pool=None, chunk=256):
    """Halve the cell at the middle of its largest extent.

    Straddling fragments are clipped; each clip adds one to the split count.
    With ``pool`` (an executor) the clipping runs in chunks.
    """
    axis = int(np.argmax(cell.hi - cell.lo))
    mid = 0.5 * (cell.lo[axis] + cell.hi[axis])
    fr = cell.frags
    flo, fhi = fr.lo[:, axis], fr.hi[:, axis]
    to_left = flo < mid
    to_right = fhi >= mid
    cut = to_left & (fhi > mid)
    rows = np.nonzero(cut)[0]
    if pool is not None and len(rows) > chunk:
        jobs = [pool.submit(_clip_rows, ex, fr, rows[s : s + chunk], axis, mid) for s in range(0, len(rows), chunk)]
        below, above = [], []
        for j in jobs:
            b, a = j.result()
            below += b
            above += a
    else:
        below, above = _clip_rows(ex, fr, rows, axis, mid)
    ex.counters["s"] += len(rows)
    left_parts = [fr.take(to_left & ~cut)]
    right_parts = [fr.take(to_right & ~cut)]
    for parts, items in ((left_parts, below), (right_parts, above)):
        p = _pieces(ex, fr, items)
        if p is not None:
            parts.append(p)
    left_lo, left_hi = cell.lo.copy(), cell.hi.copy()
    left_hi[axis] = mid
    right_lo, right_hi = cell.lo.copy(), cell.hi.copy()
    right_lo[axis] = mid
    kids = []
    for lo, hi, parts, direction in ((left_lo, left_hi, left_parts, -1), (right_lo, right_hi, right_parts, 1)):
        frags = Fragments.concat(parts)
        present = set(frags.mesh.tolist())
        ind = list(cell.indicator)
        for i, t in enumerate(cell.indicator):
            if t == U and i not in present:
                ind[i] = _side_bit(ex, cell, i, axis, direction, lo, hi)
        kids.append(KDCell(lo, hi, frags, tuple(ind), cell.depth + 1))
    return kids[0], kids[1], axis, mid


def _side_bit(ex, cell, i, axis, direction, lo, hi):
    fr = cell.frags
    rows = np.nonzero(fr.mesh == i)[0]
    try:
        return resolve_side_indicator([ex.points(fr, r) for r in rows], ex.meshes[i].normals[fr.facet[rows]], axis, direction, fr.lo[rows], fr.hi[rows], ex.config.tol)
    except OrientationUndecided:
        ex.tally["OrientationUndecided"] += 1
        return shoot_ray_global(0.5 * (lo + hi), ex.meshes[i])


def _slice(v, q, zext, direction, axis, others):
    dz = zext - direction * q[axis]
    if dz <= 0:
        return None
    return (q[others] - v[others]) / dz


def _cross2(a, b):
    return float(a[0] * b[1] - a[1] * b[0])


def extremal_facet(polys, axis, direction, lo=None, hi=None):
    """Index of the polygon deciding the side toward ``direction`` on ``axis``.

    The extremal vertex is the one furthest along the axis; among the
    polygons through it, half-edges are sliced by the plane at unit depth
    below it and ranked by the triplet (z, d, s): d the distance of the
    half-edge's slice point from the projected vertex, s the sine between
    that offset and the polygon's slice line. Returns (index, triplet).
    """
    others = [a for a in range(3) if a != axis]
    if lo is None:
        far = np.array([float(np.max(direction * p[:, axis])) for p in polys])
    else:
        far = hi[:, axis] if direction > 0 else -lo[:, axis]
    zext = float(np.max(far))
    best, best_t = None, None
    for idx in np.nonzero(far == zext)[0]:
        pts = polys[idx]
        z = direction * pts[:, axis]
        n = len(pts)
        for k in np.nonzero(z == zext)[0]:
            v = pts[k]
            ends = (_slice(v, pts[k - 1], zext, direction, axis, others), _slice(v, pts[(k + 1) % n], zext, direction, axis, others))
            for er, eo in (ends, ends[::-1]):
                if er is None:
                    d, s = math.inf, 1.0
                else:
                    d = float(np.hypot(*er))
                    if eo is None:
                        s = 1.0
                    else:
                        seg = eo - er
                        den = d * float(np.hypot(*seg))
                        s = abs(_cross2(-er, seg)) / den if den > 0 else 0.0
                t = (zext, d, s)
                if best_t is None or t > best_t:
                    best, best_t = int(idx), t
    return best, best_t


def resolve_side_indicator(polys, normals, axis, direction, lo=None, hi=None, tol=1e-12):
    """Inside bit of an empty child lying on side ``direction`` (+1/-1) of the
    given fragments of one input along ``axis``."""
    idx, _ = extremal_facet(polys, axis, direction, lo, hi)
    comp = direction * float(normals[idx][axis])
    if abs(comp) <= tol:
        raise OrientationUndecided("extremal facet parallel to the split axis")
    return 0 if comp > 0 else 1


# node processing


def _single_input(ex, cell, i):
    """All vertices of input i in the cell, kept by the one-slot flip probe."""
    m = ex.meshes[i]
    fr = cell.frags
    facets = fr.facet[fr.mesh == i]
    starts, flat = m.loop_csr
    vids = np.unique(np.concatenate([flat[starts[f] : starts[f + 1]] for f in facets]))
    pts = m.vertices[vids]
    keep = np.all((pts >= cell.lo) & (pts < cell.hi), axis=1)
    ind = list(cell.indicator)
    ind[i] = S
    bits = flip_probe(ex.f, ind, [i])
    if bits[0] == bits[1]:
        return []
    ind = tuple(ind)
    return [FinalVertex((1, i, int(v)), p, ind, bits) for v, p in zip(vids[keep], pts[keep])]


def _leaf(ex, cell):
    fr = cell.frags
    facet_sets = {}
    ctx_frags = {}
    for i in cell.inputs():
        mask = fr.mesh == i
        facet_sets[i] = (fr.facet[mask], fr.lo[mask], fr.hi[mask])
        if cell.indicator[i] == U:
            normals = ex.meshes[i].normals
            ctx_frags[i] = [(ex.points(fr, r), normals[fr.facet[r]]) for r in np.nonzero(mask)[0]]
    cands = gather_candidates(ex.meshes, facet_sets, (cell.lo, cell.hi), ex.tally, ex.counters)
    ctx = CellContext(cell.indicator, ctx_frags)
    return classify_candidates(cands, ex.meshes, ex.f, ctx, ex.tally)


def process(ex, cell, out, pool=None):
    """One node of the exploration; returns the children to explore."""
    ex.counters["nodes"] += 1
    if classify_cell(cell, ex.f) != U:
        ex.counters["pruned"] += 1
        return []
    undefined = [i for i, t in enumerate(cell.indicator) if t == U]
    if len(undefined) == 1:
        ex.counters["single"] += 1
        out.extend(_single_input(ex, cell, undefined[0]))
        return []
    if len(cell.frags) <= ex.config.fmax or cell.depth >= ex.config.max_depth:
        if len(cell.frags) > ex.config.fmax:
            ex.tally["MaxDepthExceeded"] += 1
        ex.counters["leaves"] += 1
        out.extend(_leaf(ex, cell))
        return []
    a, b, _, _ = split(cell, ex, pool)
    return [a, b]


def explore(ex, cell, out):
    stack = [cell]
    while stack:
        kids = process(ex, stack.pop(), out)
        stack.extend(reversed(kids))
    return out


def kd_vertices(meshes, f, config=None, tally=None):
    """Final vertices of f by kd exploration. Returns (sorted vertices, stats, counters)."""
    if f.arity != len(meshes):
        raise ArityMismatch(f"function of arity {f.arity} over {len(meshes)} meshes")
    config = config or ExplorationConfig()
    ex = Exploration(meshes, f, config)
    if tally is not None:
        ex.tally = tally
    t0 = time.perf_counter()
    out = explore(ex, root_cell(meshes), [])
    out.sort(key=lambda v: v.key)
    elapsed = time.perf_counter() - t0
    return out, make_stats(meshes, out, ex.counters, ex.tally, elapsed), ex.counters


def make_stats(meshes, verts, counters, tally, elapsed):
    return StatsRecord(
        m=sum(m.n_facets for m in meshes),
        s=int(counters.get("s", 0)),
        h=sum(1 for v in verts if v.order >= 2),
        t_vertices_s=elapsed,
        errors=error_total(tally),
    )

