"""Looplets at final vertices, loop chaining into output facets, tesselation."""

from __future__ import annotations

import bisect
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import IncompleteLoop, TesselationFailure

# Directions are keyed by an ordered facet pair. For two facets of one mesh
# the pair (a, b) is their shared edge run with a on its left; for facets of
# different meshes it is n_a x n_b. Reversing the pair negates the direction.


def dir_key(ga, gb):
    """Canonical key of d_ab for global facet ids ga = (mesh, facet)."""
    if ga < gb:
        return ga + gb + (1,)
    return gb + ga + (-1,)


def reverse_key(key):
    return key[:4] + (-key[4],)


def key_vector(meshes, key):
    m1, f1, m2, f2, sign = key
    if m1 == m2:
        d = meshes[m1].edge_direction(f1, f2)
    else:
        d = np.cross(meshes[m1].normals[f1], meshes[m2].normals[f2])
        d = d / np.linalg.norm(d)
    return d if sign > 0 else -d


@dataclass(frozen=True)
class Looplet:
    """(d_in, v, d_out | host^sign). ``vertex`` is the provenance key."""

    vertex: tuple
    host: tuple
    sign: int
    d_in: tuple
    d_out: tuple

    def reversed(self):
        return Looplet(self.vertex, self.host, -self.sign, reverse_key(self.d_out), reverse_key(self.d_in))


# symbolic tables over facet roles


def _part(b_out, b_in):
    """+1 if crossing the host surface goes from result-outside to inside
    when moving into its solid, -1 for the opposite, 0 when f does not change."""
    if (b_out, b_in) == (0, 1):
        return 1
    if (b_out, b_in) == (1, 0):
        return -1
    return 0


def _rev(pair):
    return (pair[1], pair[0])


def sector_looplets(host, rays, values):
    """Looplets of one host plane.

    ``rays`` are role pairs in counterclockwise order around the host normal;
    sector k spans ray k to ray k+1 (cyclically) and ``values[k]`` is its
    participation sign. Each maximal run of equal nonzero sign that does not
    cover the whole circle yields one looplet: for + it enters along the
    reverse of the run's closing ray and leaves along its opening ray.
    """
    n = len(values)
    out = []
    for sigma in (1, -1):
        mask = [v == sigma for v in values]
        if all(mask) or not any(mask):
            continue
        for k in range(n):
            if mask[k] and not mask[k - 1]:
                e = k
                while mask[(e + 1) % n]:
                    e = (e + 1) % n
                a, b = rays[k], rays[(e + 1) % n]
                if sigma > 0:
                    out.append((host, 1, _rev(b), a))
                else:
                    out.append((host, -1, _rev(a), b))
    return out


def order2_entry(bits):
    """Looplets at an edge/facet vertex in the reference configuration.

    Roles: 1 is the facet on the left of the edge direction e = d_13, 3 the
    facet on its right, 2 the crossed facet, with n_2 . e > 0. ``bits`` is
    indexed 2r + s with r the edge mesh bit and s the facet mesh bit.
    """
    b = lambda r, s: bits[2 * r + s]
    across_edge = [_part(b(0, s), b(1, s)) for s in (0, 1)]
    across_facet = [_part(b(r, 0), b(r, 1)) for r in (0, 1)]
    out = []
    out += sector_looplets(2, [(1, 2), (2, 3)], across_facet)
    out += sector_looplets(1, [(1, 3), (1, 2), (3, 1)], [across_edge[0], across_edge[1], 0])
    out += sector_looplets(3, [(3, 1), (2, 3), (1, 3)], [across_edge[1], across_edge[0], 0])
    return tuple(sorted(out))


def order3_entry(bits, right_handed):
    """Looplets at a three-facet vertex.

    Roles 0, 1, 2 follow increasing mesh index; ``bits`` is indexed
    4 b0 + 2 b1 + b2; ``right_handed`` is det(n0, n1, n2) > 0.
    """
    out = []
    for h in range(3):
        p, q = [r for r in range(3) if r != h]
        positive = right_handed if h != 1 else not right_handed
        if positive:
            rays = [(h, p), (h, q), (p, h), (q, h)]
            quads = [(1, 0), (1, 1), (0, 1), (0, 0)]
        else:
            rays = [(h, p), (q, h), (p, h), (h, q)]
            quads = [(1, 1), (1, 0), (0, 0), (0, 1)]
        values = []
        for s, t in quads:
            idx = {h: 0, p: s, q: t}
            lo = 4 * idx[0] + 2 * idx[1] + idx[2]
            idx[h] = 1
            hi = 4 * idx[0] + 2 * idx[1] + idx[2]
            values.append(_part(bits[lo], bits[hi]))
        out += sector_looplets(h, rays, values)
    return tuple(sorted(out))


def _bits_of(idx, width):
    return tuple(idx >> (width - 1 - k) & 1 for k in range(width))


@lru_cache(maxsize=None)
def order2_table():
    return {_bits_of(i, 4): order2_entry(_bits_of(i, 4)) for i in range(16)}


@lru_cache(maxsize=None)
def order3_table():
    return {
        (_bits_of(i, 8), rh): order3_entry(_bits_of(i, 8), rh) for i in range(256) for rh in (True, False)
    }


# per-vertex looplets


def looplets_order1(v, meshes):
    _, i, vid = v.key
    b0, b1 = v.classification
    mesh = meshes[i]
    out = []
    for fa in mesh.vertex_facets[vid]:
        loop = mesh.facets[fa]
        k = loop.index(vid)
        prv, nxt = loop[k - 1], loop[(k + 1) % len(loop)]
        g_prev = mesh.adjacency[(vid, prv)]
        g_next = mesh.adjacency[(nxt, vid)]
        lp = Looplet(v.key, (i, fa), 1, dir_key((i, fa), (i, g_prev)), dir_key((i, fa), (i, g_next)))
        if (b0, b1) == (0, 1):
            out.append(lp)
        elif (b0, b1) == (1, 0):
            out.append(lp.reversed())
    return out


def order2_roles(v, meshes):
    """(role -> global facet, bits indexed 2r + s) in the reference configuration."""
    _, i, fa, fb, j, fc = v.key
    u, w = meshes[i].shared_edges[(fa, fb)]
    e = meshes[i].vertices[w] - meshes[i].vertices[u]
    if float(meshes[j].normals[fc] @ e) > 0:
        f1, f3 = fa, fb
    else:
        f1, f3 = fb, fa
    c = v.classification
    bits = c if i < j else (c[0], c[2], c[1], c[3])
    return {1: (i, f1), 2: (j, fc), 3: (i, f3)}, bits


def looplets_order2(v, meshes):
    roles, bits = order2_roles(v, meshes)
    return [
        Looplet(v.key, roles[h], s, dir_key(roles[a], roles[b]), dir_key(roles[c], roles[d]))
        for h, s, (a, b), (c, d) in order2_table()[tuple(bits)]
    ]


def looplets_order3(v, meshes):
    _, i, fa, j, fb, k, fc = v.key
    roles = {0: (i, fa), 1: (j, fb), 2: (k, fc)}
    det = float(np.linalg.det(np.array([meshes[i].normals[fa], meshes[j].normals[fb], meshes[k].normals[fc]])))
    return [
        Looplet(v.key, roles[h], s, dir_key(roles[a], roles[b]), dir_key(roles[c], roles[d]))
        for h, s, (a, b), (c, d) in order3_table()[(tuple(v.classification), det > 0)]
    ]


def looplets(v, meshes):
    return {1: looplets_order1, 2: looplets_order2, 3: looplets_order3}[v.order](v, meshes)


# chaining


@dataclass
class OutputFacet:
    host: tuple
    sign: int
    loops: list  # vertex index lists; first is the outer boundary
    normal: np.ndarray


def _chain_group(items, coords, dirs, tally):
    """Chain the looplets of one (host, sign) into closed loops of vertex ids.

    ``items`` are (vertex index, d_in, d_out). Among looplets entering along
    the current outgoing direction, the nearest one ahead is taken.
    """
    buckets = defaultdict(list)
    for n, (vi, d_in, d_out) in enumerate(items):
        t = float(coords[vi] @ dirs[d_in])
        buckets[d_in].append((t, n))
    for b in buckets.values():
        b.sort()
    used = [False] * len(items)
    loops = []
    broken = False
    for seed in sorted(range(len(items)), key=lambda n: items[n][0]):
        if used[seed]:
            continue
        used[seed] = True
        loop = [items[seed][0]]
        cur = seed
        closed = False
        for _ in range(len(items) + 1):
            vi, _, d_out = items[cur]
            bucket = buckets.get(d_out, [])
            t_cur = float(coords[vi] @ dirs[d_out])
            pos = bisect.bisect_right(bucket, (t_cur, len(items)))
            nxt = None
            for t, n in bucket[pos:]:
                if t <= t_cur:
                    continue
                if n == seed or not used[n]:
                    nxt = n
                    break
            if nxt is None:
                break
            if nxt == seed:
                closed = True
                break
            used[nxt] = True
            loop.append(items[nxt][0])
            cur = nxt
        if closed:
            loops.append(loop)
        else:
            broken = True
    if broken:
        tally["IncompleteLoop"] += 1
    return loops


def csg_facets(final_vertices, meshes, tally=None):
    """Output facets from the looplets of all final vertices.

    Returns (ordered vertex list, facets) where facets are OutputFacet with
    loops over indices into the vertex list.
    """
    tally = tally if tally is not None else Counter()
    verts = sorted(final_vertices, key=lambda v: v.key)
    index = {v.key: n for n, v in enumerate(verts)}
    coords = np.array([v.coords for v in verts]).reshape(-1, 3)
    groups = defaultdict(list)
    for v in verts:
        for lp in looplets(v, meshes):
            groups[(lp.host, lp.sign)].append(lp)
    dirs = {}
    facets = []
    for (host, sign) in sorted(groups):
        items = []
        for lp in groups[(host, sign)]:
            for d in (lp.d_in, lp.d_out):
                if d not in dirs:
                    dirs[d] = key_vector(meshes, d)
            items.append((index[lp.vertex], lp.d_in, lp.d_out))
        loops = _chain_group(items, coords, dirs, tally)
        normal = sign * meshes[host[0]].normals[host[1]]
        facets.extend(_nest(host, sign, loops, coords, normal))
    return verts, facets


def _project(coords, normal):
    """2D coordinates preserving counterclockwise order around ``normal``."""
    ax = int(np.argmax(np.abs(normal)))
    a, b = [(1, 2), (2, 0), (0, 1)][ax]
    pts = coords[:, [a, b]]
    if normal[ax] < 0:
        pts = pts[:, ::-1]
    return pts


def _area2(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _inside2(pt, poly):
    x, y = pt
    inside = False
    n = len(poly)
    for k in range(n):
        x0, y0 = poly[k]
        x1, y1 = poly[(k + 1) % n]
        if (y0 > y) != (y1 > y):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xc > x:
                inside = not inside
    return inside


def _nest(host, sign, loops, coords, normal):
    """Group loops into outer boundaries with their holes."""
    if len(loops) == 1:
        return [OutputFacet(host, sign, loops, normal)]
    proj = [_project(coords[l], normal) for l in loops]
    areas = [_area2(p) for p in proj]
    outers = [n for n, a in enumerate(areas) if a > 0]
    holes = [n for n, a in enumerate(areas) if a <= 0]
    members = {n: [loops[n]] for n in outers}
    for h in holes:
        probe = proj[h].mean(axis=0) if len(proj[h]) == 3 else proj[h][0]
        best = None
        for o in outers:
            if any(_inside2(p, proj[o]) for p in (probe, proj[h][0])) and (best is None or areas[o] < areas[best]):
                best = o
        if best is None:
            members[h] = [loops[h]]
        else:
            members[best].append(loops[h])
    return [OutputFacet(host, sign, members[n], normal) for n in sorted(members)]


# tesselation


def _is_convex_loop(p):
    n = len(p)
    prv = np.roll(p, 1, axis=0)
    nxt = np.roll(p, -1, axis=0)
    cross = (p[:, 0] - prv[:, 0]) * (nxt[:, 1] - p[:, 1]) - (p[:, 1] - prv[:, 1]) * (nxt[:, 0] - p[:, 0])
    scale = float(np.max(np.abs(p - p.mean(axis=0)))) ** 2 if n else 0.0
    return bool(np.all(cross >= -1e-12 * scale))


def _cross2(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _bridge_holes(outer, holes, pts):
    """Merge hole loops into the outer loop through bridge edges."""
    ring = list(outer)
    for hole in sorted(holes, key=lambda h: -max(pts[v][0] for v in h)):
        k = max(range(len(hole)), key=lambda n: (pts[hole[n]][0], -pts[hole[n]][1]))
        hv = hole[k]
        hp = pts[hv]
        best, best_d = None, None
        for idx, v in enumerate(ring):
            p = pts[v]
            d = (p[0] - hp[0]) ** 2 + (p[1] - hp[1]) ** 2
            if best is not None and d >= best_d:
                continue
            if _visible(hp, p, ring, hole, pts, v, hv):
                best, best_d = idx, d
        if best is None:
            raise TesselationFailure("no bridge from hole to boundary")
        hole_seq = hole[k:] + hole[:k] + [hole[k]]
        ring = ring[: best + 1] + hole_seq + ring[best:]
    return ring


def _segments_cross(a, b, c, d):
    d1 = _cross2(a, b, c)
    d2 = _cross2(a, b, d)
    d3 = _cross2(c, d, a)
    d4 = _cross2(c, d, b)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def _visible(a, b, ring, hole, pts, vb, va):
    for loop in (ring, hole):
        n = len(loop)
        for k in range(n):
            u, w = loop[k], loop[(k + 1) % n]
            if vb in (u, w) or va in (u, w):
                continue
            if _segments_cross(a, b, pts[u], pts[w]):
                return False
    return True


def _ear_clip(ring, pts):
    """Triangulate a weakly simple counterclockwise ring of vertex ids."""
    idx = list(range(len(ring)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 4 * len(ring) * len(ring) + 16:
            raise TesselationFailure("ear clipping did not converge")
        n = len(idx)
        found = False
        for k in range(n):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % n]
            pa, pb, pc = pts[ring[a]], pts[ring[b]], pts[ring[c]]
            if _cross2(pa, pb, pc) <= 0:
                continue
            ok = True
            for m in idx:
                if m in (a, b, c) or ring[m] in (ring[a], ring[b], ring[c]):
                    continue
                p = pts[ring[m]]
                if _cross2(pa, pb, p) >= 0 and _cross2(pb, pc, p) >= 0 and _cross2(pc, pa, p) >= 0:
                    ok = False
                    break
            if ok:
                tris.append((ring[a], ring[b], ring[c]))
                del idx[k]
                found = True
                break
        if not found:
            # only collinear or reflex corners remain: drop a collinear vertex
            # as a zero-area ear so that edges stay matched
            for k in range(n):
                a, b, c = idx[k - 1], idx[k], idx[(k + 1) % n]
                if _cross2(pts[ring[a]], pts[ring[b]], pts[ring[c]]) == 0:
                    tris.append((ring[a], ring[b], ring[c]))
                    del idx[k]
                    found = True
                    break
        if not found:
            raise TesselationFailure("no ear found")
    tris.append(tuple(ring[m] for m in idx))
    return tris


def _fan_from_corner(loop, p):
    """Fan triangulation of a convex loop from a strictly convex corner."""
    n = len(loop)
    best = 0
    best_turn = -1.0
    for k in range(n):
        t = _cross2(p[k - 1], p[k], p[(k + 1) % n])
        if t > best_turn:
            best, best_turn = k, t
    rot = loop[best:] + loop[:best]
    return [(rot[0], rot[k], rot[k + 1]) for k in range(1, n - 1)]


def _merge_convex(tris, pts):
    """Greedy removal of diagonals whose removal keeps pieces convex."""
    polys = [list(t) for t in tris]
    changed = True
    while changed:
        changed = False
        edge_owner = {}
        for pi, poly in enumerate(polys):
            if poly is None:
                continue
            for k in range(len(poly)):
                edge_owner[(poly[k], poly[(k + 1) % len(poly)])] = pi
        for (u, w), pi in list(edge_owner.items()):
            pj = edge_owner.get((w, u))
            if pj is None or pj == pi or polys[pi] is None or polys[pj] is None:
                continue
            a, b = polys[pi], polys[pj]
            merged = _splice(a, a.index(u), b, b.index(w))
            if merged is None:
                continue
            mp = np.array([pts[v] for v in merged])
            if len(set(merged)) == len(merged) and _is_convex_loop(mp):
                polys[pi] = merged
                polys[pj] = None
                changed = True
                break
    return [p for p in polys if p is not None]


def _splice(a, ka, b, kb):
    """Join polygons a and b along a's edge a[ka] -> a[ka+1] (= b's w -> u)."""
    u = a[ka]
    w = a[(ka + 1) % len(a)]
    if b[kb] != w or b[(kb + 1) % len(b)] != u:
        return None
    ra = a[ka + 1 :] + a[: ka + 1]  # starts at w, ends at u
    rb = b[kb + 1 :] + b[: kb + 1]  # starts at u, ends at w
    return ra[:-1] + rb[:-1]


def tesselate_facet(facet, coords, mode):
    """Loops of one output facet as a list of vertex loops."""
    if mode == "none":
        return [list(l) for l in facet.loops]
    outer = facet.loops[0]
    holes = facet.loops[1:]
    ids = sorted({v for l in facet.loops for v in l})
    p2 = dict(zip(ids, _project(coords[ids], facet.normal)))
    outer_p = np.array([p2[v] for v in outer])
    if not holes and _is_convex_loop(outer_p):
        if mode == "convex":
            return [list(outer)]
        return [list(t) for t in _fan_from_corner(list(outer), outer_p)]
    ring = _bridge_holes(list(outer), [list(h) for h in holes], p2)
    tris = _ear_clip(ring, p2)
    want = sum(_area2(np.array([p2[v] for v in l])) for l in facet.loops)
    got = sum(_area2(np.array([p2[v] for v in t])) for t in tris)
    if abs(got - want) > 1e-9 * max(1.0, abs(want)):
        raise TesselationFailure("area not conserved")
    if mode == "convex":
        return _merge_convex(tris, p2)
    return [list(t) for t in tris]


def tesselate(facets, coords, mode="tri", tally=None):
    """Flatten output facets into vertex loops; failures keep the raw loops."""
    if mode not in ("none", "convex", "tri", "triangles"):
        raise ValueError(f"unknown tesselation mode {mode!r}")
    mode = "tri" if mode == "triangles" else mode
    tally = tally if tally is not None else Counter()
    out = []
    for fc in facets:
        try:
            out.extend(tesselate_facet(fc, coords, mode))
        except TesselationFailure:
            tally["TesselationFailure"] += 1
            out.extend(list(l) for l in fc.loops)
    return out


@dataclass
class FinalMesh:
    """Boolean result: vertices with provenance and facet loops."""

    vertices: np.ndarray
    facets: list
    provenance: list
    errors: Counter = field(default_factory=Counter)
    hosts: list = field(default_factory=list)  # (mesh, facet, sign) per facet

    def with_vertices(self, vertices, errors=None):
        return replace(self, vertices=vertices, errors=self.errors if errors is None else errors)


def build_mesh(final_vertices, meshes, mode="tri", tally=None):
    """Chain looplets and tesselate; returns a FinalMesh in the meshes' frame."""
    tally = tally if tally is not None else Counter()
    verts, facets = csg_facets(final_vertices, meshes, tally)
    coords = np.array([v.coords for v in verts], dtype=np.float64).reshape(-1, 3)
    loops, hosts = [], []
    for fc in facets:
        part = tesselate([fc], coords, mode, tally)
        loops.extend(part)
        hosts.extend([fc.host + (fc.sign,)] * len(part))
    used = sorted({v for l in loops for v in l})
    remap = {old: new for new, old in enumerate(used)}
    loops = [[remap[v] for v in l] for l in loops]
    return FinalMesh(coords[used], loops, [verts[v].key for v in used], tally, hosts)


def canonical_loop(loop):
    k = loop.index(min(loop))
    return tuple(loop[k:] + loop[:k])
