"""Reference vertex finder: every input vertex, facet pair and facet triple."""

from __future__ import annotations

from collections import Counter

import numpy as np

from .classify import classify_candidates
from .errors import DegeneracyFlag, SingularIntersection
from .mesh_core import point_from_provenance
from .predicates import intersect2facets, intersect_segment_facet


def full_facet_sets(meshes):
    """Every facet of every mesh, with its bounding box."""
    out = {}
    for i, m in enumerate(meshes):
        lo, hi = m.facet_bounds
        out[i] = (np.arange(m.n_facets), lo, hi)
    return out


def in_region(x, region):
    if region is None:
        return True
    lo, hi = region
    return bool(np.all(x >= lo) and np.all(x < hi))


def _in_region_rows(pts, region):
    if region is None:
        return np.ones(len(pts), dtype=bool)
    lo, hi = region
    return np.all((pts >= lo) & (pts < hi), axis=1)


def _overlap_pairs(lo_a, hi_a, lo_b, hi_b):
    """Index pairs (a, b) whose boxes overlap."""
    out_a, out_b = [], []
    chunk = max(1, 4_000_000 // max(1, len(lo_b)))
    for s in range(0, len(lo_a), chunk):
        la, ha = lo_a[s : s + chunk, None, :], hi_a[s : s + chunk, None, :]
        ok = np.all((la <= hi_b[None]) & (lo_b[None] <= ha), axis=2)
        a, b = np.nonzero(ok)
        out_a.append(a + s)
        out_b.append(b)
    if not out_a:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(out_a), np.concatenate(out_b)


def gather_candidates(meshes, facet_sets, region=None, tally=None, counters=None):
    """Candidate (key, coords) pairs of orders 1 to 3 from the given facets.

    ``facet_sets[i]`` = (facet ids, box lo, box hi) for mesh i. Coordinates are
    recomputed from the provenance key so that every caller gets bit-identical
    points for the same vertex.
    """
    tally = tally if tally is not None else Counter()
    counters = counters if counters is not None else Counter()
    cands = []
    for i, (ids, _, _) in facet_sets.items():
        if len(ids) == 0:
            continue
        m = meshes[i]
        starts, flat = m.loop_csr
        sel = np.concatenate([flat[starts[f] : starts[f + 1]] for f in ids])
        verts = np.unique(sel)
        pts = m.vertices[verts]
        keep = _in_region_rows(pts, region)
        for v, p in zip(verts[keep], pts[keep]):
            cands.append(((1, i, int(v)), p))
    counters["order1_candidates"] += len(cands)

    mesh_ids = sorted(i for i, s in facet_sets.items() if len(s[0]))
    seen2 = set()
    for ai, i in enumerate(mesh_ids):
        ids_i, lo_i, hi_i = facet_sets[i]
        for j in mesh_ids[ai + 1 :]:
            ids_j, lo_j, hi_j = facet_sets[j]
            pa, pb = _overlap_pairs(lo_i, hi_i, lo_j, hi_j)
            for a, b in zip(pa, pb):
                fa, fb = int(ids_i[a]), int(ids_j[b])
                counters["pair_tests"] += 1
                try:
                    seg = intersect2facets(
                        meshes[i].facet_points(fa), meshes[i].normals[fa], meshes[i].offsets[fa],
                        meshes[j].facet_points(fb), meshes[j].normals[fb], meshes[j].offsets[fb],
                    )
                except DegeneracyFlag:
                    tally["DegeneracyFlag"] += 1
                    continue
                if seg is None:
                    continue
                counters["pairs_intersecting"] += 1
                for owner, edge in seg.ends:
                    mi, fx, mo, fo = (i, fa, j, fb) if owner == 0 else (j, fb, i, fa)
                    loop = meshes[mi].facets[fx]
                    u, w = loop[edge], loop[(edge + 1) % len(loop)]
                    fy = meshes[mi].adjacency[(w, u)]
                    key = (2, mi, min(fx, fy), max(fx, fy), mo, fo)
                    if key in seen2:
                        continue
                    seen2.add(key)
                    try:
                        x = point_from_provenance(meshes, key)
                    except SingularIntersection:
                        tally["SingularIntersection"] += 1
                        continue
                    if in_region(x, region):
                        cands.append((key, x))
                _triples(meshes, facet_sets, mesh_ids, i, fa, j, fb, seg, region, cands, tally, counters)
    return cands


def _triples(meshes, facet_sets, mesh_ids, i, fa, j, fb, seg, region, cands, tally, counters):
    counters["triple_loops"] += 1
    slo = np.minimum(seg.p, seg.q)
    shi = np.maximum(seg.p, seg.q)
    for k in mesh_ids:
        if k <= j:
            continue
        ids_k, lo_k, hi_k = facet_sets[k]
        hit = np.nonzero(np.all((lo_k <= shi) & (slo <= hi_k), axis=1))[0]
        mk = meshes[k]
        for c in hit:
            fc = int(ids_k[c])
            counters["triple_tests"] += 1
            try:
                x = intersect_segment_facet(seg.p, seg.q, mk.facet_points(fc), mk.normals[fc], mk.offsets[fc])
            except DegeneracyFlag:
                tally["DegeneracyFlag"] += 1
                continue
            if x is None:
                continue
            key = (3, i, fa, j, fb, k, fc)
            try:
                x = point_from_provenance(meshes, key)
            except SingularIntersection:
                tally["SingularIntersection"] += 1
                continue
            if in_region(x, region):
                cands.append((key, x))


def csg_vertices(meshes, f, tally=None, counters=None):
    """All final vertices of f over the meshes, by exhaustive search."""
    if f.arity != len(meshes):
        from .errors import ArityMismatch

        raise ArityMismatch(f"function of arity {f.arity} over {len(meshes)} meshes")
    tally = tally if tally is not None else Counter()
    cands = gather_candidates(meshes, full_facet_sets(meshes), None, tally, counters)
    return classify_candidates(cands, meshes, f, None, tally)
