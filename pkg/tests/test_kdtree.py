from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncsg import boolfn, scenes
from ncsg.boolfn import U
from ncsg.bruteforce import csg_vertices
from ncsg.kdtree import (
    Exploration,
    ExplorationConfig,
    classify_cell,
    kd_vertices,
    resolve_side_indicator,
    root_cell,
    split,
)
from ncsg.mesh_core import JitterConfig, apply_jitter, topology_pass
from ncsg.predicates import polygon_area, shoot_ray_global, split_axis

OPS = [boolfn.union, boolfn.intersection, boolfn.xor, lambda n: boolfn.min_k(2, n), lambda n: boolfn.difference(n)]


def jittered(raws, seed=0):
    return apply_jitter([topology_pass(r) for r in raws], JitterConfig(seed=seed))[0]


def same_vertices(a, b):
    a = sorted(a, key=lambda v: v.key)
    b = sorted(b, key=lambda v: v.key)
    assert [v.key for v in a] == [v.key for v in b]
    for u, w in zip(a, b):
        assert np.allclose(u.coords, w.coords, atol=1e-9, rtol=0)
        assert u.classification == w.classification


def random_scene(rng, n):
    raws = []
    for _ in range(n):
        c = rng.uniform(-0.8, 0.8, 3)
        if rng.random() < 0.5:
            raws.append(scenes.random_convex(rng, int(rng.integers(8, 30)), center=c))
        else:
            raws.append(scenes.random_torus(rng, nu=int(rng.integers(6, 14)), nv=int(rng.integers(4, 8)), center=c))
    return raws


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 5), st.integers(0, len(OPS) - 1))
def test_kd_matches_brute(seed, n, op):
    rng = np.random.default_rng(seed)
    meshes = jittered(random_scene(rng, n), seed)
    f = OPS[op](n)
    tally = Counter()
    kd, _, _ = kd_vertices(meshes, f, ExplorationConfig(fmax=8, seq_threshold=8), tally)
    assert not tally
    same_vertices(kd, csg_vertices(meshes, f))


def test_root_cell_is_undecided():
    meshes = jittered([scenes.cube(), scenes.cube(center=(0.3, 0.2, 0.1))])
    cell = root_cell(meshes)
    assert cell.indicator == (U, U)
    assert classify_cell(cell, boolfn.union(2)) == U
    assert len(cell.frags) == 12


def test_disjoint_union_and_pruning():
    meshes = jittered([scenes.cube(), scenes.cube(center=(4, 0, 0))])
    config = ExplorationConfig(fmax=2, seq_threshold=2)
    verts, stats, counters = kd_vertices(meshes, boolfn.union(2), config)
    assert len(verts) == 16 and all(v.order == 1 for v in verts)
    assert stats.h == 0
    empty, _, counters = kd_vertices(meshes, boolfn.intersection(2), config)
    assert empty == []
    # the first split separates the cubes and both halves are pruned
    assert counters["pruned"] >= 2
    assert counters["leaves"] == 0


def _fragment_area(ex, frags):
    out = Counter()
    for r in range(len(frags)):
        out[(int(frags.mesh[r]), int(frags.facet[r]))] += polygon_area(ex.points(frags, r))
    return out


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_split_conserves_area(seed):
    rng = np.random.default_rng(seed)
    meshes = jittered([scenes.icosphere(1.0, 2, rng.uniform(-1, 1, 3)), scenes.random_convex(rng, 20)], seed)
    ex = Exploration(meshes, boolfn.union(2), ExplorationConfig())
    cell = root_cell(meshes)
    before = _fragment_area(ex, cell.frags)
    left, right, axis, mid = split(cell, ex)
    after = _fragment_area(ex, left.frags) + _fragment_area(ex, right.frags)
    assert set(after) == set(before)
    for k in before:
        assert after[k] == pytest.approx(before[k], rel=1e-9)
    assert np.all(left.frags.hi[:, axis] <= mid + 1e-12)
    assert np.all(right.frags.lo[:, axis] >= mid - 1e-12)


def _clip_box(pts, lo, hi):
    for axis in range(3):
        for value, keep_below in ((lo[axis], False), (hi[axis], True)):
            if pts is None:
                return None
            below, above = split_axis(pts, axis, value)
            pts = below if keep_below else above
    return pts


def test_side_indicator_vs_ray():
    rng = np.random.default_rng(21)
    meshes = jittered([scenes.icosphere(1.0, 2), scenes.torus(1.0, 0.35, 16, 8)], 21)
    checked = 0
    while checked < 1000:
        mesh = meshes[checked % 2]
        c = rng.uniform(-1.2, 1.2, 3)
        half = rng.uniform(0.1, 0.8, 3)
        lo, hi = c - half, c + half
        polys, normals = [], []
        for fi in range(mesh.n_facets):
            p = _clip_box(mesh.facet_points(fi), lo, hi)
            if p is not None:
                polys.append(p)
                normals.append(mesh.normals[fi])
        if not polys:
            continue
        axis = int(rng.integers(3))
        direction = int(rng.choice([-1, 1]))
        ext = max(float(np.max(direction * p[:, axis])) for p in polys)
        wall = direction * hi[axis] if direction > 0 else -lo[axis]
        if wall - ext < 1e-6:
            continue
        # an empty child between the fragments and the cell wall
        cut = direction * 0.5 * (ext + wall)
        clo, chi = lo.copy(), hi.copy()
        if direction > 0:
            clo[axis] = cut
        else:
            chi[axis] = cut
        bit = resolve_side_indicator(polys, np.array(normals), axis, direction)
        assert bit == shoot_ray_global(0.5 * (clo + chi), mesh)
        checked += 1


def test_max_depth_flags_and_stays_correct():
    meshes = jittered([scenes.icosphere(1.0, 2), scenes.icosphere(1.0, 2, (0.5, 0.1, 0))])
    tally = Counter()
    verts, _, _ = kd_vertices(meshes, boolfn.intersection(2), ExplorationConfig(fmax=1, seq_threshold=1, max_depth=2), tally)
    assert tally["MaxDepthExceeded"] > 0
    same_vertices(verts, csg_vertices(meshes, boolfn.intersection(2)))


def test_config_validation():
    with pytest.raises(ValueError):
        ExplorationConfig(fmax=0)
    with pytest.raises(ValueError):
        ExplorationConfig(fmax=50, seq_threshold=10)
    with pytest.raises(ValueError):
        ExplorationConfig(max_depth=0)
