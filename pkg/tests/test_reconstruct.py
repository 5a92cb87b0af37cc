import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from looplet_oracle import order2_oracle, order3_oracle
from scene_fixtures import named_host_loops, pentagonal_pyramid, rotate_to_min, xor_strip_scene
from ncsg import boolfn, scenes
from ncsg.boolfn import flip_probe, parse_expr
from ncsg.bruteforce import csg_vertices
from ncsg.classify import FinalVertex, owners_of, point_indicator
from ncsg.cli import PipelineOptions, pipeline
from ncsg.mesh_core import JitterConfig, apply_jitter, newell_normal, topology_pass
from ncsg.reconstruct import (
    OutputFacet,
    canonical_loop,
    csg_facets,
    key_vector,
    looplets,
    order2_entry,
    order2_table,
    order3_entry,
    order3_table,
    tesselate,
)

BITS2 = list(itertools.product((0, 1), repeat=4))
BITS3 = list(itertools.product((0, 1), repeat=8))


def vertex(mesh, vid, classification):
    return FinalVertex((1, 0, vid), mesh.vertices[vid], None, classification)


# order 1


def test_cube_corner_identity():
    cube = topology_pass(scenes.cube())
    lps = looplets(vertex(cube, 0, (0, 1)), [cube])
    assert len(lps) == 3
    assert all(lp.sign == 1 for lp in lps)
    assert {lp.host for lp in lps} == {(0, f) for f in cube.vertex_facets[0]}


def test_cube_corner_reversed():
    cube = topology_pass(scenes.cube())
    plus = looplets(vertex(cube, 0, (0, 1)), [cube])
    minus = looplets(vertex(cube, 0, (1, 0)), [cube])
    assert all(lp.sign == -1 for lp in minus)
    assert sorted(minus, key=repr) == sorted((lp.reversed() for lp in plus), key=repr)


def test_five_valent_apex():
    m = topology_pass(pentagonal_pyramid())
    assert len(looplets(vertex(m, 5, (0, 1)), [m])) == 5


# order 2 and 3 tables


def test_order2_examples():
    # joint decisions: the edge mesh's two facets count as one
    def decisions(entry):
        return {(0 if h == 2 else 1, s) for h, s, _, _ in entry}

    inter = order2_entry((0, 0, 0, 1))
    assert len(decisions(inter)) == 2
    assert {h for h, _, _, _ in inter} == {1, 2, 3}
    xor = order2_entry((0, 1, 1, 0))
    assert len(decisions(xor)) == 4
    assert {(h, s) for h, s, _, _ in xor} == {(h, s) for h in (1, 2, 3) for s in (1, -1)}
    for b in ((0,) * 4, (1,) * 4):
        assert order2_entry(b) == ()


def test_order3_intersection_corner():
    entry = order3_entry((0,) * 7 + (1,), True)
    assert len(entry) == 3
    assert sorted(h for h, _, _, _ in entry) == [0, 1, 2]
    assert all(s == 1 for _, s, _, _ in entry)


def test_order3_xor_opposing_corners():
    entry = order3_entry((0, 1, 1, 0, 1, 0, 0, 1), True)
    by = Counter((h, s) for h, s, _, _ in entry)
    assert set(by.values()) == {2}
    for h, s in by:
        a, b = [(di, do) for hh, ss, di, do in entry if (hh, ss) == (h, s)]
        # the two corners are point-symmetric: both directions reversed
        assert b == (a[0][::-1], a[1][::-1])


def test_order2_table_matches_sampled_geometry():
    table = order2_table()
    assert len(table) == 16
    for bits in BITS2:
        assert table[bits] == order2_oracle(bits, reflex=False)
        assert table[bits] == order2_oracle(bits, reflex=True)


def test_order3_table_matches_sampled_geometry():
    table = order3_table()
    assert len(table) == 512
    for bits in BITS3:
        for rh in (True, False):
            assert table[(bits, rh)] == order3_oracle(bits, rh)


def _reverse(entry):
    return tuple(sorted((h, -s, d_out[::-1], d_in[::-1]) for h, s, d_in, d_out in entry))


def test_complement_reverses_looplets():
    for bits in BITS2:
        flipped = tuple(1 - b for b in bits)
        assert order2_entry(flipped) == _reverse(order2_entry(bits))
    for bits in BITS3:
        flipped = tuple(1 - b for b in bits)
        for rh in (True, False):
            assert order3_entry(flipped, rh) == _reverse(order3_entry(bits, rh))


# chaining


def test_disjoint_union_copies_facets():
    raws = [scenes.cube(), scenes.cube(center=(3, 0, 0))]
    meshes = [topology_pass(r) for r in raws]
    verts = csg_vertices(meshes, boolfn.union(2))
    vlist, facets = csg_facets(verts, meshes)
    assert len(facets) == 12
    for fc in facets:
        assert fc.sign == 1 and len(fc.loops) == 1
        mesh, fid = fc.host
        got = [vlist[v].key[2] for v in fc.loops[0]]
        assert canonical_loop(got) == canonical_loop(list(meshes[mesh].facets[fid]))


def test_missing_vertex_counts_incomplete_loops():
    raws = [scenes.cube(), scenes.cube(center=(3, 0, 0))]
    meshes = [topology_pass(r) for r in raws]
    verts = csg_vertices(meshes, boolfn.union(2))
    drop = next(v for v in verts if v.key == (1, 0, 0))
    tally = Counter()
    _, facets = csg_facets([v for v in verts if v is not drop], meshes, tally)
    assert tally["IncompleteLoop"] == 3  # one per broken facet
    assert len(facets) == 9


def test_xor_strip_loops():
    raws, names, expected = xor_strip_scene()
    top = int(np.argmax(topology_pass(raws[0]).normals[:, 2]))
    res, _, tally = pipeline(raws, parse_expr("(P0 ^ P1) & P2"), PipelineOptions(tesselate="none"))
    assert not tally
    assert named_host_loops(res, (0, top), names, tol=1e-9) == rotate_to_min(expected)


def _scene(seed, n):
    rng = np.random.default_rng(seed)
    raws = [scenes.random_convex(rng, 10, center=rng.uniform(-0.5, 0.5, 3)) for _ in range(n)]
    meshes = [topology_pass(r) for r in raws]
    return apply_jitter(meshes, JitterConfig(seed=seed))[0]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 255))
def test_looplet_invariants(seed, table):
    meshes = _scene(seed, 3)
    f = boolfn.from_truth_table(3, table)
    verts = csg_vertices(meshes, f)
    flow = Counter()
    for v in verts:
        for lp in looplets(v, meshes):
            n = meshes[lp.host[0]].normals[lp.host[1]]
            for d in (lp.d_in, lp.d_out):
                assert abs(key_vector(meshes, d) @ n) < 1e-9
            flow[(lp.host, lp.sign, lp.d_out)] += 1
            flow[(lp.host, lp.sign, lp.d_in)] -= 1
    # every direction leaving one vertex enters another
    assert all(c == 0 for c in flow.values())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["P0 & P1", "P0 | P1", "P0 - P1", "P0 ^ P1"]))
def test_loops_wind_around_oriented_normal(seed, expr):
    meshes = _scene(seed, 2)
    vlist, facets = csg_facets(csg_vertices(meshes, parse_expr(expr)), meshes)
    coords = np.array([v.coords for v in vlist])
    for fc in facets:
        up = fc.sign * meshes[fc.host[0]].normals[fc.host[1]]
        assert newell_normal(coords[fc.loops[0]]) @ up > 0
        for hole in fc.loops[1:]:
            assert newell_normal(coords[hole]) @ up < 0


def test_classification_drives_tables():
    # a real edge/facet vertex picks the table row of its flip probe
    meshes = _scene(4, 2)
    verts = csg_vertices(meshes, boolfn.xor(2))
    v = next(v for v in verts if v.order == 2)
    ind = point_indicator(v.coords, meshes, owners_of(v.key))
    assert v.classification == flip_probe(boolfn.xor(2), ind, owners_of(v.key))
    assert len(looplets(v, meshes)) == 6


# tesselation


def _area(coords, loops, normal):
    return sum(0.5 * newell_normal(coords[l]) @ normal for l in loops)


def _square_facet(with_hole):
    outer = [[0, 0, 0], [4, 0, 0], [4, 4, 0], [0, 4, 0]]
    hole = [[1, 1, 0], [1, 3, 0], [3, 3, 0], [3, 1, 0]]  # clockwise
    coords = np.array(outer + hole, dtype=float)
    loops = [[0, 1, 2, 3]] + ([[4, 5, 6, 7]] if with_hole else [])
    return OutputFacet((0, 0), 1, loops, np.array([0, 0, 1.0])), coords


def test_quad_to_two_triangles():
    fc, coords = _square_facet(False)
    tris = tesselate([fc], coords, "tri")
    assert len(tris) == 2 and all(len(t) == 3 for t in tris)
    assert _area(coords, tris, fc.normal) == pytest.approx(16.0, rel=1e-12)


def test_square_with_hole():
    fc, coords = _square_facet(True)
    tally = Counter()
    tris = tesselate([fc], coords, "tri", tally)
    assert not tally
    assert len(tris) >= 8
    assert _area(coords, tris, fc.normal) == pytest.approx(16.0 - 4.0, rel=1e-9)
    convex = tesselate([fc], coords, "convex")
    assert _area(coords, convex, fc.normal) == pytest.approx(12.0, rel=1e-9)


def test_mode_none_passes_loops():
    fc, coords = _square_facet(True)
    assert tesselate([fc], coords, "none") == fc.loops
    with pytest.raises(ValueError):
        tesselate([fc], coords, "quads")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(5, 14))
def test_star_polygon_area_conserved(seed, k):
    rng = np.random.default_rng(seed)
    ang = np.sort(rng.uniform(0, 2 * np.pi, k))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    if gaps.min() < 1e-3 or gaps.max() > 3.0:
        return  # the origin must be inside for the star to be simple
    r = rng.uniform(0.3, 1.0, k)
    coords = np.column_stack([r * np.cos(ang), r * np.sin(ang), np.zeros(k)])
    fc = OutputFacet((0, 0), 1, [list(range(k))], np.array([0, 0, 1.0]))
    want = _area(coords, fc.loops, fc.normal)
    for mode in ("tri", "convex"):
        parts = tesselate([fc], coords, mode)
        assert _area(coords, parts, fc.normal) == pytest.approx(want, rel=1e-9)
        for p in parts:
            assert 0.5 * newell_normal(coords[p]) @ fc.normal > 0
