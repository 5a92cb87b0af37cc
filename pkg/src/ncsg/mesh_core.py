"""Mesh data model, topology pass, validation, volume and jitter transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .errors import DegenerateFacet, NonManifold, OpenSurface, SingularIntersection

PLANARITY_TOL = 1e-9
NORMAL_TOL = 1e-12


@dataclass
class RawMesh:
    """Indexed vertices and facet loops exactly as read from a file."""

    vertices: np.ndarray
    facets: list

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.facets = [tuple(int(i) for i in f) for f in self.facets]


def newell_normal(pts):
    """Area-weighted normal of a planar loop (length = 2 * area)."""
    nxt = np.roll(pts, -1, axis=0)
    return np.array(
        [
            np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
            np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
            np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
        ]
    )


def loop_is_convex(pts, normal, tol=PLANARITY_TOL):
    prv = np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0)
    turn = np.cross(pts - prv, nxt - pts) @ normal
    diam = float(np.max(np.linalg.norm(pts - pts[0], axis=1)))
    return bool(np.all(turn >= -tol * diam * diam))


class Mesh:
    """Closed oriented polyhedral surface with convex facets.

    Immutable after construction. ``adjacency[(a, b)]`` is the facet whose
    loop contains the directed edge a->b (the facet on its left).
    """

    def __init__(self, vertices, facets, normals, offsets, adjacency):
        self.vertices = vertices
        self.facets = facets
        self.normals = normals
        self.offsets = offsets
        self.adjacency = adjacency
        for arr in (self.vertices, self.normals, self.offsets):
            arr.setflags(write=False)

    @property
    def n_facets(self):
        return len(self.facets)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def facet_points(self, f):
        return self.vertices[list(self.facets[f])]

    @cached_property
    def loop_csr(self):
        """(starts, flat vertex ids) of the facet loops."""
        sizes = np.fromiter((len(f) for f in self.facets), dtype=np.int64, count=len(self.facets))
        starts = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=starts[1:])
        flat = np.fromiter((i for f in self.facets for i in f), dtype=np.int64, count=int(starts[-1]))
        return starts, flat

    @cached_property
    def facet_bounds(self):
        starts, flat = self.loop_csr
        pts = self.vertices[flat]
        lo = np.minimum.reduceat(pts, starts[:-1], axis=0)
        hi = np.maximum.reduceat(pts, starts[:-1], axis=0)
        return lo, hi

    @cached_property
    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def fan_triangles(self):
        """(T,3,3) fan triangles and their owning facet ids, for ray casting."""
        tri, owner = [], []
        for fi, loop in enumerate(self.facets):
            for k in range(1, len(loop) - 1):
                tri.append((loop[0], loop[k], loop[k + 1]))
                owner.append(fi)
        tri = np.asarray(tri, dtype=np.int64).reshape(-1, 3)
        return self.vertices[tri], np.asarray(owner, dtype=np.int64)

    @cached_property
    def shared_edges(self):
        """(a, b) -> (u, w): the edge between facets a and b, directed with a on its left."""
        out = {}
        for (u, w), a in self.adjacency.items():
            b = self.adjacency[(w, u)]
            out[(a, b)] = (u, w)
        return out

    @cached_property
    def vertex_facets(self):
        """Vertex id -> list of incident facet ids."""
        inc = [[] for _ in range(len(self.vertices))]
        for fi, loop in enumerate(self.facets):
            for v in loop:
                inc[v].append(fi)
        return inc

    def edge_direction(self, a, b):
        """Unit direction of the edge shared by facets a and b, with a on its left."""
        u, w = self.shared_edges[(a, b)]
        d = self.vertices[w] - self.vertices[u]
        return d / np.linalg.norm(d)

    def transformed(self, rotation, center, translation):
        verts = (self.vertices - center) @ rotation.T + center + translation
        normals = self.normals @ rotation.T
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        offsets = _plane_offsets(verts, self.facets, normals)
        return Mesh(verts, self.facets, normals, offsets, self.adjacency)

    def to_raw(self):
        return RawMesh(self.vertices.copy(), list(self.facets))


def _plane_offsets(verts, facets, normals):
    out = np.empty(len(facets))
    for fi, loop in enumerate(facets):
        out[fi] = float(np.mean(verts[list(loop)] @ normals[fi]))
    return out


def topology_pass(raw, require_convex=True, normals=None):
    """Build adjacency and facet planes; reject open, non-manifold or degenerate input.

    ``normals`` optionally gives the facet planes' unit normals; otherwise
    they are estimated from the loops, which is ill-conditioned for slivers.
    """
    verts = np.ascontiguousarray(np.asarray(raw.vertices, dtype=np.float64).reshape(-1, 3))
    facets = tuple(tuple(int(i) for i in f) for f in raw.facets)
    nv = len(verts)
    adjacency = {}
    for fi, loop in enumerate(facets):
        if len(loop) < 3 or len(set(loop)) != len(loop):
            raise DegenerateFacet(f"facet {fi} has a repeated or missing vertex")
        for v in loop:
            if v < 0 or v >= nv:
                raise DegenerateFacet(f"facet {fi} references vertex {v} of {nv}")
        for k, u in enumerate(loop):
            edge = (u, loop[(k + 1) % len(loop)])
            if edge in adjacency:
                raise NonManifold(f"directed edge {edge} used by facets {adjacency[edge]} and {fi}")
            adjacency[edge] = fi
    for (u, w) in adjacency:
        if (w, u) not in adjacency:
            raise OpenSurface(f"edge {(u, w)} has no opposite")

    given = normals
    normals = np.empty((len(facets), 3))
    for fi, loop in enumerate(facets):
        pts = verts[list(loop)]
        n = newell_normal(pts)
        length = float(np.linalg.norm(n))
        diam = float(np.max(np.linalg.norm(pts - pts[0], axis=1)))
        if length <= 1e-14 * diam * diam or diam == 0.0:
            raise DegenerateFacet(f"facet {fi} has zero area")
        n = n / length if given is None else np.asarray(given[fi], dtype=np.float64)
        dist = (pts - pts.mean(axis=0)) @ n
        floor = 64 * np.finfo(np.float64).eps * max(1.0, float(np.max(np.abs(pts))))
        if np.max(np.abs(dist)) > PLANARITY_TOL * diam + floor:
            raise DegenerateFacet(f"facet {fi} is not planar")
        if require_convex and not loop_is_convex(pts, n):
            raise DegenerateFacet(f"facet {fi} is not convex")
        normals[fi] = n
    offsets = _plane_offsets(verts, facets, normals)
    return Mesh(verts, facets, normals, offsets, adjacency)


@dataclass
class ValidationReport:
    non_manifold: list = field(default_factory=list)
    open_edges: list = field(default_factory=list)
    orientation: list = field(default_factory=list)
    duplicate_vertices: list = field(default_factory=list)
    non_convex: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)

    def __bool__(self):
        return any(
            (self.non_manifold, self.open_edges, self.orientation, self.duplicate_vertices, self.non_convex, self.degenerate)
        )

    def entries(self):
        return [(k, v) for k, vals in self.__dict__.items() for v in vals]


def validate(mesh):
    """Report every violated Mesh invariant. Self-intersections are not detected."""
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    report = ValidationReport()
    directed = {}
    undirected = {}
    for fi, loop in enumerate(mesh.facets):
        for k, u in enumerate(loop):
            w = loop[(k + 1) % len(loop)]
            if (u, w) in directed:
                report.orientation.append(((u, w), directed[(u, w)], fi))
            directed.setdefault((u, w), fi)
            key = (min(u, w), max(u, w))
            undirected[key] = undirected.get(key, 0) + 1
    for key, count in undirected.items():
        if count > 2:
            report.non_manifold.append(key)
        elif count == 1:
            report.open_edges.append(key)
    seen = {}
    for vi, p in enumerate(verts):
        k = p.tobytes()
        if k in seen:
            report.duplicate_vertices.append((seen[k], vi))
        else:
            seen[k] = vi
    for fi, loop in enumerate(mesh.facets):
        pts = verts[list(loop)]
        n = newell_normal(pts)
        length = float(np.linalg.norm(n))
        if length == 0.0:
            report.degenerate.append(fi)
            continue
        if not loop_is_convex(pts, n / length):
            report.non_convex.append(fi)
    return report


def closed_edges(facets):
    """True iff every directed edge occurs as often as its reverse.

    Results such as a symmetric difference touch themselves along curves, so
    an edge may carry two pairs of sheets; balance is what closedness means
    for them.
    """
    count = {}
    for loop in facets:
        for k, u in enumerate(loop):
            e = (u, loop[(k + 1) % len(loop)])
            count[e] = count.get(e, 0) + 1
    return all(count.get((w, u), 0) == c for (u, w), c in count.items())


def weld(raw, normals, tol=1e-9):
    """Merge vertices closer than ``tol`` times the bounding diagonal and drop
    what collapses: repeated consecutive vertices, loops left without area,
    and pairs of coincident facets facing opposite ways.

    ``normals`` holds one unit normal per facet; returns (RawMesh, normals)
    for the facets kept.
    """
    verts = np.asarray(raw.vertices, dtype=np.float64).reshape(-1, 3)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    if len(verts) == 0:
        return RawMesh(verts, []), normals[:0]
    diag = float(np.linalg.norm(np.ptp(verts, axis=0))) or 1.0
    pairs = cKDTree(verts).query_pairs(tol * diag, output_type="ndarray")
    n = len(verts)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, label = connected_components(graph, directed=False)
    loops, kept = [], []
    for fi, loop in enumerate(raw.facets):
        ids = [int(label[v]) for v in loop]
        ids = [v for k, v in enumerate(ids) if v != ids[k - 1]]
        if len(ids) < 3 or len(set(ids)) < 3:
            continue
        pts = verts[[loop[[int(label[v]) for v in loop].index(i)] for i in ids]]
        area = float(np.linalg.norm(newell_normal(pts)))
        if area <= 1e-12 * diag * diag:
            continue
        loops.append(ids)
        kept.append(fi)
    # coincident opposite facets enclose nothing
    seen = {}
    for k, ids in enumerate(loops):
        seen.setdefault(_cyclic_key(ids), []).append(k)
    drop = set()
    for key, members in seen.items():
        twins = seen.get(_cyclic_key(list(reversed(key))), [])
        for a, b in zip(members, twins):
            if a not in drop and b not in drop and a != b:
                drop.update((a, b))
    loops = [l for k, l in enumerate(loops) if k not in drop]
    kept = [fi for k, fi in enumerate(kept) if k not in drop]
    used = sorted({v for l in loops for v in l})
    remap = {old: new for new, old in enumerate(used)}
    first = {}
    for v in range(n):
        first.setdefault(int(label[v]), v)
    coords = verts[[first[u] for u in used]] if used else verts[:0]
    loops = _split_t_junctions([[remap[v] for v in l] for l in loops], coords, tol * diag)
    return RawMesh(coords, [tuple(l) for l in loops]), normals[kept]


def _split_t_junctions(loops, coords, tol):
    """Insert vertices lying inside an edge that has no matching opposite edge."""
    for _ in range(8):
        count = {}
        for l in loops:
            for k, u in enumerate(l):
                e = (u, l[(k + 1) % len(l)])
                count[e] = count.get(e, 0) + 1
        bad = {e for e, c in count.items() if count.get((e[1], e[0]), 0) != c}
        if not bad:
            break
        changed = False
        for l in loops:
            out = []
            for k, u in enumerate(l):
                w = l[(k + 1) % len(l)]
                out.append(u)
                if (u, w) not in bad:
                    continue
                a, d = coords[u], coords[w] - coords[u]
                length2 = float(d @ d)
                t = (coords - a) @ d / length2
                off = np.linalg.norm(coords - a - t[:, None] * d, axis=1)
                lim = tol / math.sqrt(length2)
                on = np.nonzero((off <= tol) & (t > lim) & (t < 1 - lim))[0]
                on = [int(x) for x in on[np.argsort(t[on])] if x not in (u, w)]
                out.extend(on)
                changed = changed or bool(on)
            l[:] = out
        if not changed:
            break
    return loops


def _cyclic_key(ids):
    k = ids.index(min(ids))
    return tuple(ids[k:] + ids[:k])


def signed_volume(mesh, check_closed=True):
    """Divergence-theorem volume using a fan from each loop's first vertex."""
    facets = mesh.facets
    if check_closed and not isinstance(mesh, Mesh) and not closed_edges(facets):
        raise OpenSurface("volume of an open surface")
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    tri = [(loop[0], loop[k], loop[k + 1]) for loop in facets for k in range(1, len(loop) - 1)]
    if not tri:
        return 0.0
    t = verts[np.asarray(tri)]
    return float(np.sum(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])))) / 6.0


@dataclass
class JitterConfig:
    """Rotation is a random angle in [0, rotate] radians about a random axis;
    translation is a per-mesh random vector of length in [translate/2, translate]
    times the scene bounding-box diagonal."""

    rotate: float = math.pi
    translate: float = 1e-6
    seed: int = 0


@dataclass
class SceneTransform:
    rotation: np.ndarray
    center: np.ndarray
    translations: list
    seed: int

    def apply(self, i, pts):
        return (np.asarray(pts) - self.center) @ self.rotation.T + self.center + self.translations[i]

    def invert(self, i, pts):
        return (np.asarray(pts) - self.center - self.translations[i]) @ self.rotation + self.center


def scene_bounds(meshes):
    lo = np.min([m.vertices.min(axis=0) for m in meshes], axis=0)
    hi = np.max([m.vertices.max(axis=0) for m in meshes], axis=0)
    return lo, hi


def apply_jitter(meshes, config=None):
    """Shared random rotation first, then an independent translation per mesh."""
    config = config or JitterConfig()
    rng = np.random.default_rng(config.seed)
    lo, hi = scene_bounds(meshes)
    center = 0.5 * (lo + hi)
    diag = float(np.linalg.norm(hi - lo))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = config.rotate * rng.uniform(0.1, 1.0)
    if config.rotate > 0:
        rot = Rotation.from_rotvec(axis * angle).as_matrix()
    else:
        rot = np.eye(3)
    translations = []
    for _ in meshes:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        translations.append(d * config.translate * diag * rng.uniform(0.5, 1.0))
    transform = SceneTransform(rot, center, translations, config.seed)
    if config.rotate == 0 and config.translate == 0:
        return list(meshes), transform
    out = [m.transformed(rot, center, t) for m, t in zip(meshes, translations)]
    return out, transform


def point_from_provenance(meshes, key):
    """Recompute a vertex from the primitives named by its provenance key.

    Keys: (1, i, v) input vertex; (2, i, fa, fb, j, fc) edge fa|fb of mesh i
    crossing facet fc of mesh j; (3, i, fa, j, fb, k, fc) three facets.
    """
    order = key[0]
    if order == 1:
        return meshes[key[1]].vertices[key[2]].copy()
    if order == 2:
        _, i, fa, fb, j, fc = key
        u, w = meshes[i].shared_edges[(fa, fb)]
        a = meshes[i].vertices[min(u, w)]
        b = meshes[i].vertices[max(u, w)]
        n = meshes[j].normals[fc]
        den = float(n @ (b - a))
        if abs(den) < 1e-14 * float(np.linalg.norm(b - a)):
            raise SingularIntersection(f"edge parallel to plane for {key}")
        t = (meshes[j].offsets[fc] - float(n @ a)) / den
        return a + t * (b - a)
    _, i, fa, j, fb, k, fc = key
    mat = np.array([meshes[i].normals[fa], meshes[j].normals[fb], meshes[k].normals[fc]])
    rhs = np.array([meshes[i].offsets[fa], meshes[j].offsets[fb], meshes[k].offsets[fc]])
    if abs(np.linalg.det(mat)) < 1e-12:
        raise SingularIntersection(f"three planes without a unique point for {key}")
    return np.linalg.solve(mat, rhs)


def revert_jitter(result, transform, originals):
    """Recompute every output vertex from un-jittered primitives.

    Vertices whose reverted system is singular keep their jittered
    coordinates mapped back through the inverse rigid transform of the
    first mesh named in their key, and are counted as errors.
    """
    verts = np.array(result.vertices, dtype=np.float64, copy=True)
    errors = result.errors.copy()
    for idx, key in enumerate(result.provenance):
        try:
            verts[idx] = point_from_provenance(originals, key)
        except SingularIntersection:
            errors["SingularIntersection"] += 1
            verts[idx] = transform.invert(key[1], verts[idx])
    return result.with_vertices(verts, errors)
