"""Hand-built scenes shared by the reconstruction and acceptance tests."""

import numpy as np

from ncsg import scenes
from ncsg.mesh_core import RawMesh


def xor_strip_scene():
    """A slab top face crossed by a thin strip solid and a box.

    Under (P0 ^ P1) & P2 the top face z = 0 of P0 contributes two positive
    quads on either side of the strip and one negative quad inside it.
    Returns (raws, named top-face vertices, expected loops as
    (sign, names)).
    """
    p0 = scenes.box((0, 0, -1), (4, 2, 0))
    p1 = scenes.box((1.8, -2, -2), (2.2, 3, 2))
    p2 = scenes.box((1, -1, -0.5), (3, 1, 0.5))
    names = {
        "v0": (1, 0, 0), "v1": (1, 1, 0), "v2": (1.8, 1, 0), "v3": (1.8, 0, 0),
        "v4": (2.2, 0, 0), "v5": (2.2, 1, 0), "v6": (3, 1, 0), "v7": (3, 0, 0),
    }
    loops = {
        (1, ("v0", "v3", "v2", "v1")),
        (1, ("v4", "v7", "v6", "v5")),
        (-1, ("v4", "v3", "v2", "v5")),
    }
    return [p0, p1, p2], names, loops


def pentagonal_pyramid():
    ang = np.arange(5) * 2 * np.pi / 5
    base = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(5)])
    verts = np.vstack([base, [[0, 0, 1.0]]])
    facets = [(i, (i + 1) % 5, 5) for i in range(5)] + [(4, 3, 2, 1, 0)]
    return RawMesh(verts, facets)


def named_host_loops(result, host, names, tol=1e-9):
    """Loops of ``result`` on input facet ``host`` = (mesh, facet), as
    (sign, vertex names) rotated to start at the smallest name."""
    pts = {k: np.asarray(v, dtype=float) for k, v in names.items()}
    out = set()
    for loop, (m, fc, sign) in zip(result.facets, result.hosts):
        if (m, fc) != tuple(host):
            continue
        named = []
        for v in loop:
            x = result.vertices[v]
            hit = [k for k, p in pts.items() if np.linalg.norm(x - p) < tol]
            named.append(hit[0] if hit else "?")
        k = named.index(min(named))
        out.add((sign, tuple(named[k:] + named[:k])))
    return out


def rotate_to_min(loops):
    out = set()
    for sign, names in loops:
        k = names.index(min(names))
        out.add((sign, tuple(names[k:] + names[:k])))
    return out
