"""Command-line front end and evaluation-strategy drivers."""

from __future__ import annotations

import argparse
import math
import sys
import time
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from . import scenes
from .boolfn import Leaf, Node, body_to_csg_tree, from_csg_tree, identity, parse_expr
from .bruteforce import csg_vertices
from .errors import CSGError, error_total
from .kdtree import ExplorationConfig
from .mesh_core import JitterConfig, Mesh, RawMesh, apply_jitter, closed_edges, revert_jitter, topology_pass, weld
from .mesh_io import StatsRecord, read_mesh, write_mesh, write_stats
from .parallel_runtime import TaskBudget, explore_parallel
from .reconstruct import build_mesh

JITTER_MODES = {
    "none": (0.0, 0.0),
    "translate": (0.0, 1e-6),
    "rotate": (math.pi, 0.0),
    "both": (math.pi, 1e-6),
}


@dataclass
class PipelineOptions:
    tesselate: str = "tri"
    jitter: str = "both"
    seed: int = 0
    brute: bool = False
    threads: int = 1
    fmax: int = 20
    seq_threshold: float = 80
    max_depth: int = 64
    translate: float = 1e-6  # jitter translation, fraction of the scene diagonal
    revert: bool = True
    brute_limit: int = 2000  # facet count above which --brute is refused; 0 disables


def pipeline(raws, f, opts=None):
    """Topology, jitter, vertices, facets, revert. Returns (FinalMesh, StatsRecord, tally)."""
    opts = opts or PipelineOptions()
    tally = Counter()
    t0 = time.perf_counter()
    meshes = [r if hasattr(r, "adjacency") else topology_pass(r) for r in raws]
    t_topo = time.perf_counter() - t0
    rotate, translate = JITTER_MODES[opts.jitter]
    translate = opts.translate if translate else 0.0
    work, transform = apply_jitter(meshes, JitterConfig(rotate, translate, opts.seed))
    if opts.brute:
        m = sum(mesh.n_facets for mesh in meshes)
        if opts.brute_limit and m > opts.brute_limit:
            raise ValueError(f"exhaustive search over {m} facets exceeds the limit of {opts.brute_limit}")
        t1 = time.perf_counter()
        verts = csg_vertices(work, f, tally)
        stats = StatsRecord(m=sum(m.n_facets for m in work), h=sum(1 for v in verts if v.order >= 2), t_vertices_s=time.perf_counter() - t1)
    else:
        config = ExplorationConfig(fmax=opts.fmax, seq_threshold=max(opts.fmax, opts.seq_threshold), max_depth=opts.max_depth, seed=opts.seed)
        budget = TaskBudget(workers=opts.threads, seq_threshold=config.seq_threshold)
        verts, stats, _ = explore_parallel(work, f, config, budget, tally)
    t2 = time.perf_counter()
    result = build_mesh(verts, work, opts.tesselate, tally)
    if opts.jitter != "none" and opts.revert:
        result = revert_jitter(result, transform, meshes)
    tally = result.errors
    if not closed_edges(result.facets):
        tally["OpenOutput"] += 1
    stats = replace(stats, t_topology_s=t_topo, t_facets_s=time.perf_counter() - t2, errors=error_total(tally))
    return result, stats, tally


def result_to_raw(result):
    return RawMesh(np.asarray(result.vertices, dtype=np.float64).reshape(-1, 3), [tuple(l) for l in result.facets])


# grouped evaluation of binary CSG trees

_EMPTY = "empty"


def _simplify(op, a, b):
    """Fold an empty operand; returns None when nothing folds."""
    if a == _EMPTY and b == _EMPTY:
        return _EMPTY
    if op in ("union", "xor"):
        return b if a == _EMPTY else (a if b == _EMPTY else None)
    if op == "inter":
        return _EMPTY if _EMPTY in (a, b) else None
    if op == "diff":
        return _EMPTY if a == _EMPTY else (a if b == _EMPTY else None)
    raise ValueError(op)


def run_grouped(tree, raws, group, opts=None):
    """Evaluate a binary CSG tree, flushing a single N-ary call whenever a
    pending subtree holds ``group`` or more meshes. ``group`` = 2 is plain
    binary evaluation and ``math.inf`` a single call.

    Returns (raw mesh or None for an empty result, number of pipeline calls,
    merged error tally). Operands sharing an input have coplanar facets; the
    jitter turns those into slivers which the revert flattens, so every
    result is welded before it is fed back.
    """
    if group < 2:
        raise ValueError("grouping factor must be >= 2")
    opts = opts or PipelineOptions()
    calls = [0]
    tally = Counter()

    def evaluate(sub, meshes, final):
        calls[0] += 1
        f = from_csg_tree(sub, arity=len(meshes)) if isinstance(sub, Node) else identity(0, 1)
        step = replace(opts, seed=opts.seed + calls[0], revert=True)
        if not final:
            step = replace(step, tesselate="convex")
        meshes = [m if isinstance(m, Mesh) else topology_pass(m) for m in meshes]
        res, _, t = pipeline(meshes, f, step)
        tally.update(t)
        normals = [s * meshes[m].normals[fc] for m, fc, s in res.hosts]
        raw, normals = weld(result_to_raw(res), normals)
        if not raw.facets:
            return _EMPTY
        # planes come from the hosts: slivers give poor loop normals
        return raw if final else topology_pass(raw, normals=normals)

    def walk(node, root):
        """(subtree over local indices, local meshes), or _EMPTY."""
        if isinstance(node, Leaf):
            return Leaf(0), [raws[node.index]]
        a = walk(node.left, False)
        b = walk(node.right, False)
        folded = _simplify(node.op, a, b)
        if folded is not None:
            return folded
        (ta, ma), (tb, mb) = a, b
        sub = Node(node.op, ta, _shift(tb, len(ma)))
        meshes = ma + mb
        if root or len(meshes) >= group:
            mesh = evaluate(sub, meshes, root)
            return _EMPTY if mesh == _EMPTY else (None if root else Leaf(0), [mesh])
        return sub, meshes

    top = walk(tree, True)
    if top == _EMPTY:
        return None, calls[0], tally
    sub, meshes = top
    if sub is None:
        return meshes[0], calls[0], tally
    # a lone input, or the root folded down to an operand not yet evaluated
    out = evaluate(sub, meshes, True)
    return (None if out == _EMPTY else out), calls[0], tally


def _shift(tree, k):
    if isinstance(tree, Leaf):
        return Leaf(tree.index + k)
    return Node(tree.op, _shift(tree.left, k), _shift(tree.right, k))


# scaling experiments


@dataclass
class BenchConfig:
    kind: str = "t1"  # t1, t2 or subdivided
    sizes: tuple = ((10, 0), (20, 0), (40, 0))  # (meshes, subdivisions)
    seed: int = 0
    expr: str | None = None
    nu: int = 24
    nv: int = 12


def bench_scene(config, n, sub):
    if config.kind == "t2":
        raws = scenes.t2_scene(n, nu=config.nu, nv=config.nv, seed=config.seed)
        expr = config.expr or f"min2(P0..P{n - 1})"
    elif config.kind in ("t1", "subdivided"):
        raws = scenes.t1_scene(n, nu=config.nu, nv=config.nv, seed=config.seed, subdivisions=sub)
        expr = config.expr or scenes.t1_expr(n)
    else:
        raise ValueError(f"unknown generator {config.kind!r}")
    return raws, expr


def bench_scaling(config=None, threads=1):
    """Rows (m, s, h, seconds of vertex search) for each configured size."""
    config = config or BenchConfig()
    if not config.sizes:
        raise ValueError("empty scene list")
    rows = []
    for n, sub in config.sizes:
        if n < 1:
            raise ValueError("empty scene")
        raws, expr = bench_scene(config, n, sub)
        meshes = [topology_pass(r) for r in raws]
        meshes, _ = apply_jitter(meshes, JitterConfig(seed=config.seed))
        f = parse_expr(expr, arity=len(meshes))
        _, stats, _ = explore_parallel(meshes, f, ExplorationConfig(), TaskBudget(workers=threads))
        rows.append((stats.m, stats.s, stats.h, stats.t_vertices_s))
    return rows


# command line


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser():
    p = _Parser(prog="ncsg", description="N-ary boolean operations on closed polyhedral meshes.")
    p.add_argument("--in", dest="inputs", action="append", required=True, metavar="FILE", help="input mesh (OFF or OBJ); repeat, order gives P0, P1, ...")
    p.add_argument("--expr", required=True, help='boolean expression, e.g. "P0 & P1", "min2(P0..P3)"')
    p.add_argument("--out", help="output mesh (OFF or OBJ)")
    p.add_argument("--stats", help="statistics file")
    p.add_argument("--tesselate", choices=("none", "convex", "tri"), default="tri")
    p.add_argument("--jitter", choices=tuple(JITTER_MODES), default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--brute", action="store_true", help="exhaustive vertex search instead of the kd exploration")
    p.add_argument("--brute-limit", type=int, default=2000, help="refuse --brute above this many facets, 0 = no limit")
    p.add_argument("--threads", type=int, default=1, help="worker processes, 0 = one per CPU")
    p.add_argument("--fmax", type=int, default=20)
    p.add_argument("--seq-threshold", type=float, default=80)
    p.add_argument("--max-depth", type=int, default=64)
    p.add_argument("--grouping", type=float, default=None, help="grouping factor G >= 2 (inf = one call)")
    return p


def run(argv=None):
    """Exit 0 on a clean result, 2 when errors were flagged, 1 on bad input."""
    args = build_parser().parse_args(argv)
    opts = PipelineOptions(
        tesselate=args.tesselate, jitter=args.jitter, seed=args.seed, brute=args.brute, brute_limit=args.brute_limit,
        threads=args.threads, fmax=args.fmax, seq_threshold=args.seq_threshold, max_depth=args.max_depth,
    )
    try:
        raws = [read_mesh(path) for path in args.inputs]
        f = parse_expr(args.expr, arity=len(raws))
        if args.grouping is not None:
            if not args.grouping >= 2:
                raise ValueError("grouping factor must be >= 2")
            mesh, _, tally = run_grouped(body_to_csg_tree(f.body), raws, args.grouping, opts)
            out = mesh if mesh is not None else RawMesh(np.zeros((0, 3)), [])
            stats = StatsRecord(m=sum(len(r.facets) for r in raws), errors=error_total(tally))
        else:
            result, stats, tally = pipeline(raws, f, opts)
            out = result_to_raw(result)
    except (CSGError, ValueError, OSError, SyntaxError) as exc:
        print(f"ncsg: error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        write_mesh(args.out, out)
    if args.stats:
        with open(args.stats, "wb") as fh:
            fh.write(write_stats(stats))
    n_err = error_total(tally)
    if n_err:
        print(f"ncsg: {n_err} error(s) flagged: {dict(tally)}", file=sys.stderr)
        return 2
    return 0


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
