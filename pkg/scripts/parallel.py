"""Vertex search on a dense torus scene with 1, 2 and 4 worker processes."""

import argparse
import os
import time

from ncsg import scenes
from ncsg.boolfn import parse_expr
from ncsg.kdtree import ExplorationConfig
from ncsg.mesh_core import JitterConfig, apply_jitter, topology_pass
from ncsg.parallel_runtime import TaskBudget, explore_parallel


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--meshes", type=int, default=50)
    p.add_argument("--nu", type=int, default=64)
    p.add_argument("--nv", type=int, default=32)
    p.add_argument("--workers", default="1,2,4")
    args = p.parse_args()
    raws = scenes.t1_scene(args.meshes, nu=args.nu, nv=args.nv, seed=6)
    meshes, _ = apply_jitter([topology_pass(r) for r in raws], JitterConfig(seed=6))
    f = parse_expr(scenes.t1_expr(args.meshes))
    print(f"{sum(m.n_facets for m in meshes)} facets, {os.cpu_count()} CPUs")
    base, ref = None, None
    for w in map(int, args.workers.split(",")):
        t0 = time.perf_counter()
        verts, stats, _ = explore_parallel(meshes, f, ExplorationConfig(), TaskBudget(workers=w))
        elapsed = time.perf_counter() - t0
        keys = [v.key for v in verts]
        if ref is None:
            ref, base = keys, elapsed
        print(f"workers {w}: {elapsed:.2f} s, speedup x{base / elapsed:.2f}, h = {stats.h}, same set {keys == ref}")


if __name__ == "__main__":
    main()
