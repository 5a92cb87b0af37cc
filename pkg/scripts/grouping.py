"""Time the same difference-of-unions for several grouping factors.

G = 2 is plain binary evaluation, inf a single N-ary call.
"""

import argparse
import math
import time

from ncsg import scenes
from ncsg.boolfn import body_to_csg_tree, parse_expr
from ncsg.cli import run_grouped
from ncsg.mesh_core import signed_volume


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--meshes", type=int, default=50)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--groups", default="2,4,8,16,inf")
    args = p.parse_args()
    raws = scenes.t1_scene(args.meshes, seed=args.seed)
    tree = body_to_csg_tree(parse_expr(scenes.t1_expr(args.meshes)).body)
    print(f"{'G':>5} {'calls':>6} {'seconds':>8} {'volume':>12} errors")
    for g in args.groups.split(","):
        group = math.inf if g == "inf" else int(g)
        t0 = time.perf_counter()
        mesh, calls, tally = run_grouped(tree, raws, group)
        elapsed = time.perf_counter() - t0
        vol = signed_volume(mesh) if mesh is not None else 0.0
        print(f"{g:>5} {calls:6d} {elapsed:8.2f} {vol:12.6f} {sum(tally.values())}")


if __name__ == "__main__":
    main()
