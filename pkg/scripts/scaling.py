"""Vertex-search time against (m + s) log2 h on subdivided torus scenes.

Prints one row per scene and the coefficient of determination of a linear fit.
"""

import argparse
import math

import numpy as np

from ncsg.cli import BenchConfig, bench_scaling

CONFIGS = ((20, 10, 0), (28, 14, 0), (20, 10, 1), (28, 14, 1), (20, 10, 2))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--meshes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()
    rows = []
    print(f"{'m':>8} {'s':>8} {'h':>6} {'(m+s)log2h':>12} {'seconds':>8}")
    for nu, nv, sub in CONFIGS:
        config = BenchConfig(kind="subdivided", sizes=((args.meshes, sub),), nu=nu, nv=nv, seed=args.seed)
        (m, s, h, t), = bench_scaling(config, threads=args.threads)
        x = (m + s) * math.log2(h)
        rows.append((x, t))
        print(f"{m:8d} {s:8d} {h:6d} {x:12.0f} {t:8.2f}")
    x, y = np.array(rows).T
    print(f"R^2 = {np.corrcoef(x, y)[0, 1] ** 2:.3f}")


if __name__ == "__main__":
    main()
