"""Time BiCM and UCM solves over a grid of random graph sizes and densities."""
import argparse
import json
import time

import numpy as np

from semnet.graphs import UndirectedGraph
from semnet.maxent import solve_bicm, solve_ucm
from semnet.synthetic import heterogeneous_bipartite, random_bipartite


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="100x300,500x2000", help="comma list of TOPxBOTTOM")
    ap.add_argument("--densities", default="0.005,0.05,0.2")
    ap.add_argument("--method", choices=["newton", "fixed-point"], default="newton")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rows = []
    for size in args.sizes.split(","):
        nt, nb = map(int, size.lower().split("x"))
        for dens in map(float, args.densities.split(",")):
            for gen in (random_bipartite, heterogeneous_bipartite):
                g = gen(nt, nb, dens, rng_seed=args.seed)
                fit, dt = _timed(solve_bicm, g, method=args.method)
                rows.append({"model": "bicm", "generator": gen.__name__, "size": size,
                             "density": dens, "edges": g.n_edges, "seconds": round(dt, 4),
                             "iterations": fit.iterations, "residual": fit.residual})
            # monopartite graph with the same node count as the top layer
            rng = np.random.default_rng(args.seed)
            iu = np.triu_indices(nt, 1)
            keep = rng.random(len(iu[0])) < dens
            ug = UndirectedGraph(tuple(map(str, range(nt))),
                                 np.column_stack([iu[0][keep], iu[1][keep]]).astype(np.int64))
            fit, dt = _timed(solve_ucm, ug, method=args.method)
            rows.append({"model": "ucm", "generator": "erdos_renyi", "size": str(nt),
                         "density": dens, "edges": ug.n_edges, "seconds": round(dt, 4),
                         "iterations": fit.iterations, "residual": fit.residual})
    for r in rows:
        print(json.dumps(r))


if __name__ == "__main__":
    main()
