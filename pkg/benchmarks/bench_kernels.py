"""Benchmark the jitted graph kernels against their numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py [--nodes 20000] [--degree 30]

Times induced_dense, bipartite_dense, and partial_shuffle on a random
graph at several subset sizes, once per backend. The numba backend is
toggled per process, so the numpy column comes from a subprocess with
PRIVEBC_NO_NUMBA=1.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _build_graph(n: int, avg_degree: int, rng: np.random.Generator):
    m = n * avg_degree // 2
    u = rng.integers(0, n, size=m)
    v = rng.integers(0, n, size=m)
    keep = u != v
    pairs = {(min(a, b), max(a, b)) for a, b in zip(u[keep].tolist(), v[keep].tolist())}
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for a, b in pairs:
        nbrs[a].append(b)
        nbrs[b].append(a)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i, lst in enumerate(nbrs):
        indptr[i + 1] = indptr[i] + len(lst)
    indices = np.empty(int(indptr[-1]), dtype=np.int64)
    for i, lst in enumerate(nbrs):
        indices[indptr[i]:indptr[i + 1]] = sorted(lst)
    return indptr, indices


def _time(fn, *args, repeat: int = 5) -> float:
    fn(*args)  # warm (JIT compile on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def run(nodes: int, degree: int) -> dict[str, object]:
    from privebc import _kernels

    rng = np.random.default_rng(7)
    indptr, indices = _build_graph(nodes, degree, rng)
    results: dict[str, object] = {"backend": _kernels.active_backend()}
    for size in (100, 500, 2000):
        subset = np.sort(rng.choice(nodes, size=size, replace=False)).astype(np.int64)
        rows = subset[: size // 2]
        cols = subset[size // 2:]
        scratch = subset.copy()
        offsets = rng.integers(0, np.arange(size, 0, -1, dtype=np.int64))
        results[f"induced_dense[{size}]"] = _time(_kernels.induced_dense, indptr, indices, subset)
        results[f"bipartite_dense[{size}]"] = _time(
            _kernels.bipartite_dense, indptr, indices, rows, cols)
        results[f"partial_shuffle[{size}]"] = _time(
            lambda: _kernels.partial_shuffle(scratch.copy(), offsets))
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=20000)
    parser.add_argument("--degree", type=int, default=30)
    parser.add_argument("--json", action="store_true", help="emit one backend's raw dict")
    args = parser.parse_args()

    if args.json:
        print(json.dumps(run(args.nodes, args.degree)))
        return 0

    here = run(args.nodes, args.degree)
    env = dict(os.environ, PRIVEBC_NO_NUMBA="1")
    proc = subprocess.run(
        [sys.executable, __file__, "--nodes", str(args.nodes),
         "--degree", str(args.degree), "--json"],
        env=env, capture_output=True, text=True, check=True)
    other = json.loads(proc.stdout)

    a_name, b_name = here["backend"], other["backend"]
    print(f"{'kernel':<26}{a_name + ' (ms)':>16}{b_name + ' (ms)':>16}{'ratio':>10}")
    for key in here:
        if key == "backend":
            continue
        a, b = here[key], other[key]
        ratio = b / a if a > 0 else float("inf")
        print(f"{key:<26}{a:>16.3f}{b:>16.3f}{ratio:>10.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
