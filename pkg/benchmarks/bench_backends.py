"""Compare the numba and numpy kernel backends on search-shaped workloads.

Run `python benchmarks/bench_backends.py` to benchmark both backends (each
in its own subprocess, since the backend is fixed at import time), or pass
`--single` to measure only the backend selected by TAILSYNTH_BACKEND.
"""

import argparse
import json
import os
import subprocess
import sys
import time


def run_workload(n_queries: int, top_k: int, repeats: int) -> dict:
    from tailsynth import _kernels
    from tailsynth.fixtures import fixture_config, make_products, make_queries
    from tailsynth.retrieval import build_index, embed_text, search_approx, search_exact

    cfg = fixture_config()
    products, _ = make_products(cfg.business_threshold)
    queries = make_queries()[:n_queries]
    _kernels.warmup()

    start = time.perf_counter()
    index = build_index(products, dim=cfg.dim, partitions=cfg.partitions)
    build_s = time.perf_counter() - start

    qvecs = [embed_text(q.text, cfg.dim) for q in queries]

    def best_of(fn) -> float:
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            for v in qvecs:
                fn(v)
            times.append(time.perf_counter() - start)
        return min(times)

    t_exact = best_of(lambda v: search_exact(index, v, top_k))
    t_approx = best_of(lambda v: search_approx(index, v, top_k, cfg.probes))
    return {
        "backend": _kernels.BACKEND,
        "build_s": build_s,
        "exact_ms_per_query": 1000 * t_exact / len(qvecs),
        "approx_ms_per_query": 1000 * t_approx / len(qvecs),
        "speedup": t_exact / t_approx,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--single", action="store_true",
                        help="measure only the current TAILSYNTH_BACKEND")
    parser.add_argument("--queries", type=int, default=100)
    parser.add_argument("--top-k", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)

    if args.single:
        print(json.dumps(run_workload(args.queries, args.top_k, args.repeats)))
        return 0

    rows = []
    for backend in ("numpy", "numba"):
        env = dict(os.environ, TAILSYNTH_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, __file__, "--single",
             "--queries", str(args.queries), "--top-k", str(args.top_k),
             "--repeats", str(args.repeats)],
            env=env, capture_output=True, text=True,
        )
        if proc.returncode != 0:
            print(f"{backend} backend failed:\n{proc.stderr}", file=sys.stderr)
            continue
        rows.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    print(f"{'backend':<8} {'build(s)':>9} {'exact ms/q':>11} {'approx ms/q':>12} {'speedup':>8}")
    for row in rows:
        print(
            f"{row['backend']:<8} {row['build_s']:>9.2f} "
            f"{row['exact_ms_per_query']:>11.3f} {row['approx_ms_per_query']:>12.3f} "
            f"{row['speedup']:>7.2f}x"
        )
    if len(rows) == 2:
        ratio = rows[0]["exact_ms_per_query"] / rows[1]["exact_ms_per_query"]
        print(f"\nnumba exact scan is {ratio:.2f}x the speed of numpy's on this machine")
    return 0


if __name__ == "__main__":
    sys.exit(main())
