#!/usr/bin/env python3
"""Timing harness for the hot kernels: JIT backend vs the numpy fallback.

Default mode times the three dispatched kernels (graph propagation, exact
constrained allocation, mean pairwise cosine) under both backends in one
process by flipping ``divwalk.kernels.USE_NUMBA``. ``--scaling`` instead
sweeps the end-to-end recommender over growing user counts and reports how
close total wall time stays to linear.

Normal usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --scaling
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from divwalk import kernels
from divwalk.corpus import CompiledNTD, NTDDimension, compile_ntd, ntd_from_dict
from divwalk.graph import augment_cold_items, build_graph
from divwalk.sampler import SamplerStatus, build_constraints, bucket_assignments, recommend_drdw, solve_exact
from divwalk.synthetic import generate_synthetic

STANDARD_COUNTS = ((4, 6, 6, 4), (3, 3, 3, 3, 8))
LIST_SIZE = 20

NTD_DOC = {
    "dimensions": [
        {
            "name": "sentiment",
            "attribute": "sentiment_bucket",
            "buckets": [["negative", 0.2], ["somewhat_negative", 0.3],
                        ["somewhat_positive", 0.3], ["positive", 0.2]],
        },
        {
            "name": "party",
            "attribute": "party_bucket",
            "buckets": [["gov", 0.15], ["opp", 0.15], ["gov_and_opp", 0.15],
                        ["independent_foreign", 0.15], ["none", 0.40]],
        },
    ]
}


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _standard_compiled() -> CompiledNTD:
    dims = tuple(
        NTDDimension(
            f"dim{k}",
            "category",
            tuple((f"d{k}b{j}", c / LIST_SIZE) for j, c in enumerate(counts)),
        )
        for k, counts in enumerate(STANDARD_COUNTS)
    )
    return CompiledNTD(LIST_SIZE, dims, STANDARD_COUNTS)


def _propagate_inputs(rng):
    n_src, n_dst = 4000, 12000
    deg = rng.poisson(25, n_src)
    ptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
    adj = rng.integers(0, n_dst, int(ptr[-1]), dtype=np.int64)
    p = rng.dirichlet(np.ones(n_src))
    return ptr, adj, p, n_dst


def _solver_inputs(rng, n_instances=30, n_cands=600):
    compiled = _standard_compiled()
    systems = []
    for _ in range(n_instances):
        ids = [f"c{p:04d}" for p in range(n_cands)]
        attrs = {i: (int(rng.integers(4)), int(rng.integers(5))) for i in ids}
        systems.append(build_constraints(dict(zip(ids, rng.random(n_cands))), compiled, attrs))
    return systems


def run_kernels(args) -> None:
    rng = np.random.default_rng(args.seed)
    ptr, adj, p, n_dst = _propagate_inputs(rng)
    systems = _solver_inputs(rng)
    X = rng.normal(size=(800, 32))

    cases = {
        "propagate (100k edges)": lambda: kernels.propagate(ptr, adj, p, n_dst),
        "solve_exact (600 cands)": lambda: [solve_exact(cs) for cs in systems],
        "pairwise cosine (800x32)": lambda: kernels.pairwise_cosine_mean(X),
    }
    divisors = {"solve_exact (600 cands)": len(systems)}

    results: dict[str, dict[str, float]] = {name: {} for name in cases}
    backends = ["numpy"] + (["numba"] if kernels._HAVE_NUMBA else [])
    if not kernels._HAVE_NUMBA:
        print("numba not importable; timing the numpy fallback only")
    saved = kernels.USE_NUMBA
    try:
        for backend in backends:
            kernels.USE_NUMBA = backend == "numba"
            kernels.warm_up()
            for name, fn in cases.items():
                per_call = best_of(fn, args.repeats) / divisors.get(name, 1)
                results[name][backend] = per_call * 1e3
    finally:
        kernels.USE_NUMBA = saved

    width = max(len(n) for n in cases)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, by_backend in results.items():
        np_ms = by_backend["numpy"]
        if "numba" in by_backend:
            nb_ms = by_backend["numba"]
            print(f"{name:<{width}}  {np_ms:>8.3f}ms  {nb_ms:>8.3f}ms  {np_ms / nb_ms:>7.1f}x")
        else:
            print(f"{name:<{width}}  {np_ms:>8.3f}ms  {'-':>10}  {'-':>8}")


def run_scaling(args) -> None:
    ntd = ntd_from_dict(NTD_DOC)
    compiled = compile_ntd(ntd, LIST_SIZE)
    counts = (500, 1000, 2000, 4000)
    seconds = {}
    print(f"{'users':>6}  {'seconds':>8}  {'ms/user':>8}  {'full_set':>8}")
    for n_users in counts:
        corpus, behaviors, registry = generate_synthetic(args.articles, n_users, seed=args.seed)
        attrs = bucket_assignments(corpus, compiled, registry)
        t0 = time.perf_counter()
        graph = augment_cold_items(build_graph(behaviors), corpus)
        full = 0
        for idx, rec in enumerate(behaviors):
            hist = set(rec.history) | set(rec.clicked_ids())
            out = recommend_drdw(
                graph, rec.user_id, corpus, ntd, registry,
                history=hist, seed=idx, attributes=attrs,
            )
            full += out.status is SamplerStatus.FULL_SET
        dt = time.perf_counter() - t0
        seconds[n_users] = dt
        print(f"{n_users:>6}  {dt:>8.2f}  {dt / n_users * 1e3:>8.2f}  {full / n_users:>8.3f}")

    ratio = seconds[counts[-1]] / seconds[counts[0]]
    ideal = counts[-1] / counts[0]
    verdict = "linear" if abs(ratio / ideal - 1.0) <= 0.25 else "NOT linear"
    print(f"time({counts[-1]}) / time({counts[0]}) = {ratio:.2f} (ideal {ideal:.0f}) -> {verdict} within 25%")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--scaling", action="store_true", help="end-to-end user-count sweep")
    ap.add_argument("--repeats", type=int, default=15)
    ap.add_argument("--articles", type=int, default=5000, help="corpus size for --scaling")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if args.scaling:
        run_scaling(args)
    else:
        run_kernels(args)


if __name__ == "__main__":
    main()
