"""Hot numeric kernels: walk propagation, constrained-selection DP, pairwise distance.

Every kernel exists twice: a numba ``@njit`` version and a pure numpy/python
fallback. The module-level dispatchers pick the backend once at import time —
numba when importable, unless the environment variable ``DIVWALK_NUMBA`` is set
to ``0``/``false``/``off``. ``benchmarks/bench_kernels.py`` times the two
implementations against each other.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an install-time choice
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def _env_wants_numba() -> bool:
    flag = os.environ.get("DIVWALK_NUMBA", "").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    return _HAVE_NUMBA


USE_NUMBA = _env_wants_numba()

NEG_INF = -1e300


# --- bipartite propagation ---------------------------------------------------

def _propagate_np(ptr: np.ndarray, adj: np.ndarray, p: np.ndarray, out_size: int) -> np.ndarray:
    """One half-hop: spread mass p over CSR adjacency, uniform over neighbors."""
    deg = np.diff(ptr)
    w = np.where(deg > 0, p / np.maximum(deg, 1), 0.0)
    if adj.shape[0] == 0:
        return np.zeros(out_size)
    return np.bincount(adj, weights=np.repeat(w, deg), minlength=out_size)


@njit(cache=True, nogil=True)
def _propagate_nb(ptr, adj, p, out_size):  # pragma: no cover - exercised via dispatch
    out = np.zeros(out_size)
    for u in range(ptr.shape[0] - 1):
        lo, hi = ptr[u], ptr[u + 1]
        if hi == lo:
            continue
        mass = p[u]
        if mass == 0.0:
            continue
        w = mass / (hi - lo)
        for e in range(lo, hi):
            out[adj[e]] += w
    return out


def propagate(ptr: np.ndarray, adj: np.ndarray, p: np.ndarray, out_size: int) -> np.ndarray:
    if USE_NUMBA:
        return _propagate_nb(ptr, adj, p, out_size)
    return _propagate_np(ptr, adj, p, out_size)


# --- exact constrained selection (two partition dimensions) ------------------
#
# Candidates are grouped into (row bucket, col bucket) cells; within a cell only
# the top-t by (score desc, position asc) can ever appear in an optimum, so the
# search space is the integer allocation per cell whose marginals hit the row
# and column targets. DP over rows with the remaining column budgets encoded as
# a mixed-radix state. Ties on the objective resolve to the lexicographically
# smallest selected-position set; that is exact because, comparing equal-size
# partial selections at the same state, set order is preserved under union with
# any common completion.


@njit(cache=True, nogil=True)
def _alloc_dp_2d_nb(row_t, col_t, cell_n, cell_prefix, cell_items, out_set):  # pragma: no cover
    RA = row_t.shape[0]
    RB = col_t.shape[0]
    radix = np.empty(RB, np.int64)
    size = 1
    for j in range(RB):
        radix[j] = size
        size *= col_t[j] + 1
    max_sel = 0
    for i in range(RA):
        max_sel += row_t[i]

    cur_val = np.full(size, NEG_INF)
    nxt_val = np.full(size, NEG_INF)
    cur_live = np.zeros(size, np.uint8)
    nxt_live = np.zeros(size, np.uint8)
    cur_set = np.zeros((size, max_sel), np.int64)
    nxt_set = np.zeros((size, max_sel), np.int64)

    cur_val[size - 1] = 0.0
    cur_live[size - 1] = 1

    k = np.zeros(RB, np.int64)
    cap = np.zeros(RB, np.int64)
    picked = np.zeros(max_sel, np.int64)
    merged = np.zeros(max_sel, np.int64)

    sel_len = 0
    for i in range(RA):
        need = row_t[i]
        new_len = sel_len + need
        for s in range(size):
            nxt_live[s] = 0
            nxt_val[s] = NEG_INF
        for s in range(size):
            if cur_live[s] == 0:
                continue
            base_val = cur_val[s]
            for j in range(RB):
                rem = (s // radix[j]) % (col_t[j] + 1)
                c = cell_n[i, j]
                if rem < c:
                    c = rem
                if need < c:
                    c = need
                cap[j] = c
            # enumerate compositions of `need` over RB cells bounded by cap
            if RB == 1:
                if need <= cap[0]:
                    k[0] = need
                    _dp_emit(i, s, base_val, k, radix, cell_prefix, cell_items,
                             cur_set, sel_len, picked, merged, new_len,
                             nxt_val, nxt_live, nxt_set)
            else:
                pos = 0
                k[0] = -1
                while pos >= 0:
                    k[pos] += 1
                    ps = 0
                    for t in range(pos + 1):
                        ps += k[t]
                    if k[pos] > cap[pos] or ps > need:
                        pos -= 1
                        continue
                    if pos == RB - 2:
                        last = need - ps
                        if 0 <= last <= cap[RB - 1]:
                            k[RB - 1] = last
                            _dp_emit(i, s, base_val, k, radix, cell_prefix, cell_items,
                                     cur_set, sel_len, picked, merged, new_len,
                                     nxt_val, nxt_live, nxt_set)
                    else:
                        pos += 1
                        k[pos] = -1
        cur_val, nxt_val = nxt_val, cur_val
        cur_live, nxt_live = nxt_live, cur_live
        cur_set, nxt_set = nxt_set, cur_set
        sel_len = new_len

    if cur_live[0] == 0:
        return False, 0.0
    for t in range(max_sel):
        out_set[t] = cur_set[0, t]
    return True, cur_val[0]


@njit(cache=True, nogil=True)
def _dp_emit(i, s, base_val, k, radix, cell_prefix, cell_items,
             cur_set, sel_len, picked, merged, new_len,
             nxt_val, nxt_live, nxt_set):  # pragma: no cover
    RB = k.shape[0]
    s2 = s
    val2 = base_val
    npick = 0
    for j in range(RB):
        kj = k[j]
        if kj > 0:
            s2 -= kj * radix[j]
            val2 += cell_prefix[i, j, kj]
            for t in range(kj):
                picked[npick] = cell_items[i, j, t]
                npick += 1
    # insertion sort the picked positions (tiny)
    for a in range(1, npick):
        key = picked[a]
        b = a - 1
        while b >= 0 and picked[b] > key:
            picked[b + 1] = picked[b]
            b -= 1
        picked[b + 1] = key
    # merge with the sorted partial selection
    ia = 0
    ib = 0
    im = 0
    while ia < sel_len and ib < npick:
        if cur_set[s, ia] < picked[ib]:
            merged[im] = cur_set[s, ia]
            ia += 1
        else:
            merged[im] = picked[ib]
            ib += 1
        im += 1
    while ia < sel_len:
        merged[im] = cur_set[s, ia]
        ia += 1
        im += 1
    while ib < npick:
        merged[im] = picked[ib]
        ib += 1
        im += 1

    if nxt_live[s2] == 0 or val2 > nxt_val[s2]:
        nxt_val[s2] = val2
        nxt_live[s2] = 1
        for t in range(new_len):
            nxt_set[s2, t] = merged[t]
        return
    if val2 == nxt_val[s2]:
        for t in range(new_len):
            if merged[t] < nxt_set[s2, t]:
                for u in range(new_len):
                    nxt_set[s2, u] = merged[u]
                return
            if merged[t] > nxt_set[s2, t]:
                return


def alloc_dp_2d(row_t, col_t, cell_n, cell_prefix, cell_items):
    """Exact 2-dimension allocation; returns (feasible, value, sorted positions)."""
    max_sel = int(np.sum(row_t))
    out = np.zeros(max_sel, np.int64)
    if USE_NUMBA:
        ok, val = _alloc_dp_2d_nb(row_t, col_t, cell_n, cell_prefix, cell_items, out)
        return bool(ok), float(val), tuple(int(x) for x in out) if ok else ()
    return _alloc_dp_2d_py(row_t, col_t, cell_n, cell_prefix, cell_items)


def _alloc_dp_2d_py(row_t, col_t, cell_n, cell_prefix, cell_items):
    """Numpy-backend twin of _alloc_dp_2d_nb: dict-state DP, same contract."""
    RA, RB = len(row_t), len(col_t)
    states: dict[tuple[int, ...], tuple[float, tuple[int, ...]]] = {
        tuple(int(t) for t in col_t): (0.0, ())
    }
    for i in range(RA):
        need = int(row_t[i])
        nxt: dict[tuple[int, ...], tuple[float, tuple[int, ...]]] = {}
        for state, (val, sel) in states.items():
            caps = [min(state[j], int(cell_n[i, j]), need) for j in range(RB)]
            for comp in _compositions(need, caps):
                val2 = val
                items: list[int] = []
                state2 = list(state)
                for j, kj in enumerate(comp):
                    if kj:
                        val2 += cell_prefix[i, j, kj]
                        items.extend(int(x) for x in cell_items[i, j, :kj])
                        state2[j] -= kj
                key = tuple(state2)
                sel2 = tuple(sorted(sel + tuple(items)))
                prev = nxt.get(key)
                if prev is None or val2 > prev[0] or (val2 == prev[0] and sel2 < prev[1]):
                    nxt[key] = (val2, sel2)
        states = nxt
        if not states:
            break
    hit = states.get(tuple(0 for _ in col_t))
    if hit is None:
        return False, 0.0, ()
    return True, float(hit[0]), hit[1]


def _compositions(total: int, caps: list[int]):
    """All ways to split `total` into len(caps) parts with 0 <= part_j <= caps[j]."""
    if len(caps) == 1:
        if 0 <= total <= caps[0]:
            yield (total,)
        return
    for first in range(min(total, caps[0]) + 1):
        for rest in _compositions(total - first, caps[1:]):
            yield (first,) + rest


def alloc_dp_general(bucket_idx: np.ndarray, scores: np.ndarray, targets) -> tuple[bool, float, tuple[int, ...]]:
    """Exact allocation for any number of partition dimensions (python DP).

    bucket_idx: (n, D) bucket index per candidate per dimension; candidates are
    positions 0..n-1 in ascending-id order. targets: per-dimension integer
    bucket counts. Tie-break: lexicographically smallest selected-position set.
    """
    n, D = bucket_idx.shape
    cells: dict[tuple[int, ...], list[int]] = {}
    for p in range(n):
        cells.setdefault(tuple(int(b) for b in bucket_idx[p]), []).append(p)
    prefixes = {}
    for key, plist in cells.items():
        plist.sort(key=lambda p: (-scores[p], p))
        acc = [0.0]
        for p in plist:
            acc.append(acc[-1] + float(scores[p]))
        prefixes[key] = acc
    start = tuple(tuple(int(t) for t in dim) for dim in targets)
    states: dict[tuple, tuple[float, tuple[int, ...]]] = {start: (0.0, ())}
    for key in sorted(cells):
        plist = cells[key]
        acc = prefixes[key]
        nxt: dict[tuple, tuple[float, tuple[int, ...]]] = {}
        for state, (val, sel) in states.items():
            tmax = min(min(state[d][key[d]] for d in range(D)), len(plist))
            for t in range(tmax + 1):
                state2 = tuple(
                    tuple(r - t if b == key[d] else r for b, r in enumerate(state[d]))
                    for d in range(D)
                )
                val2 = val + acc[t]
                sel2 = tuple(sorted(sel + tuple(plist[:t])))
                prev = nxt.get(state2)
                if prev is None or val2 > prev[0] or (val2 == prev[0] and sel2 < prev[1]):
                    nxt[state2] = (val2, sel2)
        states = nxt
        if not states:
            return False, 0.0, ()
    zero = tuple(tuple(0 for _ in dim) for dim in start)
    hit = states.get(zero)
    if hit is None:
        return False, 0.0, ()
    return True, float(hit[0]), hit[1]


# --- mean pairwise cosine distance -------------------------------------------

def _pairwise_cos_mean_np(X: np.ndarray) -> float:
    Xn = X / np.linalg.norm(X, axis=1, keepdims=True)
    g = Xn @ Xn.T
    iu = np.triu_indices(X.shape[0], k=1)
    return float(np.mean(1.0 - g[iu]))


@njit(cache=True, nogil=True)
def _pairwise_cos_mean_nb(X):  # pragma: no cover
    n = X.shape[0]
    d = X.shape[1]
    norms = np.empty(n)
    for i in range(n):
        s = 0.0
        for t in range(d):
            s += X[i, t] * X[i, t]
        norms[i] = np.sqrt(s)
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dot = 0.0
            for t in range(d):
                dot += X[i, t] * X[j, t]
            total += 1.0 - dot / (norms[i] * norms[j])
    return total / (n * (n - 1) / 2.0)


def pairwise_cosine_mean(X: np.ndarray) -> float:
    if USE_NUMBA:
        return float(_pairwise_cos_mean_nb(np.ascontiguousarray(X, dtype=np.float64)))
    return _pairwise_cos_mean_np(np.asarray(X, dtype=np.float64))


def warm_up() -> None:
    """Trigger JIT compilation on toy inputs so timing runs pay no compile cost."""
    if not USE_NUMBA:
        return
    ptr = np.array([0, 1], dtype=np.int64)
    adj = np.array([0], dtype=np.int64)
    propagate(ptr, adj, np.ones(1), 1)
    row_t = np.array([1], dtype=np.int64)
    col_t = np.array([1], dtype=np.int64)
    cell_n = np.ones((1, 1), dtype=np.int64)
    cell_prefix = np.zeros((1, 1, 2))
    cell_items = np.zeros((1, 1, 1), dtype=np.int64)
    alloc_dp_2d(row_t, col_t, cell_n, cell_prefix, cell_items)
    pairwise_cosine_mean(np.eye(2))
