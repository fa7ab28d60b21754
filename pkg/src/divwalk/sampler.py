"""Exact constrained selection against integer bucket targets, with fallback.

The selection problem: pick a binary vector X over scored candidates maximizing
sum(c_i * x_i) subject to A X = b, where A stacks an all-ones row (list size)
and one 0/1 membership row per (dimension, bucket). Because each dimension's
rows partition the candidates, candidates group into joint bucket cells and an
exact dynamic program over per-cell allocation counts solves the system without
enumerating subsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .corpus import (
    Article,
    CompiledNTD,
    Corpus,
    NTDSpec,
    PartyRegistry,
    article_bucket_label,
    compile_ntd,
    largest_remainder,
)
from .graph import InteractionGraph
from .rerank import rank_by_score
from .walker import WalkerError, filter_history, rdw_scores

WALK_PROBABILITY = "WALK_PROBABILITY"

# above this many mixed-radix states the dense DP buffers stop paying off
_DENSE_STATE_LIMIT = 300_000


class SamplerError(ValueError):
    pass


class SamplerStatus(Enum):
    FULL_SET = "FULL_SET"
    REDUCED_SET = "REDUCED_SET"
    EMPTY = "EMPTY"


@dataclass(frozen=True)
class SamplerSolution:
    selected: tuple[str, ...]  # ascending id
    achieved_size: int
    objective_value: float
    status: SamplerStatus

    @property
    def status_label(self) -> str:
        if self.status is SamplerStatus.REDUCED_SET:
            return f"REDUCED_SET({self.achieved_size})"
        return self.status.value


@dataclass(frozen=True)
class ConstraintSystem:
    """Matrix form of the bucket-target selection problem.

    A: row 0 all ones, then per-dimension bucket membership rows; b: list size
    followed by bucket counts; c: per-candidate objective. `dim_slices` locates
    each dimension's row block; `proportions` keeps the declared target ratios
    so reduced sizes can be re-rounded from the source proportions.
    """

    ids: tuple[str, ...]
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    dim_slices: tuple[tuple[int, int], ...]
    proportions: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        A, b, c = self.A, self.b, self.c
        if A.ndim != 2 or A.shape != (len(b), len(c)) or len(c) != len(self.ids):
            raise SamplerError("inconsistent constraint system shapes")
        if not np.all((A == 0) | (A == 1)):
            raise SamplerError("A entries must be binary")
        if len(b) and not np.all(A[0] == 1):
            raise SamplerError("row 0 of A must be all ones")
        for lo, hi in self.dim_slices:
            col_sums = A[lo:hi].sum(axis=0)
            if len(c) and not np.all(col_sums == 1):
                raise SamplerError("dimension rows must partition the candidates")
            if int(b[lo:hi].sum()) != self.list_size:
                raise SamplerError("dimension targets must sum to the list size")

    @property
    def list_size(self) -> int:
        return int(self.b[0])

    @property
    def n_candidates(self) -> int:
        return len(self.ids)

    def bucket_index(self) -> np.ndarray:
        """(n, D) bucket index of each candidate in each dimension."""
        cols = []
        for lo, hi in self.dim_slices:
            cols.append(np.argmax(self.A[lo:hi], axis=0))
        return np.stack(cols, axis=1) if cols else np.zeros((len(self.ids), 0), dtype=np.int64)

    def targets(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(x) for x in self.b[lo:hi]) for lo, hi in self.dim_slices)


def build_constraints(
    candidates: Iterable[tuple[str, float]] | Mapping[str, float],
    compiled: CompiledNTD,
    attributes: Mapping[str, tuple[int, ...]],
    objective: str = WALK_PROBABILITY,
    objective_values: Optional[Mapping[str, float]] = None,
) -> ConstraintSystem:
    """Assemble the linear system for a scored candidate pool.

    attributes maps candidate id -> bucket index per compiled dimension.
    objective WALK_PROBABILITY uses the candidate scores as c; any other name
    reads per-candidate values from objective_values (e.g. recency).
    """
    if isinstance(candidates, Mapping):
        pairs = sorted(candidates.items())
    else:
        pairs = sorted(candidates)
    ids = tuple(i for i, _ in pairs)
    if len(set(ids)) != len(ids):
        raise SamplerError("duplicate candidate ids")
    n = len(ids)
    D = len(compiled.dimensions)
    if objective == WALK_PROBABILITY:
        c = np.array([s for _, s in pairs], dtype=np.float64)
    else:
        if objective_values is None:
            raise SamplerError(f"objective {objective!r} needs objective_values")
        missing = [i for i in ids if i not in objective_values or objective_values[i] is None]
        if missing:
            raise SamplerError(f"candidates missing objective {objective!r}: {missing[:5]}")
        c = np.array([float(objective_values[i]) for i in ids], dtype=np.float64)

    try:
        rows = [attributes[i] for i in ids]
    except KeyError as exc:
        raise SamplerError(f"candidate {exc.args[0]!r} has no bucket assignment") from None
    try:
        bucket = np.array(rows, dtype=np.int64).reshape(n, D)
    except ValueError:
        raise SamplerError(
            f"bucket assignments must have one index per dimension ({D})"
        ) from None
    n_buckets = [len(d.labels) for d in compiled.dimensions]
    for d, nb in enumerate(n_buckets):
        bad = (bucket[:, d] < 0) | (bucket[:, d] >= nb)
        if bad.any():
            i = ids[int(np.argmax(bad))]
            raise SamplerError(
                f"candidate {i!r}: bucket {bucket[np.argmax(bad), d]} out of range in dimension {d}"
            )

    n_rows = 1 + sum(n_buckets)
    A = np.zeros((n_rows, n), dtype=np.int8)
    A[0] = 1
    b = np.zeros(n_rows, dtype=np.int64)
    b[0] = compiled.list_size
    slices = []
    row = 1
    for d, nb in enumerate(n_buckets):
        np.put_along_axis(A[row : row + nb].T, bucket[:, d : d + 1], 1, axis=1)
        b[row : row + nb] = compiled.counts[d]
        slices.append((row, row + nb))
        row += nb
    return ConstraintSystem(
        ids=ids,
        A=A,
        b=b,
        c=c,
        dim_slices=tuple(slices),
        proportions=tuple(d.proportions for d in compiled.dimensions),
    )


def _solve_arrays(
    bucket: np.ndarray, scores: np.ndarray, targets: tuple[tuple[int, ...], ...]
) -> tuple[bool, float, tuple[int, ...]]:
    """Exact optimum over candidate positions; positions are the id order."""
    n, D = bucket.shape
    # necessary per-bucket supply check - cheap rejection inside the hop loop
    for d, tgt in enumerate(targets):
        counts = np.bincount(bucket[:, d], minlength=len(tgt)) if n else np.zeros(len(tgt), int)
        if np.any(counts < np.asarray(tgt)):
            return False, 0.0, ()
    if D != 2:
        return kernels.alloc_dp_general(bucket, scores, targets)

    # orient so the encoded state space (product of col targets + 1) is smallest
    prod0 = int(np.prod([t + 1 for t in targets[0]]))
    prod1 = int(np.prod([t + 1 for t in targets[1]]))
    cols_d = 0 if prod0 <= prod1 else 1
    rows_d = 1 - cols_d
    state_size = prod0 if cols_d == 0 else prod1
    if state_size > _DENSE_STATE_LIMIT:
        return kernels.alloc_dp_general(bucket, scores, targets)

    row_t = np.asarray(targets[rows_d], dtype=np.int64)
    col_t = np.asarray(targets[cols_d], dtype=np.int64)
    RA, RB = len(row_t), len(col_t)
    rb, cb = bucket[:, rows_d], bucket[:, cols_d]
    cap = np.minimum.outer(row_t, col_t)  # per-cell usable depth
    cap_max = int(cap.max()) if cap.size else 0
    cell_n = np.zeros((RA, RB), dtype=np.int64)
    cell_items = np.zeros((RA, RB, max(cap_max, 1)), dtype=np.int64)
    cell_prefix = np.zeros((RA, RB, max(cap_max, 1) + 1))
    order = np.lexsort((np.arange(n), -scores))
    for p in order:
        i, j = rb[p], cb[p]
        t = cell_n[i, j]
        if t < cap[i, j]:
            cell_items[i, j, t] = p
            cell_prefix[i, j, t + 1] = cell_prefix[i, j, t] + scores[p]
            cell_n[i, j] = t + 1
    return kernels.alloc_dp_2d(row_t, col_t, cell_n, cell_prefix, cell_items)


def solve_exact(cs: ConstraintSystem) -> Optional[SamplerSolution]:
    """Exact optimum of the constraint system, or None when infeasible.

    Ties on the objective resolve to the lexicographically smallest selected-id
    set (candidate ids are kept in ascending order, so position order is id
    order).
    """
    ok, value, positions = _solve_arrays(cs.bucket_index(), cs.c, cs.targets())
    if not ok:
        return None
    return SamplerSolution(
        selected=tuple(cs.ids[p] for p in positions),
        achieved_size=cs.list_size,
        objective_value=value,
        status=SamplerStatus.FULL_SET,
    )


def _reduced_system(cs: ConstraintSystem, n: int) -> ConstraintSystem:
    b = np.zeros_like(cs.b)
    b[0] = n
    for (lo, hi), props in zip(cs.dim_slices, cs.proportions):
        b[lo:hi] = largest_remainder(props, n)
    return ConstraintSystem(cs.ids, cs.A, b, cs.c, cs.dim_slices, cs.proportions)


def _reduce(cs: ConstraintSystem) -> SamplerSolution:
    for n in range(cs.list_size - 1, 0, -1):
        sol = solve_exact(_reduced_system(cs, n))
        if sol is not None:
            return SamplerSolution(sol.selected, n, sol.objective_value, SamplerStatus.REDUCED_SET)
    return SamplerSolution((), 0, 0.0, SamplerStatus.EMPTY)


def reduce_and_retry(cs: ConstraintSystem) -> SamplerSolution:
    """Largest feasible reduced size, re-rounding the targets from the declared
    proportions at every candidate size. Rejects systems that are feasible as
    given — callers should only land here after solve_exact returned None."""
    if solve_exact(cs) is not None:
        raise SamplerError("system is feasible at full size; reduction not applicable")
    return _reduce(cs)


def fill_random(solution: SamplerSolution, cs: ConstraintSystem, seed: int) -> tuple[str, ...]:
    """Top up a short solution to the full list size from the unselected pool.

    Seeded uniform choice, but restricted each step to candidates moving the
    most bucket counts toward the full-size targets (deficit-first). Returns
    selected + fills; exhausting the pool yields a shorter tuple.
    """
    if solution.achieved_size >= cs.list_size:
        raise SamplerError("solution already at full size; nothing to fill")
    rng = np.random.default_rng(seed)
    bucket = cs.bucket_index()
    pos_of = {i: p for p, i in enumerate(cs.ids)}
    counts = [np.zeros(hi - lo, dtype=np.int64) for lo, hi in cs.dim_slices]
    for i in solution.selected:
        p = pos_of[i]
        for d in range(bucket.shape[1]):
            counts[d][bucket[p, d]] += 1
    targets = [cs.b[lo:hi] for lo, hi in cs.dim_slices]
    chosen = set(solution.selected)
    pool = [i for i in cs.ids if i not in chosen]
    out = list(solution.selected)
    while len(out) < cs.list_size and pool:
        deficits = [np.asarray(t) - c for t, c in zip(targets, counts)]
        best_prio = -1
        eligible: list[int] = []
        for idx, i in enumerate(pool):
            p = pos_of[i]
            prio = sum(1 for d in range(bucket.shape[1]) if deficits[d][bucket[p, d]] > 0)
            if prio > best_prio:
                best_prio = prio
                eligible = [idx]
            elif prio == best_prio:
                eligible.append(idx)
        pick_idx = eligible[int(rng.integers(len(eligible)))]
        pick = pool.pop(pick_idx)
        p = pos_of[pick]
        for d in range(bucket.shape[1]):
            counts[d][bucket[p, d]] += 1
        out.append(pick)
    return tuple(out)


@dataclass(frozen=True)
class DrdwRecommendation:
    user_id: str
    ids: tuple[str, ...]  # final ranked order
    scores: tuple[float, ...]
    selected: tuple[str, ...]  # the constraint-satisfying core, ascending id
    status: SamplerStatus
    achieved_size: int
    hops_used: int

    @property
    def status_label(self) -> str:
        if self.status is SamplerStatus.REDUCED_SET:
            return f"REDUCED_SET({self.achieved_size})"
        return self.status.value


def bucket_assignments(
    corpus: Corpus | Iterable[Article],
    compiled: CompiledNTD,
    registry: Optional[PartyRegistry],
) -> dict[str, tuple[int, ...]]:
    """Bucket index per dimension for every article, keyed by id."""
    out = {}
    for a in corpus:
        out[a.id] = tuple(
            dim.labels.index(article_bucket_label(a, dim, registry))
            for dim in compiled.dimensions
        )
    return out


def recommend_drdw(
    graph: InteractionGraph,
    user: str,
    corpus: Corpus,
    ntd: NTDSpec,
    registry: Optional[PartyRegistry] = None,
    *,
    list_size: int = 20,
    hops: int = 3,
    max_hops: int = 9,
    beta: float = 0.0,
    objective: str = WALK_PROBABILITY,
    objective_values: Optional[Mapping[str, float]] = None,
    seed: int = 0,
    history: Optional[Iterable[str]] = None,
    attributes: Optional[Mapping[str, tuple[int, ...]]] = None,
    extra_filters: Sequence = (),
) -> DrdwRecommendation:
    """Full per-user pipeline: expand hops until the targets are exactly
    satisfiable, else reduce and randomly fill; rank the result by score.

    history defaults to the user's graph neighborhood (all interactions).
    Additional predicate filters (article id -> bool, False drops) slot in
    after history removal.
    """
    if user not in graph.user_index:
        raise WalkerError(f"unknown user: {user!r}")
    compiled = compile_ntd(ntd, list_size)
    if attributes is None:
        attributes = bucket_assignments(corpus, compiled, registry)
    if history is None:
        history = graph.items_of(user)
    history = set(history)

    h = hops
    cs = None
    ws = None
    while True:
        ws = rdw_scores(graph, user, h, beta)
        ws = filter_history(ws, history)
        for flt in extra_filters:
            keep = [flt(i) for i in ws.item_ids]
            ws = filter_history(ws, {i for i, k in zip(ws.item_ids, keep) if not k})
        if len(ws):
            known = [i for i in ws.item_ids if i in attributes]
            pairs = dict(zip(ws.item_ids, (float(v) for v in ws.values)))
            cs = build_constraints(
                {i: pairs[i] for i in known}, compiled, attributes, objective, objective_values
            )
            sol = solve_exact(cs)
            if sol is not None:
                ranked = rank_by_score(sol.selected, pairs)
                return DrdwRecommendation(
                    user_id=user,
                    ids=tuple(ranked),
                    scores=tuple(pairs[i] for i in ranked),
                    selected=sol.selected,
                    status=SamplerStatus.FULL_SET,
                    achieved_size=sol.achieved_size,
                    hops_used=h,
                )
        if h >= max_hops:
            break
        h += 2

    if cs is None or cs.n_candidates == 0:
        return DrdwRecommendation(user, (), (), (), SamplerStatus.EMPTY, 0, h)
    sol = _reduce(cs)
    pairs = dict(zip(ws.item_ids, (float(v) for v in ws.values)))
    filled = fill_random(sol, cs, seed) if sol.achieved_size < cs.list_size else sol.selected
    ranked = rank_by_score(filled, pairs)
    return DrdwRecommendation(
        user_id=user,
        ids=tuple(ranked),
        scores=tuple(pairs[i] for i in ranked),
        selected=sol.selected,
        status=sol.status,
        achieved_size=sol.achieved_size,
        hops_used=h,
    )
