"""Ranking and diversity-aware re-ranking of scored candidate lists."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import CompiledNTD, Corpus

EPS = 1e-6


class RerankError(ValueError):
    pass


@dataclass(frozen=True)
class RerankConfig:
    method: str = "score"  # score | gkl | pm2 | mmr
    lam: float = 0.5
    list_size: Optional[int] = None
    use_embeddings: bool = False  # mmr only; default is one-hot bucket vectors
    aspect: Optional[tuple[int, ...]] = None  # dimension indices; None = all

    def __post_init__(self):
        if self.method not in ("score", "gkl", "pm2", "mmr"):
            raise RerankError(f"unknown rerank method: {self.method!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise RerankError(f"lambda must be in [0, 1], got {self.lam}")


def rank_by_score(selection: Iterable[str], scores: Mapping[str, float]) -> list[str]:
    """Descending score, ties by ascending id."""
    selection = list(selection)
    missing = [i for i in selection if i not in scores]
    if missing:
        raise RerankError(f"unscored ids: {missing[:5]}")
    return sorted(selection, key=lambda i: (-scores[i], i))


def _as_pairs(candidates) -> list[tuple[str, float]]:
    if isinstance(candidates, Mapping):
        return sorted(candidates.items())
    return sorted(candidates)


def _norm_scores(pairs: Sequence[tuple[str, float]]) -> dict[str, float]:
    lo = min(s for _, s in pairs)
    hi = max(s for _, s in pairs)
    if hi == lo:
        return {i: 0.5 for i, _ in pairs}
    return {i: (s - lo) / (hi - lo) for i, s in pairs}


def _aspect_dims(target: CompiledNTD, aspect: Optional[Sequence[int]]) -> tuple[int, ...]:
    if aspect is None:
        return tuple(range(len(target.dimensions)))
    return tuple(aspect)


def gkl_rerank(
    candidates: Mapping[str, float] | Iterable[tuple[str, float]],
    target: CompiledNTD,
    lam: float,
    list_size: int,
    attributes: Mapping[str, tuple[int, ...]],
    aspect: Optional[Sequence[int]] = None,
) -> list[str]:
    """Greedy calibration: each step adds the candidate maximizing
    (1-lambda) * minmax-normalized score - lambda * sum over aspect dimensions
    of KL(target proportions || running-list bucket proportions), the list side
    add-eps smoothed. lambda=0 degenerates to rank_by_score."""
    pairs = _as_pairs(candidates)
    if not pairs:
        raise RerankError("empty candidate pool")
    norm = _norm_scores(pairs)
    scores = dict(pairs)
    dims = _aspect_dims(target, aspect)
    t_props = [np.asarray(target.dimensions[d].proportions) for d in dims]
    counts = [np.zeros(len(target.dimensions[d].labels)) for d in dims]
    remaining = [i for i, _ in pairs]
    out: list[str] = []
    while remaining and len(out) < list_size:
        best = None
        best_key = None
        for i in remaining:
            kl = 0.0
            for k, d in enumerate(dims):
                cnt = counts[k].copy()
                cnt[attributes[i][d]] += 1
                dist = (cnt + EPS) / (cnt.sum() + EPS * len(cnt))
                t = t_props[k]
                nz = t > 0
                kl += float(np.sum(t[nz] * np.log2(t[nz] / dist[nz])))
            obj = (1.0 - lam) * norm[i] - lam * kl
            key = (-obj, -scores[i], i)
            if best_key is None or key < best_key:
                best_key = key
                best = i
        out.append(best)
        remaining.remove(best)
        for k, d in enumerate(dims):
            counts[k][attributes[best][d]] += 1
    return out


def pm2_rerank(
    candidates: Mapping[str, float] | Iterable[tuple[str, float]],
    target: CompiledNTD,
    list_size: int,
    attributes: Mapping[str, tuple[int, ...]],
    aspect: Optional[Sequence[int]] = None,
) -> list[str]:
    """Proportional seat assignment over the joint bucket cells of the aspect
    dimensions: quotient v / (2s + 1) with v the product of per-dimension target
    proportions and s the seats a cell already holds; within the chosen cell,
    the highest-scored candidate wins."""
    pairs = _as_pairs(candidates)
    if not pairs:
        raise RerankError("empty candidate pool")
    scores = dict(pairs)
    dims = _aspect_dims(target, aspect)
    by_cell: dict[tuple[int, ...], list[str]] = {}
    for i, s in pairs:
        cell = tuple(attributes[i][d] for d in dims)
        by_cell.setdefault(cell, []).append(i)
    for cell, members in by_cell.items():
        members.sort(key=lambda i: (-scores[i], i))
    v = {
        cell: math.prod(target.dimensions[d].proportions[b] for d, b in zip(dims, cell))
        for cell in by_cell
    }
    seats = {cell: 0 for cell in by_cell}
    out: list[str] = []
    while len(out) < list_size:
        live = [cell for cell, members in by_cell.items() if members]
        if not live:
            break
        cell = min(live, key=lambda c: (-(v[c] / (2 * seats[c] + 1)), c))
        out.append(by_cell[cell].pop(0))
        seats[cell] += 1
    return out


def mmr_rerank(
    candidates: Mapping[str, float] | Iterable[tuple[str, float]],
    similarity: Callable[[str, str], float],
    lam: float,
    list_size: int,
) -> list[str]:
    """Greedy: lambda * normalized score - (1-lambda) * max similarity to the
    picks so far; the first pick is the top-scored candidate."""
    pairs = _as_pairs(candidates)
    if not pairs:
        raise RerankError("empty candidate pool")
    norm = _norm_scores(pairs)
    scores = dict(pairs)
    remaining = [i for i, _ in pairs]
    first = min(remaining, key=lambda i: (-scores[i], i))
    out = [first]
    remaining.remove(first)
    max_sim = {i: similarity(i, first) for i in remaining}
    while remaining and len(out) < list_size:
        best = min(
            remaining,
            key=lambda i: (-(lam * norm[i] - (1.0 - lam) * max_sim[i]), -scores[i], i),
        )
        out.append(best)
        remaining.remove(best)
        for i in remaining:
            s = similarity(i, best)
            if s > max_sim[i]:
                max_sim[i] = s
    return out


def onehot_similarity(
    attributes: Mapping[str, tuple[int, ...]], dims: Optional[Sequence[int]] = None
) -> Callable[[str, str], float]:
    """Cosine over concatenated one-hot bucket vectors: fraction of dimensions
    on which two articles share a bucket."""

    def sim(a: str, b: str) -> float:
        xa, xb = attributes[a], attributes[b]
        idx = dims if dims is not None else range(len(xa))
        hits = sum(1 for d in idx if xa[d] == xb[d])
        n = len(tuple(idx))
        return hits / n if n else 0.0

    return sim


def embedding_similarity(corpus: Corpus) -> Callable[[str, str], float]:
    cache: dict[str, np.ndarray] = {}

    def vec(i: str) -> np.ndarray:
        v = cache.get(i)
        if v is None:
            emb = corpus[i].embedding
            if emb is None:
                raise RerankError(f"article {i!r} has no embedding")
            v = np.asarray(emb)
            v = v / np.linalg.norm(v)
            cache[i] = v
        return v

    def sim(a: str, b: str) -> float:
        return float(vec(a) @ vec(b))

    return sim


def space_by_category(ordered: Sequence[str], categories: Mapping[str, str]) -> list[str]:
    """Equitable spacing: repeatedly place an item of the most plentiful
    remaining category that differs from the previous slot (ties by original
    rank); if every remaining item matches the previous category, fall back to
    the best-ranked one. The item multiset is preserved."""
    queues: dict[str, list[str]] = {}
    for i in ordered:
        queues.setdefault(categories[i], []).append(i)
    rank = {i: r for r, i in enumerate(ordered)}
    out: list[str] = []
    prev: Optional[str] = None
    for _ in range(len(ordered)):
        live = [c for c, q in queues.items() if q]
        choices = [c for c in live if c != prev]
        if not choices:
            cat = min(live, key=lambda c: rank[queues[c][0]])
        else:
            best_n = max(len(queues[c]) for c in choices)
            cat = min(
                (c for c in choices if len(queues[c]) == best_n),
                key=lambda c: rank[queues[c][0]],
            )
        out.append(queues[cat].pop(0))
        prev = cat
    return out
