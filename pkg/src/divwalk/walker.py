"""Exact p-hop random-walk landing distributions over the bipartite graph."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .graph import InteractionGraph


class WalkerError(ValueError):
    pass


@dataclass(eq=False)
class WalkScores:
    """Landing probabilities of a p-hop walk from one user, over its support.

    `item_ids`/`values` are aligned; `scores` exposes the same data as a dict.
    Fresh walk output sums to 1 (within 1e-9); after history filtering the mass
    simply drops — downstream selection only cares about relative order.
    """

    user_id: str
    hops: int
    item_ids: tuple[str, ...]
    values: np.ndarray
    _dict: dict = field(default=None, repr=False, compare=False)

    @property
    def scores(self) -> Mapping[str, float]:
        if self._dict is None:
            self._dict = {i: float(v) for i, v in zip(self.item_ids, self.values)}
        return self._dict

    def __len__(self) -> int:
        return len(self.item_ids)

    def total(self) -> float:
        return float(self.values.sum())


def _require_user(graph: InteractionGraph, user: str) -> int:
    try:
        return graph.user_index[user]
    except KeyError:
        raise WalkerError(f"unknown user: {user!r}") from None


def _check_hops(hops: int) -> None:
    if hops < 1 or hops % 2 == 0:
        raise WalkerError(f"hops must be odd and >= 1, got {hops}")


def walk_vector(graph: InteractionGraph, user_idx: int, hops: int) -> np.ndarray:
    """Dense landing distribution over all item indices (deterministic forward
    propagation of the uniform walk, not Monte-Carlo)."""
    p_user = np.zeros(graph.n_users)
    p_user[user_idx] = 1.0
    p_item = kernels.propagate(graph.user_ptr, graph.user_adj, p_user, graph.n_items)
    for _ in range((hops - 1) // 2):
        p_user = kernels.propagate(graph.item_ptr, graph.item_adj, p_item, graph.n_users)
        p_item = kernels.propagate(graph.user_ptr, graph.user_adj, p_user, graph.n_items)
    return p_item


def walk_scores(graph: InteractionGraph, user: str, hops: int = 3) -> WalkScores:
    _check_hops(hops)
    u = _require_user(graph, user)
    p_item = walk_vector(graph, u, hops)
    support = np.flatnonzero(p_item > 0.0)
    return WalkScores(
        user_id=user,
        hops=hops,
        item_ids=tuple(graph.item_ids[i] for i in support),
        values=p_item[support],
    )


def rdw_scores(graph: InteractionGraph, user: str, hops: int = 3, beta: float = 0.0) -> WalkScores:
    """Walk scores discounted by item popularity: value / degree**beta, renormalized.

    beta=0 returns the plain walk output unchanged (bit-identical)."""
    if beta < 0:
        raise WalkerError(f"beta must be >= 0, got {beta}")
    ws = walk_scores(graph, user, hops)
    if beta == 0.0:
        return ws
    deg = np.array([graph.item_degree(i) for i in ws.item_ids], dtype=np.float64)
    raw = ws.values / deg**beta
    return WalkScores(ws.user_id, ws.hops, ws.item_ids, raw / raw.sum())


def filter_history(scores: WalkScores, history: Iterable[str]) -> WalkScores:
    """Drop history items; remaining mass is NOT renormalized."""
    history = set(history)
    if not history:
        return scores
    keep = np.fromiter((i not in history for i in scores.item_ids), dtype=bool, count=len(scores.item_ids))
    return WalkScores(
        scores.user_id,
        scores.hops,
        tuple(i for i, k in zip(scores.item_ids, keep) if k),
        scores.values[keep],
    )


def top_scores(scores: WalkScores, n: int) -> list[tuple[str, float]]:
    order = sorted(range(len(scores.item_ids)), key=lambda i: (-scores.values[i], scores.item_ids[i]))
    return [(scores.item_ids[i], float(scores.values[i])) for i in order[:n]]
