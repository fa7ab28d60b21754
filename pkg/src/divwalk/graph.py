"""Bipartite user-item click graph construction and cold-item augmentation."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import BehaviorRecord, Corpus


class GraphError(ValueError):
    pass


def _csr_from_pairs(n_left: int, left: np.ndarray, right: np.ndarray):
    """Build (ptr, adj) for left -> sorted right lists from parallel index arrays."""
    order = np.lexsort((right, left))
    left, right = left[order], right[order]
    ptr = np.zeros(n_left + 1, dtype=np.int64)
    np.add.at(ptr, left + 1, 1)
    np.cumsum(ptr, out=ptr)
    return ptr, right.astype(np.int64, copy=True)


class InteractionGraph:
    """Immutable bipartite click graph.

    User and item nodes are indexed in ascending id order; adjacency is stored
    CSR-style on both sides (`user_ptr`/`user_adj` holds item indices per user,
    `item_ptr`/`item_adj` user indices per item).
    """

    def __init__(self, user_ids: Sequence[str], item_ids: Sequence[str], edges: Iterable[tuple[str, str]]):
        self.user_ids = tuple(sorted(user_ids))
        self.item_ids = tuple(sorted(item_ids))
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        self.item_index = {a: i for i, a in enumerate(self.item_ids)}
        pairs = {(self.user_index[u], self.item_index[a]) for u, a in edges}
        if pairs:
            uu = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
            ii = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))
        else:
            uu = ii = np.empty(0, dtype=np.int64)
        self.user_ptr, self.user_adj = _csr_from_pairs(len(self.user_ids), uu, ii)
        self.item_ptr, self.item_adj = _csr_from_pairs(len(self.item_ids), ii, uu)
        for arr in (self.user_ptr, self.user_adj, self.item_ptr, self.item_adj):
            arr.setflags(write=False)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_edges(self) -> int:
        return int(self.user_adj.shape[0])

    @property
    def user_degrees(self) -> np.ndarray:
        return np.diff(self.user_ptr)

    @property
    def item_degrees(self) -> np.ndarray:
        return np.diff(self.item_ptr)

    def items_of(self, user_id: str) -> tuple[str, ...]:
        u = self.user_index[user_id]
        return tuple(self.item_ids[i] for i in self.user_adj[self.user_ptr[u]:self.user_ptr[u + 1]])

    def users_of(self, item_id: str) -> tuple[str, ...]:
        i = self.item_index[item_id]
        return tuple(self.user_ids[u] for u in self.item_adj[self.item_ptr[i]:self.item_ptr[i + 1]])

    def item_degree(self, item_id: str) -> int:
        i = self.item_index[item_id]
        return int(self.item_ptr[i + 1] - self.item_ptr[i])

    def edges(self) -> set[tuple[str, str]]:
        out = set()
        for u in range(self.n_users):
            for i in self.user_adj[self.user_ptr[u]:self.user_ptr[u + 1]]:
                out.add((self.user_ids[u], self.item_ids[i]))
        return out


def build_graph(behaviors: Iterable[BehaviorRecord]) -> InteractionGraph:
    """Assemble the bipartite graph from history items and clicked impressions.

    One node per distinct user/article appearing in an interaction, one edge per
    distinct (user, item) pair; duplicates collapse. Non-clicked impression items
    contribute nothing.
    """
    edges: set[tuple[str, str]] = set()
    for rec in behaviors:
        for item in rec.history:
            edges.add((rec.user_id, item))
        for item in rec.clicked_ids():
            edges.add((rec.user_id, item))
    users = {u for u, _ in edges}
    items = {i for _, i in edges}
    return InteractionGraph(users, items, edges)


def cosine_similarity(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise GraphError(f"dimension mismatch: {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise GraphError("cosine similarity undefined for zero vector")
    return float(np.dot(x, y) / (nx * ny))


class SimilarityIndex:
    """Exact top-k cosine search over warm-item embeddings.

    Neighbors come back sorted by descending similarity, ties by ascending
    item id. Brute force — adequate at news-corpus scale.
    """

    def __init__(self, item_ids: Sequence[str], embeddings: np.ndarray):
        order = np.argsort(np.asarray(item_ids, dtype=object), kind="stable")
        self.item_ids = tuple(item_ids[i] for i in order)
        mat = np.asarray(embeddings, dtype=np.float64)[order]
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise GraphError("zero embedding in similarity index")
        self._mat = mat / norms

    def __len__(self) -> int:
        return len(self.item_ids)

    @classmethod
    def from_corpus(cls, corpus: Corpus, item_ids: Iterable[str]) -> "SimilarityIndex":
        ids, rows = [], []
        for item_id in item_ids:
            a = corpus[item_id]
            if a.embedding is None:
                raise GraphError(f"item {item_id!r} has no embedding")
            ids.append(item_id)
            rows.append(a.embedding)
        if not ids:
            raise GraphError("no embedded items to index")
        return cls(ids, np.asarray(rows, dtype=np.float64))

    def query(self, vector: Sequence[float], k: int) -> list[tuple[str, float]]:
        if k > len(self.item_ids):
            raise GraphError(f"k={k} exceeds index size {len(self.item_ids)}")
        v = np.asarray(vector, dtype=np.float64)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise GraphError("cosine similarity undefined for zero vector")
        sims = self._mat @ (v / norm)
        # ids are stored ascending, so a stable sort on -sims breaks ties by id
        top = np.argsort(-sims, kind="stable")[:k]
        return [(self.item_ids[i], float(sims[i])) for i in top]


def augment_cold_items(
    graph: InteractionGraph,
    corpus: Corpus,
    index: Optional[SimilarityIndex] = None,
    k: int = 3,
) -> InteractionGraph:
    """Connect zero-interaction articles through their k most similar warm items.

    Each cold article (absent from the graph, or present with degree 0) gains
    edges to every user adjacent to its top-k warm neighbors by embedding
    cosine. Warm nodes and existing edges are untouched; with no cold items the
    graph is returned as-is, so the operation is idempotent.
    """
    warm = [i for i in graph.item_ids if graph.item_degree(i) > 0]
    warm_set = set(warm)
    cold = [a.id for a in corpus if a.id not in warm_set]
    if not cold:
        return graph
    missing = [i for i in cold if i not in corpus or corpus[i].embedding is None]
    if missing:
        raise GraphError(f"cold items lack embeddings: {missing[:5]}")
    if index is None:
        embedded = [i for i in warm if i in corpus and corpus[i].embedding is not None]
        if len(embedded) < k:
            raise GraphError(f"need at least k={k} embedded warm items, have {len(embedded)}")
        index = SimilarityIndex.from_corpus(corpus, embedded)
    if len(index) < k:
        raise GraphError(f"need at least k={k} warm items in index, have {len(index)}")
    edges = graph.edges()
    for item_id in cold:
        users: set[str] = set()
        for neighbor, _ in index.query(corpus[item_id].embedding, k):
            users.update(graph.users_of(neighbor))
        edges.update((u, item_id) for u in users)
    items = set(graph.item_ids) | set(cold)
    return InteractionGraph(graph.user_ids, items, edges)


def dump_graph(graph: InteractionGraph, path: str | Path) -> None:
    """One user per line: user_id TAB space-separated item ids."""
    with Path(path).open("w") as fh:
        for u in graph.user_ids:
            fh.write(f"{u}\t{' '.join(graph.items_of(u))}\n")


def restore_graph(path: str | Path) -> InteractionGraph:
    edges = set()
    with Path(path).open() as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            user, _, items = line.partition("\t")
            for item in items.split():
                edges.add((user, item))
    return InteractionGraph({u for u, _ in edges}, {i for _, i in edges}, edges)
